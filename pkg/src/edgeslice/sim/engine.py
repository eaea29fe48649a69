"""Deterministic discrete-event engine for pipeline workloads on a cluster
snapshot.

Virtual time is integer microseconds; ties between events break on a
monotonically increasing sequence number, so a (scenario, seed) pair always
replays the exact same trajectory.

The engine executes role-tagged pods (role comes from the ``ROLE``
environment variable rendered into each workload):

    frame-source    emits a frame every tick and ships the raw frame to the
                    bridge over the local fabric
    stream-bridge   compresses each frame (cpu work), stamps the first
                    timestamp, and publishes into the source topic
    topic-broker    owns the namespace's topics; charges a small handling
                    cost per message
    frame-analytic  serial consume loop: fetch next frame (transfer), run
                    detection (cpu work), stamp the second timestamp, and
                    publish the processed frame asynchronously
    delay-monitor   drains the processed-frame topic
    web-sink        zero-demand drain
    cpu-stress      permanent backlog of parallel busywork

Latency is the gap between the two timestamps of the same frame.  The CPU
model honors reservations first and splits leftover capacity equally among
pods wanting more (water-filled); Guaranteed pods carry a per-period runtime
budget and throttle until the next period boundary once it runs out.  A pod
executes no faster than the parallelism its loops can actually use
(``PROC_PARALLELISM`` / ``WORKERS``).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ScenarioError, SeedError
from .cpu import allocate_rates, waterfill
from .network import TransferFabric
from .report import LatencySample, MetricsReport, SliceCounters
from .topics import TopicQueue

ROLE_ENV = "ROLE"
SOURCE_TOPIC = "sourceFrames"
PARSED_TOPIC = "parsedFrames"

_EPS_MS = 1e-6


@dataclass
class WorkloadParams:
    """Calibration constants for the synthetic pipeline workload.

    These are data, not code: experiment scenario files carry them and the
    engine never hardcodes a tuned value.
    """

    fps: float = 25.0
    demand_ms_light: float = 28.0
    demand_ms_heavy: float = 120.0
    heavy_prob: float = 0.045
    frame_kbits_light: float = 560.0
    frame_kbits_heavy: float = 1100.0
    jitter_frac: float = 0.15
    raw_frame_kbits: float = 2400.0
    camera_demand_ms: float = 0.5
    bridge_demand_ms: float = 4.0
    broker_demand_ms: float = 0.3
    monitor_demand_ms: float = 0.2
    retention_ms: int = 2000
    cfs_period_ms: int = 100
    loopback_mbps: int = 40000

    @classmethod
    def from_dict(cls, doc: dict) -> "WorkloadParams":
        mapping = {
            "fps": "fps",
            "demandMsLight": "demand_ms_light",
            "demandMsHeavy": "demand_ms_heavy",
            "heavyProb": "heavy_prob",
            "frameKbitsLight": "frame_kbits_light",
            "frameKbitsHeavy": "frame_kbits_heavy",
            "jitterFrac": "jitter_frac",
            "rawFrameKbits": "raw_frame_kbits",
            "cameraDemandMs": "camera_demand_ms",
            "bridgeDemandMs": "bridge_demand_ms",
            "brokerDemandMs": "broker_demand_ms",
            "monitorDemandMs": "monitor_demand_ms",
            "retentionMs": "retention_ms",
            "cfsPeriodMs": "cfs_period_ms",
            "loopbackMbps": "loopback_mbps",
        }
        kwargs = {}
        for wire, attr in mapping.items():
            if wire in doc:
                kwargs[attr] = doc[wire]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "demandMsLight": self.demand_ms_light,
            "demandMsHeavy": self.demand_ms_heavy,
            "heavyProb": self.heavy_prob,
            "frameKbitsLight": self.frame_kbits_light,
            "frameKbitsHeavy": self.frame_kbits_heavy,
            "jitterFrac": self.jitter_frac,
            "rawFrameKbits": self.raw_frame_kbits,
            "cameraDemandMs": self.camera_demand_ms,
            "bridgeDemandMs": self.bridge_demand_ms,
            "brokerDemandMs": self.broker_demand_ms,
            "monitorDemandMs": self.monitor_demand_ms,
            "retentionMs": self.retention_ms,
            "cfsPeriodMs": self.cfs_period_ms,
            "loopbackMbps": self.loopback_mbps,
        }


@dataclass
class SimScenario:
    """Everything one deterministic run needs: a cluster snapshot, workload
    calibration, the phase layout, activation windows, and a seed."""

    cluster: dict  # canonical cluster state dump
    duration_ms: int
    seed: int | None
    workload: WorkloadParams = field(default_factory=WorkloadParams)
    phases: list[dict] = field(default_factory=list)  # {"name","startMs","endMs"}
    activation_windows: dict[str, list[dict]] = field(default_factory=dict)

    def resolved_phases(self) -> list[dict]:
        if self.phases:
            return self.phases
        return [{"name": "all", "startMs": 0, "endMs": self.duration_ms}]

    @classmethod
    def from_dict(cls, doc: dict) -> "SimScenario":
        return cls(
            cluster=doc["cluster"],
            duration_ms=int(doc["durationMs"]),
            seed=doc.get("seed"),
            workload=WorkloadParams.from_dict(doc.get("workload", {})),
            phases=list(doc.get("phases", [])),
            activation_windows={k: list(v) for k, v in
                                doc.get("activationWindows", {}).items()},
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "SimScenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "cluster": self.cluster,
            "durationMs": self.duration_ms,
            "seed": self.seed,
            "workload": self.workload.to_dict(),
            "phases": self.phases,
            "activationWindows": self.activation_windows,
        }


@dataclass
class Frame:
    stream: str  # namespace of the originating camera
    index: int
    size_bits: int
    demand_ms: float
    raw_bits: int
    t1_us: int | None = None
    enqueued_us: int | None = None
    consume_started_us: int | None = None

    @property
    def uid(self) -> tuple[str, int]:
        return (self.stream, self.index)


# ---------------------------------------------------------------------------
# runtime pod / loop structures

class SimPod:
    def __init__(self, *, pod_id: str, namespace: str, workload: str, node: str,
                 qos: str, requests_mc: int, limits_mc: int, env: dict[str, str],
                 ingress_mbps: int | None, egress_mbps: int | None,
                 period_ms: int):
        self.pod_id = pod_id
        self.namespace = namespace
        self.workload = workload
        self.node = node
        self.qos = qos
        self.env = env
        self.ingress_mbps = ingress_mbps
        self.egress_mbps = egress_mbps
        self.reserved_cores = requests_mc / 1000.0
        self.guaranteed = qos == "Guaranteed"
        self.budget_full_ms = (limits_mc * period_ms / 1000.0) if self.guaranteed else None
        self.budget_ms = self.budget_full_ms
        self.throttled = False
        self.throttled_accum_us = 0
        self.active = True
        self.loops: list[Loop] = []
        self.rate = 0.0  # cores, set by the node scheduler

    @property
    def key(self) -> str:
        return f"{self.namespace}/{self.pod_id}"

    def want(self) -> float:
        if not self.active or self.throttled:
            return 0.0
        return sum(loop.want() for loop in self.loops)


class Loop:
    """A serial schedulable unit inside a pod.

    At most one cpu work item runs at a time; additional items queue FIFO.
    ``parallelism`` caps how fast the item's runtime can be consumed
    (runtime-ms per wall-ms).
    """

    def __init__(self, engine: "Engine", pod: SimPod, parallelism: float):
        self.engine = engine
        self.pod = pod
        self.parallelism = parallelism
        self.remaining_ms: float | None = None
        self.on_done = None
        self.pending: list = []
        self.rate = 0.0
        self.infinite = False

    def want(self) -> float:
        if self.infinite or self.remaining_ms is not None:
            return self.parallelism
        return 0.0

    def push_work(self, demand_ms: float, on_done):
        if self.remaining_ms is None and not self.infinite:
            self._start(demand_ms, on_done)
            self.engine.node_of(self.pod).recompute()
        else:
            self.pending.append((demand_ms, on_done))

    def _start(self, demand_ms: float, on_done):
        self.remaining_ms = max(0.0, demand_ms)
        self.on_done = on_done

    def finish_current(self):
        callback = self.on_done
        self.remaining_ms = None
        self.on_done = None
        if self.pending:
            demand_ms, nxt = self.pending.pop(0)
            self._start(demand_ms, nxt)
        if callback is not None:
            callback()


class NodeSim:
    def __init__(self, engine: "Engine", name: str, allocatable_mc: int):
        self.engine = engine
        self.name = name
        self.cores = allocatable_mc / 1000.0
        self.pods: list[SimPod] = []
        self.epoch = 0
        self.last_update_us = 0

    def advance(self, now_us: int):
        delta_us = now_us - self.last_update_us
        if delta_us <= 0:
            return
        delta_ms = delta_us / 1000.0
        for pod in self.pods:
            if pod.throttled:
                pod.throttled_accum_us += delta_us
            if pod.rate > 0 and pod.budget_ms is not None:
                pod.budget_ms -= pod.rate * delta_ms
                if pod.budget_ms < 0:
                    pod.budget_ms = 0.0
            for loop in pod.loops:
                if loop.rate > 0 and loop.remaining_ms is not None and not loop.infinite:
                    loop.remaining_ms -= loop.rate * delta_ms
                    if loop.remaining_ms < 0:
                        loop.remaining_ms = 0.0
        self.last_update_us = now_us

    def recompute(self):
        now = self.engine.now_us
        self.advance(now)
        self.epoch += 1
        epoch = self.epoch

        runnable = [(pod.key, pod.want(), pod.reserved_cores if pod.guaranteed else 0.0)
                    for pod in sorted(self.pods, key=lambda p: p.key) if pod.want() > 0]
        rates = allocate_rates(self.cores, runnable)

        for pod in self.pods:
            pod.rate = rates.get(pod.key, 0.0)
            active_loops = [l for l in pod.loops if l.want() > 0]
            loop_rates = waterfill(
                pod.rate,
                [(i, loop.parallelism) for i, loop in enumerate(active_loops)])
            for loop in pod.loops:
                loop.rate = 0.0
            for i, loop in enumerate(active_loops):
                loop.rate = loop_rates.get(i, 0.0)

        # project completion and budget-exhaustion events
        for pod in self.pods:
            if pod.rate > 0 and pod.budget_ms is not None and pod.budget_ms < math.inf:
                eta = self._eta_us(now, pod.budget_ms, pod.rate)
                self.engine.schedule(eta, lambda p=pod, e=epoch: self._on_exhaust(p, e))
            for loop in pod.loops:
                if (loop.rate > 0 and loop.remaining_ms is not None
                        and not loop.infinite):
                    eta = self._eta_us(now, loop.remaining_ms, loop.rate)
                    self.engine.schedule(
                        eta, lambda l=loop, e=epoch: self._on_loop_done(l, e))

    @staticmethod
    def _eta_us(now_us: int, remaining_ms: float, rate: float) -> int:
        return now_us + max(0, math.ceil(remaining_ms / rate * 1000.0))

    def _on_loop_done(self, loop: Loop, epoch: int):
        if epoch != self.epoch:
            return
        self.advance(self.engine.now_us)
        if loop.remaining_ms is None or loop.remaining_ms > _EPS_MS:
            self.recompute()
            return
        loop.finish_current()
        self.recompute()

    def _on_exhaust(self, pod: SimPod, epoch: int):
        if epoch != self.epoch:
            return
        self.advance(self.engine.now_us)
        if pod.budget_ms is None or pod.budget_ms > _EPS_MS:
            self.recompute()
            return
        pod.budget_ms = 0.0
        pod.throttled = True
        self.recompute()

    def on_period_boundary(self):
        self.advance(self.engine.now_us)
        for pod in self.pods:
            if pod.budget_full_ms is not None:
                pod.budget_ms = pod.budget_full_ms
                pod.throttled = False
        self.recompute()


# ---------------------------------------------------------------------------
# role behaviors

class CameraBehavior:
    def __init__(self, engine: "Engine", pod: SimPod):
        self.engine = engine
        self.pod = pod
        self.loop = Loop(engine, pod, 1.0)
        pod.loops.append(self.loop)
        target = pod.env.get("TARGET_ACF")
        if not target:
            raise ScenarioError(f"{pod.key}: frame-source requires TARGET_ACF")
        self.bridge = engine.pod_by_workload(pod.namespace, target)
        self.index = 0
        self.interval_us = max(1, round(1_000_000 / engine.params.fps))
        self.rng = engine.stream_rng(pod.namespace)

    def start(self):
        self.engine.schedule(0, self.tick)

    def tick(self):
        if self.engine.now_us >= self.engine.duration_us:
            return
        if self.pod.active:
            frame = self.draw_frame()
            self.engine.counters_for(self.pod.namespace).generated += 1
            self.loop.push_work(
                self.engine.params.camera_demand_ms,
                lambda f=frame: self.ship_raw(f))
        self.index += 1
        self.engine.schedule(self.index * self.interval_us, self.tick)

    def draw_frame(self) -> Frame:
        params = self.engine.params
        heavy = self.rng.random() < params.heavy_prob
        jitter = 1.0 + params.jitter_frac * (2.0 * self.rng.random() - 1.0)
        demand = (params.demand_ms_heavy if heavy else params.demand_ms_light) * jitter
        kbits = (params.frame_kbits_heavy if heavy else params.frame_kbits_light) * jitter
        return Frame(
            stream=self.pod.namespace,
            index=self.index,
            size_bits=max(0, round(kbits * 1000)),
            demand_ms=demand,
            raw_bits=max(0, round(params.raw_frame_kbits * 1000)),
        )

    def ship_raw(self, frame: Frame):
        self.engine.send(self.pod, self.bridge, frame.raw_bits, frame,
                         lambda f=frame: self.engine.behavior_of(self.bridge).receive_raw(f))


class BridgeBehavior:
    def __init__(self, engine: "Engine", pod: SimPod):
        self.engine = engine
        self.pod = pod
        self.loop = Loop(engine, pod, _env_float(pod, "PROC_PARALLELISM", 1.0))
        pod.loops.append(self.loop)
        broker = pod.env.get("BROKER_ACF")
        if not broker:
            raise ScenarioError(f"{pod.key}: stream-bridge requires BROKER_ACF")
        self.broker = engine.pod_by_workload(pod.namespace, broker)

    def receive_raw(self, frame: Frame):
        self.loop.push_work(self.engine.params.bridge_demand_ms,
                            lambda f=frame: self.publish(f))

    def publish(self, frame: Frame):
        # The first timestamp lands right before the store begins; transfer
        # and broker ingest are part of the measured latency.
        frame.t1_us = self.engine.now_us
        self.engine.send(
            self.pod, self.broker, frame.size_bits, frame,
            lambda f=frame: self.engine.behavior_of(self.broker).ingest(
                f, SOURCE_TOPIC))


class BrokerBehavior:
    def __init__(self, engine: "Engine", pod: SimPod):
        self.engine = engine
        self.pod = pod
        self.loop = Loop(engine, pod, _env_float(pod, "PROC_PARALLELISM", 1.0))
        pod.loops.append(self.loop)
        engine.register_topic(pod.namespace, SOURCE_TOPIC, pod)
        engine.register_topic(pod.namespace, PARSED_TOPIC, pod)

    def ingest(self, frame: Frame, topic: str):
        self.loop.push_work(
            self.engine.params.broker_demand_ms,
            lambda f=frame, t=topic: self.engine.topic_enqueue(
                self.pod.namespace, t, f))

    def serve_fetch(self, on_served):
        """Charge the per-message handling cost before a consumer fetch."""
        self.loop.push_work(self.engine.params.broker_demand_ms, on_served)


class ConsumerBehavior:
    """Serial fetch-then-work consumer; the base for analytic, monitor and
    sink roles."""

    work_demand_attr = "monitor_demand_ms"
    records_latency = False

    def __init__(self, engine: "Engine", pod: SimPod, source_ns: str,
                 source_topic: str, parallelism: float):
        self.engine = engine
        self.pod = pod
        self.loop = Loop(engine, pod, parallelism)
        pod.loops.append(self.loop)
        self.source_ns = source_ns
        self.source_topic = source_topic
        self.busy = False
        self.waiting = False
        engine.register_consumer(self)

    def start(self):
        self.engine.schedule(0, self.try_consume)

    def try_consume(self):
        self.waiting = False
        if self.busy or not self.pod.active:
            return
        queue = self.engine.topic(self.source_ns, self.source_topic)
        frame = queue.consume(self.engine.now_us)
        if frame is None:
            if not self.waiting:
                self.waiting = True
                queue.subscribe(self.try_consume)
            return
        self.busy = True
        frame.consume_started_us = self.engine.now_us
        broker = self.engine.topic_owner(self.source_ns, self.source_topic)
        self.engine.behavior_of(broker).serve_fetch(
            lambda f=frame: self.fetch(f, broker))

    def fetch(self, frame: Frame, broker: SimPod):
        sent = self.engine.send(broker, self.pod, frame.size_bits, frame,
                                lambda f=frame: self.begin_work(f))
        if not sent:
            # Isolation dropped the fetch; move on to the next frame.
            self.busy = False
            self.engine.schedule(self.engine.now_us, self.try_consume)

    def begin_work(self, frame: Frame):
        self.loop.push_work(self.work_demand(frame),
                            lambda f=frame: self.finish(f))

    def work_demand(self, frame: Frame) -> float:
        return getattr(self.engine.params, self.work_demand_attr)

    def finish(self, frame: Frame):
        self.busy = False
        self.engine.schedule(self.engine.now_us, self.try_consume)


class AnalyticBehavior(ConsumerBehavior):
    records_latency = True

    def __init__(self, engine: "Engine", pod: SimPod, source_ns: str,
                 source_topic: str, parallelism: float):
        super().__init__(engine, pod, source_ns, source_topic, parallelism)
        self._work_started_throttle_us = 0

    def work_demand(self, frame: Frame) -> float:
        return frame.demand_ms

    def begin_work(self, frame: Frame):
        self._work_started_throttle_us = self.pod.throttled_accum_us
        super().begin_work(frame)

    def finish(self, frame: Frame):
        now = self.engine.now_us
        if frame.t1_us is not None:
            throttle_us = self.pod.throttled_accum_us - self._work_started_throttle_us
            queue_wait_us = 0
            if frame.enqueued_us is not None and frame.consume_started_us is not None:
                queue_wait_us = frame.consume_started_us - frame.enqueued_us
            self.engine.record_sample(frame, t2_us=now,
                                      queue_wait_us=queue_wait_us,
                                      throttle_us=throttle_us)
        # Publish the processed frame asynchronously; the loop is free to
        # fetch the next frame while the transfer is in flight.
        broker = self.engine.topic_owner(self.source_ns, self.source_topic)
        self.engine.send(
            self.pod, broker, frame.size_bits, frame,
            lambda f=frame: self.engine.behavior_of(broker).ingest(f, PARSED_TOPIC))
        self.busy = False
        self.engine.schedule(now, self.try_consume)


class MonitorBehavior(ConsumerBehavior):
    work_demand_attr = "monitor_demand_ms"


class SinkBehavior(ConsumerBehavior):
    def work_demand(self, frame: Frame) -> float:
        return 0.0


class StressBehavior:
    def __init__(self, engine: "Engine", pod: SimPod):
        self.engine = engine
        self.pod = pod
        loop = Loop(engine, pod, _env_float(pod, "WORKERS", 4.0))
        loop.infinite = True
        pod.loops.append(loop)


def _env_float(pod: SimPod, key: str, default: float) -> float:
    raw = pod.env.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"{pod.key}: {key} must be numeric, got {raw!r}")


# ---------------------------------------------------------------------------
# the engine

class Engine:
    def __init__(self, scenario: SimScenario):
        if scenario.seed is None:
            raise SeedError("scenario has no seed; deterministic replay requires one")
        if scenario.duration_ms <= 0:
            raise ScenarioError("durationMs must be positive")
        self.scenario = scenario
        self.params = scenario.workload
        self.duration_us = scenario.duration_ms * 1000
        self.now_us = 0
        self._heap: list = []
        self._seq = 0

        cluster = scenario.cluster
        self.nodes: dict[str, NodeSim] = {}
        for name, doc in sorted(cluster.get("nodes", {}).items()):
            self.nodes[name] = NodeSim(self, name,
                                       doc["allocatable"]["cpuMillicores"])
        links = {}
        for entry in cluster.get("links", []):
            a, b = entry["between"]
            key = (a, b) if a <= b else (b, a)
            links[key] = int(entry["mbps"])
        self.fabric = TransferFabric(
            link_mbps=links,
            default_link_mbps=int(cluster.get("defaultLinkMbps", 1000)),
            loopback_mbps=self.params.loopback_mbps,
        )

        self.netpol: dict[str, set[str]] = {}
        self.pods: dict[str, SimPod] = {}
        self._by_workload: dict[tuple[str, str], SimPod] = {}
        period_ms = self.params.cfs_period_ms
        for ns_name, ns in sorted(cluster.get("namespaces", {}).items()):
            policy = ns.get("networkPolicy")
            self.netpol[ns_name] = set(
                [] if policy is None else policy.get("allowFromNamespaces", []))
            bw = ns.get("bandwidthPolicies", {})
            for pod_id, pod_doc in sorted(ns.get("pods", {}).items()):
                if pod_doc.get("phase") != "Running":
                    continue
                workload = pod_doc["workload"]
                limits = bw.get(workload, {})
                pod = SimPod(
                    pod_id=pod_id,
                    namespace=ns_name,
                    workload=workload,
                    node=pod_doc["assignedNode"],
                    qos=pod_doc.get("qosClass", "BestEffort"),
                    requests_mc=pod_doc["requests"]["cpuMillicores"],
                    limits_mc=pod_doc["limits"]["cpuMillicores"],
                    env={k: str(v) for k, v in pod_doc.get("env", {}).items()},
                    ingress_mbps=limits.get("ingressMbps"),
                    egress_mbps=limits.get("egressMbps"),
                    period_ms=period_ms,
                )
                if pod.node not in self.nodes:
                    raise ScenarioError(f"{pod.key}: unknown node {pod.node!r}")
                self.nodes[pod.node].pods.append(pod)
                self.pods[pod.key] = pod
                self._by_workload[(ns_name, workload)] = pod

        self.topics: dict[tuple[str, str], TopicQueue] = {}
        self._topic_owner: dict[tuple[str, str], SimPod] = {}
        self.behaviors: dict[str, object] = {}
        self._consumers: list[ConsumerBehavior] = []
        self._cameras: list[CameraBehavior] = []

        self.report = MetricsReport(
            seed=scenario.seed,
            duration_ms=scenario.duration_ms,
            phases=scenario.resolved_phases(),
        )
        self._counters: dict[str, SliceCounters] = {}
        self._terminal: dict[tuple[str, int], str] = {}
        self._stream_roots: dict[str, np.random.Generator] = {}
        self._build_behaviors()
        self._wire_activation_windows()

    # -- construction helpers ------------------------------------------------

    def _build_behaviors(self):
        ordered = sorted(self.pods.values(), key=lambda p: p.key)
        # Brokers first so topics exist before consumers bind to them.
        for pod in ordered:
            if pod.env.get(ROLE_ENV) == "topic-broker":
                self.behaviors[pod.key] = BrokerBehavior(self, pod)
        for pod in ordered:
            role = pod.env.get(ROLE_ENV)
            if role in (None, "", "topic-broker"):
                continue
            if role == "frame-source":
                camera = CameraBehavior(self, pod)
                self.behaviors[pod.key] = camera
                self._cameras.append(camera)
            elif role == "stream-bridge":
                self.behaviors[pod.key] = BridgeBehavior(self, pod)
            elif role == "frame-analytic":
                sources = pod.env.get("CONSUME_FROM", SOURCE_TOPIC)
                parallelism = _env_float(pod, "PROC_PARALLELISM", 1.0)
                behaviors = []
                for spec in sources.split(","):
                    ns, topic = self._parse_topic_ref(pod, spec.strip())
                    behaviors.append(AnalyticBehavior(self, pod, ns, topic,
                                                      parallelism))
                self.behaviors[pod.key] = behaviors
            elif role == "delay-monitor":
                spec = pod.env.get("CONSUME_FROM", PARSED_TOPIC)
                ns, topic = self._parse_topic_ref(pod, spec)
                self.behaviors[pod.key] = MonitorBehavior(
                    self, pod, ns, topic, _env_float(pod, "PROC_PARALLELISM", 1.0))
            elif role == "web-sink":
                spec = pod.env.get("CONSUME_FROM", PARSED_TOPIC)
                ns, topic = self._parse_topic_ref(pod, spec)
                self.behaviors[pod.key] = SinkBehavior(
                    self, pod, ns, topic, 1.0)
            elif role == "cpu-stress":
                self.behaviors[pod.key] = StressBehavior(self, pod)
            else:
                raise ScenarioError(f"{pod.key}: unknown ROLE {role!r}")
        for ns in sorted({c.pod.namespace for c in self._cameras}):
            self._counters[ns] = SliceCounters()

    def _parse_topic_ref(self, pod: SimPod, spec: str) -> tuple[str, str]:
        if ":" in spec:
            ns, topic = spec.split(":", 1)
        else:
            ns, topic = pod.namespace, spec
        if (ns, topic) not in self.topics:
            raise ScenarioError(
                f"{pod.key}: no broker hosts topic {ns}:{topic} "
                "(is a topic-broker pod deployed in that namespace?)")
        return ns, topic

    def _wire_activation_windows(self):
        for ns, windows in self.scenario.activation_windows.items():
            pods = [p for p in self.pods.values() if p.namespace == ns]
            if not pods:
                raise ScenarioError(
                    f"activation window targets unknown namespace {ns!r}")
            for pod in pods:
                pod.active = False
            for window in windows:
                start = int(window["startMs"]) * 1000
                end = int(window["endMs"]) * 1000
                self.schedule(start, lambda ps=pods: self._set_active(ps, True))
                self.schedule(end, lambda ps=pods: self._set_active(ps, False))

    def _set_active(self, pods: list[SimPod], value: bool):
        touched = set()
        for pod in pods:
            pod.active = value
            touched.add(pod.node)
        for node in sorted(touched):
            self.nodes[node].recompute()
        if value:
            for consumer in self._consumers:
                if consumer.pod in pods:
                    consumer.try_consume()

    # -- lookups -------------------------------------------------------------

    def node_of(self, pod: SimPod) -> NodeSim:
        return self.nodes[pod.node]

    def pod_by_workload(self, namespace: str, workload: str) -> SimPod:
        pod = self._by_workload.get((namespace, workload))
        if pod is None:
            raise ScenarioError(f"no running pod for workload "
                                f"{namespace}/{workload}")
        return pod

    def behavior_of(self, pod: SimPod):
        behavior = self.behaviors.get(pod.key)
        if behavior is None:
            raise ScenarioError(f"pod {pod.key} has no behavior (missing ROLE?)")
        return behavior

    def register_topic(self, namespace: str, name: str, owner: SimPod):
        key = (namespace, name)
        queue = TopicQueue(namespace=namespace, name=name,
                           retention_ms=self.params.retention_ms)
        queue.on_drop = lambda frame, ns=namespace: self._on_retention_drop(frame)
        self.topics[key] = queue
        self._topic_owner[key] = owner

    def register_consumer(self, consumer: ConsumerBehavior):
        self._consumers.append(consumer)

    def topic(self, namespace: str, name: str) -> TopicQueue:
        return self.topics[(namespace, name)]

    def topic_owner(self, namespace: str, name: str) -> SimPod:
        return self._topic_owner[(namespace, name)]

    def counters_for(self, stream: str) -> SliceCounters:
        return self._counters.setdefault(stream, SliceCounters())

    def stream_rng(self, namespace: str) -> np.random.Generator:
        rng = self._stream_roots.get(namespace)
        if rng is None:
            camera_namespaces = sorted({p.namespace for p in self.pods.values()
                                        if p.env.get(ROLE_ENV) == "frame-source"})
            index = camera_namespaces.index(namespace)
            seq = np.random.SeedSequence([int(self.scenario.seed), index])
            rng = np.random.Generator(np.random.PCG64(seq))
            self._stream_roots[namespace] = rng
        return rng

    # -- event plumbing --------------------------------------------------------

    def schedule(self, at_us: int, fn):
        heapq.heappush(self._heap, (max(at_us, self.now_us), self._seq, fn))
        self._seq += 1

    def run(self) -> MetricsReport:
        for camera in self._cameras:
            camera.start()
        for consumer in self._consumers:
            consumer.start()
        for name in sorted(self.nodes):
            self._schedule_boundary(name, 1)
            self.nodes[name].recompute()
        while self._heap and self._heap[0][0] <= self.duration_us:
            at, _seq, fn = heapq.heappop(self._heap)
            self.now_us = at
            fn()
        self.now_us = self.duration_us
        return self.report

    def _schedule_boundary(self, node_name: str, index: int):
        period_us = self.params.cfs_period_ms * 1000

        def boundary():
            self.nodes[node_name].on_period_boundary()
            self._schedule_boundary(node_name, index + 1)

        self.schedule(index * period_us, boundary)

    # -- data path ---------------------------------------------------------

    def traffic_permitted(self, src: SimPod, dst: SimPod) -> bool:
        if src.namespace == dst.namespace:
            return True
        if src.namespace == "system":
            return True
        return src.namespace in self.netpol.get(dst.namespace, set())

    def send(self, src: SimPod, dst: SimPod, size_bits: int, frame: Frame | None,
             on_arrival) -> bool:
        """Start a transfer; returns False (and counts a drop) when namespace
        isolation blocks it."""
        if not self.traffic_permitted(src, dst):
            if frame is not None:
                self._terminate(frame, "blocked")
            return False
        arrival = self.fabric.transfer_complete_time(
            now_us=self.now_us, size_bits=size_bits,
            src_pod=src.key, dst_pod=dst.key,
            src_node=src.node, dst_node=dst.node,
            egress_mbps=src.egress_mbps, ingress_mbps=dst.ingress_mbps)
        self.schedule(arrival, on_arrival)
        return True

    def topic_enqueue(self, namespace: str, topic: str, frame: Frame):
        queue = self.topic(namespace, topic)
        if topic == SOURCE_TOPIC:
            frame.enqueued_us = self.now_us
        waiters = queue.enqueue(frame, self.now_us)
        for waiter in waiters:
            self.schedule(self.now_us, waiter)

    # -- accounting ----------------------------------------------------------

    def _phase_at(self, t_us: int) -> str | None:
        t_ms = t_us / 1000.0
        for phase in self.report.phases:
            if phase["startMs"] <= t_ms < phase["endMs"]:
                return phase["name"]
        return None

    def record_sample(self, frame: Frame, *, t2_us: int, queue_wait_us: int,
                      throttle_us: int):
        if self._terminal.get(frame.uid) is not None:
            return
        self._terminal[frame.uid] = "sampled"
        counters = self.counters_for(frame.stream)
        counters.sampled += 1
        phase = self._phase_at(t2_us) or "outside"
        self.report.samples.append(LatencySample(
            frame_id=frame.index,
            slice_id=frame.stream,
            phase=phase,
            latency_ms=(t2_us - frame.t1_us) / 1000.0,
            stamped_at_us=t2_us,
            queue_wait_ms=queue_wait_us / 1000.0,
            throttle_wait_ms=throttle_us / 1000.0,
            demand_ms=frame.demand_ms,
            size_bits=frame.size_bits,
        ))

    def _on_retention_drop(self, frame: Frame):
        self._terminate(frame, "retention")

    def _terminate(self, frame: Frame, kind: str):
        if self._terminal.get(frame.uid) is not None:
            # A frame already measured can expire later in the processed
            # topic; that is not a loss of a measurement.
            return
        self._terminal[frame.uid] = kind
        counters = self.counters_for(frame.stream)
        if kind == "retention":
            counters.dropped_retention += 1
        else:
            counters.dropped_blocked += 1
        phase = self._phase_at(self.now_us) or "outside"
        key = (frame.stream, phase)
        self.report.drops_by_phase[key] = self.report.drops_by_phase.get(key, 0) + 1


def run(scenario: SimScenario) -> MetricsReport:
    """Execute one scenario to completion and return its metrics."""
    engine = Engine(scenario)
    report = engine.run()
    for ns, counters in engine._counters.items():
        report.counters[ns] = counters
    return report
