"""End-to-end latency experiments driven through the public management API.

Each experiment spins up the full service (registry, templates, cluster,
orchestrator, HTTP app), deploys slices by POSTing descriptors exactly like
an external management client would, snapshots the cluster through the
read-only state endpoint, and replays the workload on that snapshot with the
deterministic engine, once per seed.

Experiments never touch the cluster object directly; the HTTP surface is the
only door.  Every experiment evaluates its acceptance predicates on
seed-averaged statistics and reports them alongside the raw per-seed data so
variance claims stay auditable.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from fastapi.testclient import TestClient

from .acf_registry import load_acf_dir
from .api import create_app
from .cluster import load_topology
from .meco import Orchestrator
from .sim.engine import SimScenario, WorkloadParams, run as run_sim
from .sim.report import MetricsReport
from .templates import load_template_dir

CONFIG_DIR = Path(__file__).parent / "configs"

EXPERIMENT_NAMES = ("isolation", "bandwidth", "cpu", "sharing")

# Per-component cpu requests (millicores) used by the Guaranteed pipeline,
# with the analytic on its own worker and everything else colocated.
PIPELINE_CPU = {
    "cameraSimulator": 100,
    "kafkaBridge": 500,
    "kafkaBroker": 500,
    "analyticDelayMonitor": 100,
}
PIPELINE_MEMORY = {
    "cameraSimulator": 128,
    "kafkaBridge": 512,
    "kafkaBroker": 768,
    "analyticDelayMonitor": 128,
}
ANALYTIC_MEMORY = 1536
BROKER_STORAGE = 1024
PIPELINE_NODE = "kw1"
ANALYTIC_NODE = "kw2"


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    parameters: dict
    seeds: tuple[int, ...]
    out_dir: Path | None = None

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ValueError(f"unknown experiment {self.name!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")


@dataclass
class Predicate:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    name: str
    tables: dict
    predicates: list[Predicate]
    per_seed: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.predicates)

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "tables": self.tables,
            "predicates": [
                {"name": p.name, "passed": p.passed, "detail": p.detail}
                for p in self.predicates
            ],
            "perSeed": self.per_seed,
        }


class ApiHarness:
    """The management-client role: talks HTTP, owns no cluster internals."""

    def __init__(self, cluster_file=None, template_dir=None, acf_dir=None):
        cluster = load_topology(cluster_file or CONFIG_DIR / "cluster.json")
        templates = load_template_dir(template_dir or CONFIG_DIR / "templates")
        registry = load_acf_dir(acf_dir or CONFIG_DIR / "acfs")
        self.orchestrator = Orchestrator(cluster, registry, templates)
        self.app = create_app(self.orchestrator)
        self.client = TestClient(self.app, raise_server_exceptions=True)

    def post_mapss(self, descriptor: dict):
        return self.client.post("/mapss_mm/v1/mapss", content=json.dumps(descriptor))

    def delete_mapss(self, mapss_id: str):
        return self.client.delete(f"/mapss_mm/v1/mapss/{mapss_id}")

    def instances(self) -> list[dict]:
        return self.client.get("/mapss_mm/v1/mapss").json()["items"]

    def cluster_snapshot(self) -> dict:
        return self.client.get("/cluster/v1/state").json()


def load_experiment_config(path: str | Path | None = None) -> dict:
    path = Path(path) if path else CONFIG_DIR / "experiments.json"
    return json.loads(path.read_text(encoding="utf-8"))


def experiment_settings(config: dict, name: str) -> tuple[int, tuple[int, ...]]:
    """Effective (phaseSeconds, seeds) for one experiment: the experiment's
    own section wins over the global defaults."""
    section = config.get(name, {})
    phase_seconds = int(section.get("phaseSeconds",
                                    config.get("phaseSeconds", 60)))
    seeds = tuple(section.get("seeds", config.get("seeds", [1])))
    return phase_seconds, seeds


# ---------------------------------------------------------------------------
# descriptor builders

def _acf(acf_id: str, image: str, *, cpu: int | None, memory: int | None,
         storage: int = 0, qos: str, node: str | None, params: dict | None = None):
    doc: dict = {"acfId": acf_id, "imageRef": image, "qosClass": qos}
    if cpu is not None:
        doc["resources"] = {"cpuMillicores": cpu, "memoryMiB": memory or 0,
                            "storageMiB": storage}
    if node:
        doc["nodeSelector"] = node
    if params:
        doc["customParams"] = params
    return doc


def pipeline_descriptor(mapss_id: str, *, qos: str, analytic_cpu: int = 1800,
                        link_mbps: int | None = None,
                        allow_from: str | None = None,
                        analytic_params: dict | None = None) -> dict:
    """The five-component video pipeline as a slice-subnet descriptor."""
    guaranteed = qos == "Guaranteed"

    def res(cpu: int, memory: int):
        return (cpu, memory) if guaranteed else (None, None)

    broker_params = {"ALLOW_FROM": allow_from} if allow_from else None
    acfs = [
        _acf("cameraSimulator", "cameraSimulator:1.0",
             cpu=res(PIPELINE_CPU["cameraSimulator"], 128)[0],
             memory=res(0, PIPELINE_MEMORY["cameraSimulator"])[1],
             qos=qos, node=PIPELINE_NODE),
        _acf("kafkaBridge", "kafkaBridge:1.0",
             cpu=res(PIPELINE_CPU["kafkaBridge"], 512)[0],
             memory=res(0, PIPELINE_MEMORY["kafkaBridge"])[1],
             qos=qos, node=PIPELINE_NODE),
        _acf("kafkaBroker", "kafkaBroker:1.0",
             cpu=res(PIPELINE_CPU["kafkaBroker"], 768)[0],
             memory=res(0, PIPELINE_MEMORY["kafkaBroker"])[1],
             storage=BROKER_STORAGE if guaranteed else 0,
             qos=qos, node=PIPELINE_NODE, params=broker_params),
        _acf("analyticDelayMonitor", "analyticDelayMonitor:1.0",
             cpu=res(PIPELINE_CPU["analyticDelayMonitor"], 128)[0],
             memory=res(0, PIPELINE_MEMORY["analyticDelayMonitor"])[1],
             qos=qos, node=PIPELINE_NODE),
        _acf("frameAnalytic", "frameAnalytic:1.0",
             cpu=analytic_cpu if guaranteed else None,
             memory=ANALYTIC_MEMORY if guaranteed else None,
             qos=qos, node=ANALYTIC_NODE, params=analytic_params),
    ]
    subnet_cpu = sum(PIPELINE_CPU.values()) + analytic_cpu if guaranteed else 0
    subnet_mem = (sum(PIPELINE_MEMORY.values()) + ANALYTIC_MEMORY) if guaranteed else 0
    subnet_sto = BROKER_STORAGE if guaranteed else 0
    links = []
    if link_mbps is not None:
        links.append({"from": "kafkaBridge", "to": "frameAnalytic",
                      "maxBandwidthMbps": link_mbps})
    return {
        "mapssId": mapss_id,
        "description": f"video analytics pipeline ({qos})",
        "mapssImplTemplateId": "demo-pipeline",
        "subnetResources": {"cpuMillicores": subnet_cpu, "memoryMiB": subnet_mem,
                            "storageMiB": subnet_sto},
        "acfs": acfs,
        "virtualLinks": links,
    }


def headless_descriptor(mapss_id: str, *, allow_from: str) -> dict:
    """Camera/bridge/broker/monitor pipeline whose analytic lives elsewhere."""
    acfs = [
        _acf("cameraSimulator", "cameraSimulator:1.0",
             cpu=PIPELINE_CPU["cameraSimulator"],
             memory=PIPELINE_MEMORY["cameraSimulator"],
             qos="Guaranteed", node=PIPELINE_NODE),
        _acf("kafkaBridge", "kafkaBridge:1.0",
             cpu=PIPELINE_CPU["kafkaBridge"],
             memory=PIPELINE_MEMORY["kafkaBridge"],
             qos="Guaranteed", node=PIPELINE_NODE),
        _acf("kafkaBroker", "kafkaBroker:1.0",
             cpu=PIPELINE_CPU["kafkaBroker"],
             memory=PIPELINE_MEMORY["kafkaBroker"],
             storage=BROKER_STORAGE,
             qos="Guaranteed", node=PIPELINE_NODE,
             params={"ALLOW_FROM": allow_from}),
        _acf("analyticDelayMonitor", "analyticDelayMonitor:1.0",
             cpu=PIPELINE_CPU["analyticDelayMonitor"],
             memory=PIPELINE_MEMORY["analyticDelayMonitor"],
             qos="Guaranteed", node=PIPELINE_NODE),
    ]
    return {
        "mapssId": mapss_id,
        "description": "pipeline without a local analytic",
        "mapssImplTemplateId": "pipeline-headless",
        "subnetResources": {
            "cpuMillicores": sum(PIPELINE_CPU.values()),
            "memoryMiB": sum(PIPELINE_MEMORY.values()),
            "storageMiB": BROKER_STORAGE,
        },
        "acfs": acfs,
        "virtualLinks": [],
    }


def shared_analytic_descriptor(mapss_id: str, *, cpu: int, consume_from: str,
                               allow_from: str, parallelism: str) -> dict:
    return {
        "mapssId": mapss_id,
        "description": "detection service shared by two slices",
        "mapssImplTemplateId": "analytic-only",
        "subnetResources": {"cpuMillicores": cpu, "memoryMiB": ANALYTIC_MEMORY,
                            "storageMiB": 0},
        "acfs": [
            _acf("frameAnalytic", "sharedFrameAnalytic:1.0",
                 cpu=cpu, memory=ANALYTIC_MEMORY, qos="Guaranteed",
                 node=ANALYTIC_NODE,
                 params={"CONSUME_FROM": consume_from, "ALLOW_FROM": allow_from,
                         "PROC_PARALLELISM": parallelism}),
        ],
        "virtualLinks": [],
    }


def stress_descriptor(mapss_id: str, *, qos: str = "BestEffort",
                      cpu: int = 0, workers: int = 4,
                      node: str = ANALYTIC_NODE) -> dict:
    guaranteed = qos == "Guaranteed"
    return {
        "mapssId": mapss_id,
        "description": "cpu-intensive interference pod",
        "mapssImplTemplateId": "stress",
        "subnetResources": {"cpuMillicores": cpu if guaranteed else 0,
                            "memoryMiB": 128 if guaranteed else 0,
                            "storageMiB": 0},
        "acfs": [
            _acf("cpuStress", "cpuStress:1.0",
                 cpu=cpu if guaranteed else None,
                 memory=128 if guaranteed else None,
                 qos=qos, node=node,
                 params={"WORKERS": str(workers)}),
        ],
        "virtualLinks": [],
    }


# ---------------------------------------------------------------------------
# shared runner plumbing

def _deploy_or_raise(harness: ApiHarness, descriptor: dict):
    response = harness.post_mapss(descriptor)
    if response.status_code != 201:
        raise RuntimeError(
            f"deploying {descriptor['mapssId']!r} failed: "
            f"{response.status_code} {response.text}")
    return response.json()


def _sim_worker(scenario_doc: dict) -> MetricsReport:
    return run_sim(SimScenario.from_dict(scenario_doc))


def _run_seeds(snapshot: dict, *, duration_ms: int, seeds, workload: WorkloadParams,
               phases=None, windows=None, out_dir: Path | None = None,
               tag: str = "run", parallel: bool = False) -> dict[int, MetricsReport]:
    scenarios = {
        seed: SimScenario(
            cluster=snapshot,
            duration_ms=duration_ms,
            seed=seed,
            workload=workload,
            phases=list(phases or []),
            activation_windows=dict(windows or {}),
        )
        for seed in seeds
    }
    reports: dict[int, MetricsReport] = {}
    if parallel and len(scenarios) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor() as pool:
            futures = {seed: pool.submit(_sim_worker, sc.to_dict())
                       for seed, sc in scenarios.items()}
            for seed in seeds:
                reports[seed] = futures[seed].result()
    else:
        for seed in seeds:
            reports[seed] = run_sim(scenarios[seed])
    if out_dir is not None:
        for seed in seeds:
            reports[seed].emit_csv(out_dir / tag / f"seed-{seed}.csv")
            reports[seed].emit_summary(out_dir / tag / f"seed-{seed}.summary.json")
    return reports


def _phase_mean(report: MetricsReport, slice_id: str, phase: str) -> float:
    values = report.latencies(slice_id, phase)
    return sum(values) / len(values) if values else float("nan")


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)


def _pooled_std(report: MetricsReport, slice_id: str) -> float:
    values = report.latencies(slice_id)
    return statistics.pstdev(values) if len(values) > 1 else 0.0


def _workload_from_config(config: dict) -> WorkloadParams:
    return WorkloadParams.from_dict(config.get("workload", {}))


# ---------------------------------------------------------------------------
# the four experiments

def run_isolation(*, phase_seconds: int, seeds, config: dict,
                  out_dir: Path | None = None, parallel: bool = False,
                  interferer_qos: str = "BestEffort",
                  interferer_cpu: int = 0) -> ExperimentResult:
    """Three phases; a cpu-stress pod lands next to the analytics during the
    middle one.  The Guaranteed slice must barely move while the BestEffort
    slice degrades."""
    harness = ApiHarness()
    _deploy_or_raise(harness, pipeline_descriptor("slice1", qos="Guaranteed"))
    _deploy_or_raise(harness, pipeline_descriptor("slice2", qos="BestEffort"))
    iso_cfg = config.get("isolation", {})
    workers = int(iso_cfg.get("stressWorkers", 4))
    # The stress tool spins several workers; pod-granular fair sharing needs
    # one pod per scheduling entity to exert comparable pressure.
    stress_pods = int(iso_cfg.get("stressPods", 2))
    interferer_ids = [f"interferer-{chr(ord('a') + i)}" for i in range(stress_pods)]
    interferer_deployed = True
    for mapss_id in interferer_ids:
        response = harness.post_mapss(stress_descriptor(
            mapss_id, qos=interferer_qos, cpu=interferer_cpu, workers=workers))
        interferer_deployed = interferer_deployed and response.status_code == 201

    phase_ms = phase_seconds * 1000
    phases = [
        {"name": "I", "startMs": 0, "endMs": phase_ms},
        {"name": "II", "startMs": phase_ms, "endMs": 2 * phase_ms},
        {"name": "III", "startMs": 2 * phase_ms, "endMs": 3 * phase_ms},
    ]
    windows = {}
    if interferer_deployed:
        for mapss_id in interferer_ids:
            windows[mapss_id] = [{"startMs": phase_ms, "endMs": 2 * phase_ms}]

    reports = _run_seeds(
        harness.cluster_snapshot(), duration_ms=3 * phase_ms, seeds=seeds,
        workload=_workload_from_config(config), phases=phases, windows=windows,
        out_dir=out_dir, tag="isolation", parallel=parallel)

    table: dict[str, dict[str, float]] = {}
    for slice_id in ("slice1", "slice2"):
        table[slice_id] = {
            phase["name"]: round(_mean(
                _phase_mean(r, slice_id, phase["name"]) for r in reports.values()), 2)
            for phase in phases
        }

    predicates = []
    if interferer_deployed:
        ratio = table["slice2"]["II"] / table["slice2"]["I"]
        bump = table["slice1"]["II"] / table["slice1"]["I"] - 1.0
        predicates.append(Predicate(
            "besteffort-slice-degrades", ratio >= 2.5,
            f"slice2 phase II/I mean ratio {ratio:.2f} (needs >= 2.5)"))
        predicates.append(Predicate(
            "guaranteed-slice-isolated", bump <= 0.10,
            f"slice1 phase II increase {bump * 100:.1f}% (allowed <= 10%)"))
    else:
        # Without the interferer the three phases must be statistically alike.
        detail = []
        alike = True
        for slice_id in ("slice1", "slice2"):
            base = table[slice_id]["I"]
            spread = max(abs(table[slice_id][p] / base - 1.0) for p in ("II", "III"))
            alike = alike and spread <= 0.10
            detail.append(f"{slice_id} phase spread {spread * 100:.1f}%")
        predicates.append(Predicate(
            "phases-indistinguishable-without-interferer", alike,
            "; ".join(detail)))

    per_seed = {
        str(seed): {
            slice_id: {ph["name"]: round(_phase_mean(r, slice_id, ph["name"]), 3)
                       for ph in phases}
            for slice_id in ("slice1", "slice2")
        }
        for seed, r in reports.items()
    }
    result = ExperimentResult(
        name="isolation",
        tables={"meanLatencyMs": table,
                "interfererDeployed": interferer_deployed},
        predicates=predicates,
        per_seed=per_seed,
    )
    _emit_result(result, out_dir)
    return result


def run_bandwidth(*, phase_seconds: int, seeds, config: dict,
                  out_dir: Path | None = None,
                  parallel: bool = False) -> ExperimentResult:
    """One Guaranteed slice; the bridge-to-analytic virtual link shrinks."""
    rates = list(config.get("bandwidth", {}).get("ratesMbps", [30, 60, 120]))
    duration_ms = phase_seconds * 1000
    workload = _workload_from_config(config)

    means: dict[int, float] = {}
    stds: dict[int, float] = {}
    per_seed: dict = {}
    for rate in rates:
        harness = ApiHarness()
        _deploy_or_raise(harness, pipeline_descriptor(
            "slice1", qos="Guaranteed", link_mbps=rate))
        reports = _run_seeds(
            harness.cluster_snapshot(), duration_ms=duration_ms, seeds=seeds,
            workload=workload, out_dir=out_dir, tag=f"bandwidth-{rate}mbps", parallel=parallel)
        means[rate] = _mean(_phase_mean(r, "slice1", "all") for r in reports.values())
        stds[rate] = _mean(_pooled_std(r, "slice1") for r in reports.values())
        per_seed[str(rate)] = {
            str(seed): {"meanMs": round(_phase_mean(r, "slice1", "all"), 3),
                        "stddevMs": round(_pooled_std(r, "slice1"), 3)}
            for seed, r in reports.items()
        }

    table = {str(rate): {"meanMs": round(means[rate], 2),
                         "stddevMs": round(stds[rate], 2)} for rate in rates}
    rel_60 = means[60] / means[120] - 1.0
    rel_30 = means[30] / means[120] - 1.0
    predicates = [
        Predicate("halved-link-overhead", 0.40 <= rel_60 <= 0.90,
                  f"mean(60)/mean(120)-1 = {rel_60 * 100:.1f}% (needs 40..90%)"),
        Predicate("quartered-link-overhead", rel_30 >= 1.5,
                  f"mean(30)/mean(120)-1 = {rel_30 * 100:.1f}% (needs >= 150%)"),
        Predicate("variability-grows-as-rate-drops",
                  stds[30] > stds[60] > stds[120],
                  f"stddev 30/60/120 = {stds[30]:.2f}/{stds[60]:.2f}/{stds[120]:.2f}"),
    ]
    result = ExperimentResult("bandwidth", {"byRateMbps": table}, predicates,
                              per_seed)
    _emit_result(result, out_dir)
    return result


def run_cpu(*, phase_seconds: int, seeds, config: dict,
            out_dir: Path | None = None,
            parallel: bool = False) -> ExperimentResult:
    """One Guaranteed slice; the analytic's cpu quota shrinks."""
    quotas = list(config.get("cpu", {}).get("quotasMillicores", [500, 1000, 1800]))
    duration_ms = phase_seconds * 1000
    workload = _workload_from_config(config)

    means: dict[int, float] = {}
    stds: dict[int, float] = {}
    per_seed: dict = {}
    for quota in quotas:
        harness = ApiHarness()
        _deploy_or_raise(harness, pipeline_descriptor(
            "slice1", qos="Guaranteed", analytic_cpu=quota))
        reports = _run_seeds(
            harness.cluster_snapshot(), duration_ms=duration_ms, seeds=seeds,
            workload=workload, out_dir=out_dir, tag=f"cpu-{quota}mc", parallel=parallel)
        means[quota] = _mean(_phase_mean(r, "slice1", "all") for r in reports.values())
        stds[quota] = _mean(_pooled_std(r, "slice1") for r in reports.values())
        per_seed[str(quota)] = {
            str(seed): {"meanMs": round(_phase_mean(r, "slice1", "all"), 3),
                        "stddevMs": round(_pooled_std(r, "slice1"), 3)}
            for seed, r in reports.items()
        }

    table = {str(q): {"meanMs": round(means[q], 2), "stddevMs": round(stds[q], 2)}
             for q in quotas}
    rel_1000 = abs(means[1000] / means[1800] - 1.0)
    ratio_500 = means[500] / means[1800]
    predicates = [
        Predicate("mild-quota-cut-harmless", rel_1000 <= 0.15,
                  f"|mean(1000)/mean(1800)-1| = {rel_1000 * 100:.1f}% (allowed <= 15%)"),
        Predicate("severe-quota-cut-hurts", ratio_500 >= 3.0,
                  f"mean(500)/mean(1800) = {ratio_500:.2f} (needs >= 3)"),
        Predicate("starved-quota-is-noisy", stds[500] > stds[1800],
                  f"stddev 500 vs 1800 = {stds[500]:.2f} vs {stds[1800]:.2f}"),
    ]
    result = ExperimentResult("cpu", {"byQuotaMillicores": table}, predicates,
                              per_seed)
    _emit_result(result, out_dir)
    return result


def run_sharing(*, phase_seconds: int, seeds, config: dict,
                out_dir: Path | None = None,
                parallel: bool = False) -> ExperimentResult:
    """Shared detection pod with budget C versus per-slice replicas at C/2,
    everything Guaranteed."""
    limits = list(config.get("sharing", {}).get("cpuLimits", [3600, 2000]))
    parallelism = str(config.get("sharing", {}).get("sharedParallelism", "2.6"))
    duration_ms = phase_seconds * 1000
    workload = _workload_from_config(config)

    table: dict = {}
    per_seed: dict = {}
    predicates: list[Predicate] = []
    for limit in limits:
        # split: each slice carries its own analytic at C/2
        harness = ApiHarness()
        _deploy_or_raise(harness, pipeline_descriptor(
            "slice1", qos="Guaranteed", analytic_cpu=limit // 2))
        _deploy_or_raise(harness, pipeline_descriptor(
            "slice2", qos="Guaranteed", analytic_cpu=limit // 2))
        split_reports = _run_seeds(
            harness.cluster_snapshot(), duration_ms=duration_ms, seeds=seeds,
            workload=workload, out_dir=out_dir, tag=f"sharing-{limit}-split", parallel=parallel)

        # shared: headless slices plus one analytic-only slice at C
        harness = ApiHarness()
        _deploy_or_raise(harness, headless_descriptor("slice1", allow_from="slice3"))
        _deploy_or_raise(harness, headless_descriptor("slice2", allow_from="slice3"))
        _deploy_or_raise(harness, shared_analytic_descriptor(
            "slice3", cpu=limit,
            consume_from="slice1:sourceFrames,slice2:sourceFrames",
            allow_from="slice1,slice2", parallelism=parallelism))
        shared_reports = _run_seeds(
            harness.cluster_snapshot(), duration_ms=duration_ms, seeds=seeds,
            workload=workload, out_dir=out_dir, tag=f"sharing-{limit}-shared", parallel=parallel)

        cell = {}
        for mode, reports in (("split", split_reports), ("shared", shared_reports)):
            for slice_id in ("slice1", "slice2"):
                cell[f"{mode}.{slice_id}"] = round(_mean(
                    _phase_mean(r, slice_id, "all") for r in reports.values()), 2)
        table[str(limit)] = cell
        per_seed[str(limit)] = {
            mode: {str(seed): {s: round(_phase_mean(r, s, "all"), 3)
                               for s in ("slice1", "slice2")}
                   for seed, r in reports.items()}
            for mode, reports in (("split", split_reports),
                                  ("shared", shared_reports))
        }

        split_mean = (cell["split.slice1"] + cell["split.slice2"]) / 2
        shared_mean = (cell["shared.slice1"] + cell["shared.slice2"]) / 2
        improvement = 1.0 - shared_mean / split_mean
        predicates.append(Predicate(
            f"shared-beats-split-at-{limit}", shared_mean < split_mean,
            f"shared {shared_mean:.2f} vs split {split_mean:.2f} ms"))
        predicates.append(Predicate(
            f"improvement-in-band-at-{limit}", 0.05 <= improvement <= 0.30,
            f"improvement {improvement * 100:.1f}% (needs 5..30%)"))
        for mode in ("split", "shared"):
            a, b = cell[f"{mode}.slice1"], cell[f"{mode}.slice2"]
            gap = abs(a - b) / ((a + b) / 2)
            predicates.append(Predicate(
                f"slices-agree-{mode}-at-{limit}", gap <= 0.03,
                f"{mode}: slice1 {a:.2f} vs slice2 {b:.2f} ({gap * 100:.2f}% apart)"))

    result = ExperimentResult("sharing", {"byCpuLimit": table}, predicates,
                              per_seed)
    _emit_result(result, out_dir)
    return result


RUNNERS = {
    "isolation": run_isolation,
    "bandwidth": run_bandwidth,
    "cpu": run_cpu,
    "sharing": run_sharing,
}


def run_experiment(spec: ExperimentSpec, config: dict | None = None) -> ExperimentResult:
    config = config or load_experiment_config()
    phase_seconds, seeds = experiment_settings(config, spec.name)
    if "phaseSeconds" in spec.parameters:
        phase_seconds = int(spec.parameters["phaseSeconds"])
    if spec.parameters.get("seedsExplicit"):
        seeds = spec.seeds
    runner = RUNNERS[spec.name]
    return runner(phase_seconds=phase_seconds, seeds=seeds, config=config,
                  out_dir=spec.out_dir,
                  parallel=bool(spec.parameters.get("parallel", False)))


# ---------------------------------------------------------------------------
# emission

def _emit_result(result: ExperimentResult, out_dir: Path | None):
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{result.name}.summary.json").write_text(
        json.dumps(result.to_wire(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    (out_dir / f"{result.name}.summary.md").write_text(
        summary_markdown(result), encoding="utf-8")


def summary_markdown(result: ExperimentResult) -> str:
    lines = [f"# {result.name} experiment", ""]
    for title, table in result.tables.items():
        if not isinstance(table, dict):
            lines.append(f"- {title}: {table}")
            lines.append("")
            continue
        lines.append(f"## {title}")
        lines.append("")
        first = next(iter(table.values()), None)
        if isinstance(first, dict):
            columns = sorted({key for row in table.values() for key in row})
            lines.append("| " + " | ".join([""] + columns) + " |")
            lines.append("|" + "---|" * (len(columns) + 1))
            for row_name in sorted(table, key=_row_sort_key):
                row = table[row_name]
                cells = [str(row.get(c, "")) for c in columns]
                lines.append("| " + " | ".join([row_name] + cells) + " |")
        else:
            for key in sorted(table, key=_row_sort_key):
                lines.append(f"- {key}: {table[key]}")
        lines.append("")
    lines.append("## predicates")
    lines.append("")
    for p in result.predicates:
        mark = "PASS" if p.passed else "FAIL"
        lines.append(f"- [{mark}] {p.name}: {p.detail}")
    lines.append("")
    return "\n".join(lines)


def _row_sort_key(name: str):
    try:
        return (0, int(name))
    except ValueError:
        return (1, name)
