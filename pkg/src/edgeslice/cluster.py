"""Simulated virtualized cluster: nodes, namespaces, pods, quotas, policies.

The :class:`ClusterState` is the single source of truth mutated by the
orchestrator.  Two invariants are enforced at admission time and must hold
after every operation:

  Q1  per namespace with a quota, the sum of resource requests of live pods
      stays within the quota totals, componentwise;
  N1  per node, the sum of requests of pods assigned to it stays within the
      node allocatable (capacity minus system reserved).

``apply_plan`` is atomic: it stages the whole object set, admits and
schedules every pod against a scratch view, and only then commits.  Any
failure leaves the cluster untouched.

A distinguished ``system`` namespace exists from startup and can never be
deleted; traffic originating there bypasses namespace isolation.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

from .descriptors import ResourceSpec, ZERO_RESOURCES
from .errors import (
    Forbidden,
    NamespaceExists,
    NotFound,
    QuotaExceeded,
    Unschedulable,
    ValidationError,
)

SYSTEM_NAMESPACE = "system"
DEFAULT_LINK_MBPS = 1000


@dataclass(frozen=True)
class Node:
    name: str
    cpu_capacity: int  # millicores
    memory_capacity: int  # MiB
    storage_capacity: int  # MiB
    system_reserved: ResourceSpec = ZERO_RESOURCES

    def allocatable(self) -> ResourceSpec:
        alloc = ResourceSpec(
            self.cpu_capacity - self.system_reserved.cpu_millicores,
            self.memory_capacity - self.system_reserved.memory_mib,
            self.storage_capacity - self.system_reserved.storage_mib,
        )
        return alloc

    def __post_init__(self):
        alloc = self.allocatable()
        if min(alloc.cpu_millicores, alloc.memory_mib, alloc.storage_mib) < 0:
            raise ValidationError(
                f"node {self.name!r}: system reserved exceeds capacity")


# ---------------------------------------------------------------------------
# cluster objects (the sum type carried by deployment plans)

@dataclass(frozen=True)
class NamespaceDef:
    name: str
    kind: str = "Namespace"


@dataclass(frozen=True)
class WorkloadDef:
    name: str
    namespace: str
    image_ref: str
    env: dict[str, str] = field(default_factory=dict)
    requests: ResourceSpec = ZERO_RESOURCES
    limits: ResourceSpec = ZERO_RESOURCES
    qos_class: str = "BestEffort"
    node_selector: str | None = None
    replicas: int = 1
    kind: str = "Workload"

    def validate(self):
        if self.replicas < 1:
            raise ValidationError(f"workload {self.name!r}: replicas must be >= 1")
        if self.qos_class == "Guaranteed" and self.requests != self.limits:
            raise ValidationError(
                f"workload {self.name!r}: Guaranteed requires requests == limits")


@dataclass(frozen=True)
class ResourceQuotaDef:
    namespace: str
    totals: ResourceSpec
    kind: str = "ResourceQuota"


@dataclass(frozen=True)
class NetworkPolicyDef:
    namespace: str
    allow_from: frozenset[str] = frozenset()
    kind: str = "NetworkPolicy"


@dataclass(frozen=True)
class BandwidthPolicyDef:
    """Per-pod rate limits; ``pod_name`` matches the owning workload name."""

    namespace: str
    pod_name: str
    ingress_mbps: int | None = None
    egress_mbps: int | None = None
    kind: str = "BandwidthPolicy"


@dataclass(frozen=True)
class ServiceDef:
    namespace: str
    name: str
    target_workload: str
    kind: str = "Service"


ClusterObject = (
    NamespaceDef | WorkloadDef | ResourceQuotaDef | NetworkPolicyDef
    | BandwidthPolicyDef | ServiceDef
)


def object_to_wire(obj: ClusterObject) -> dict:
    if isinstance(obj, NamespaceDef):
        return {"kind": "Namespace", "name": obj.name}
    if isinstance(obj, WorkloadDef):
        return {
            "kind": "Workload",
            "name": obj.name,
            "namespace": obj.namespace,
            "imageRef": obj.image_ref,
            "env": dict(sorted(obj.env.items())),
            "resources": {
                "requests": obj.requests.to_wire(),
                "limits": obj.limits.to_wire(),
            },
            "qosClass": obj.qos_class,
            "nodeSelector": obj.node_selector,
            "replicas": obj.replicas,
        }
    if isinstance(obj, ResourceQuotaDef):
        return {"kind": "ResourceQuota", "namespace": obj.namespace,
                "totals": obj.totals.to_wire()}
    if isinstance(obj, NetworkPolicyDef):
        return {"kind": "NetworkPolicy", "namespace": obj.namespace,
                "allowFromNamespaces": sorted(obj.allow_from)}
    if isinstance(obj, BandwidthPolicyDef):
        return {"kind": "BandwidthPolicy", "namespace": obj.namespace,
                "podName": obj.pod_name, "ingressMbps": obj.ingress_mbps,
                "egressMbps": obj.egress_mbps}
    if isinstance(obj, ServiceDef):
        return {"kind": "Service", "namespace": obj.namespace, "name": obj.name,
                "targetWorkload": obj.target_workload}
    raise TypeError(f"not a cluster object: {obj!r}")


def object_from_wire(doc: dict) -> ClusterObject:
    kind = doc.get("kind")
    if kind == "Namespace":
        return NamespaceDef(name=doc["name"])
    if kind == "Workload":
        res = doc.get("resources", {})
        selector = doc.get("nodeSelector") or None  # empty string means none
        return WorkloadDef(
            name=doc["name"],
            namespace=doc["namespace"],
            image_ref=doc["imageRef"],
            env={k: str(v) for k, v in doc.get("env", {}).items()},
            requests=ResourceSpec.from_wire(res.get("requests", {}), "$.requests"),
            limits=ResourceSpec.from_wire(res.get("limits", {}), "$.limits"),
            qos_class=doc.get("qosClass", "BestEffort"),
            node_selector=selector,
            replicas=int(doc.get("replicas", 1)),
        )
    if kind == "ResourceQuota":
        return ResourceQuotaDef(
            namespace=doc["namespace"],
            totals=ResourceSpec.from_wire(doc.get("totals", {}), "$.totals"),
        )
    if kind == "NetworkPolicy":
        allow = doc.get("allowFromNamespaces", [])
        if isinstance(allow, str):  # comma list from template substitution
            allow = [ns.strip() for ns in allow.split(",") if ns.strip()]
        return NetworkPolicyDef(
            namespace=doc["namespace"],
            allow_from=frozenset(allow),
        )
    if kind == "BandwidthPolicy":
        # 0 normalizes to "no limit": templates substitute 0 when the
        # descriptor declares no bandwidth for the link.
        ingress = doc.get("ingressMbps") or None
        egress = doc.get("egressMbps") or None
        return BandwidthPolicyDef(
            namespace=doc["namespace"], pod_name=doc["podName"],
            ingress_mbps=ingress, egress_mbps=egress,
        )
    if kind == "Service":
        return ServiceDef(namespace=doc["namespace"], name=doc["name"],
                          target_workload=doc["targetWorkload"])
    raise ValidationError(f"unknown cluster object kind {kind!r}")


@dataclass(frozen=True)
class DeploymentPlan:
    """A resolved package of cluster objects realizing one slice instance."""

    namespace_name: str
    release_name: str
    source_template_id: str
    objects: tuple[ClusterObject, ...]

    def workloads(self) -> list[WorkloadDef]:
        return [o for o in self.objects if isinstance(o, WorkloadDef)]

    def to_wire(self) -> dict:
        return {
            "namespaceName": self.namespace_name,
            "releaseName": self.release_name,
            "sourceTemplateId": self.source_template_id,
            "objects": [object_to_wire(o) for o in self.objects],
        }


@dataclass
class PodInstance:
    pod_id: str
    workload: str
    namespace: str
    image_ref: str
    requests: ResourceSpec
    limits: ResourceSpec
    qos_class: str
    env: dict[str, str]
    node_selector: str | None = None
    assigned_node: str | None = None
    phase: str = "Pending"  # Pending | Running | Terminated

    def to_wire(self) -> dict:
        return {
            "podId": self.pod_id,
            "workload": self.workload,
            "namespace": self.namespace,
            "imageRef": self.image_ref,
            "requests": self.requests.to_wire(),
            "limits": self.limits.to_wire(),
            "qosClass": self.qos_class,
            "env": dict(sorted(self.env.items())),
            "nodeSelector": self.node_selector,
            "assignedNode": self.assigned_node,
            "phase": self.phase,
        }


@dataclass
class _NamespaceState:
    name: str
    quota: ResourceQuotaDef | None = None
    net_policy: NetworkPolicyDef | None = None
    bw_policies: dict[str, BandwidthPolicyDef] = field(default_factory=dict)
    services: dict[str, ServiceDef] = field(default_factory=dict)
    workloads: dict[str, WorkloadDef] = field(default_factory=dict)
    pods: dict[str, PodInstance] = field(default_factory=dict)

    def live_requests(self) -> ResourceSpec:
        total = ZERO_RESOURCES
        for pod in self.pods.values():
            if pod.phase != "Terminated":
                total = total.plus(pod.requests)
        return total


@dataclass(frozen=True)
class AppliedRefs:
    namespace: str
    object_refs: tuple[tuple[str, str], ...]  # (kind, name)
    pod_ids: tuple[str, ...]

    def count(self) -> int:
        return len(self.object_refs) + len(self.pod_ids)


class ClusterState:
    """Mutable cluster model; all mutations serialize on one lock."""

    def __init__(self, nodes: list[Node], links: dict[tuple[str, str], int] | None = None,
                 default_link_mbps: int = DEFAULT_LINK_MBPS):
        names = [n.name for n in nodes]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate node names in topology")
        self.nodes: dict[str, Node] = {n.name: n for n in nodes}
        self._links: dict[tuple[str, str], int] = {}
        for (a, b), mbps in (links or {}).items():
            self._links[_link_key(a, b)] = mbps
        self.default_link_mbps = default_link_mbps
        self.namespaces: dict[str, _NamespaceState] = {
            SYSTEM_NAMESPACE: _NamespaceState(name=SYSTEM_NAMESPACE)
        }
        self.revision = 0
        self._node_usage: dict[str, ResourceSpec] = {
            name: ZERO_RESOURCES for name in self.nodes
        }
        self._lock = threading.RLock()

    # -- topology ----------------------------------------------------------

    def link_capacity_mbps(self, node_a: str, node_b: str) -> int:
        if node_a == node_b:
            raise ValueError("no link between a node and itself")
        return self._links.get(_link_key(node_a, node_b), self.default_link_mbps)

    def node_free_cpu(self, node_name: str) -> int:
        node = self.nodes[node_name]
        return node.allocatable().cpu_millicores - self._node_usage[node_name].cpu_millicores

    # -- scheduling --------------------------------------------------------

    def schedule_pod(self, pod: PodInstance,
                     staged_usage: dict[str, ResourceSpec] | None = None) -> str:
        """Pick a node for a pending pod; deterministic.

        With a node selector the pod goes to that node or nowhere.  Without
        one, the feasible node with most free cpu wins, ties broken by
        lexicographically smaller name.  ``staged_usage`` overlays usage for
        pods placed earlier in the same plan.
        """
        if pod.phase != "Pending":
            raise ValidationError(f"pod {pod.pod_id} is not Pending")
        usage = staged_usage if staged_usage is not None else self._node_usage

        def fits(node_name: str) -> bool:
            node = self.nodes[node_name]
            return usage[node_name].plus(pod.requests).fits_within(node.allocatable())

        if pod.node_selector is not None:
            if pod.node_selector not in self.nodes:
                raise Unschedulable(
                    f"pod {pod.pod_id}: selected node {pod.node_selector!r} does not exist")
            if not fits(pod.node_selector):
                raise Unschedulable(
                    f"pod {pod.pod_id}: node {pod.node_selector!r} cannot satisfy "
                    f"request {pod.requests.to_wire()}")
            return pod.node_selector

        best: str | None = None
        best_free = -1
        for name in sorted(self.nodes):
            if not fits(name):
                continue
            free = self.nodes[name].allocatable().cpu_millicores - usage[name].cpu_millicores
            if free > best_free:
                best, best_free = name, free
        if best is None:
            raise Unschedulable(
                f"pod {pod.pod_id}: no node can satisfy request {pod.requests.to_wire()}")
        return best

    # -- lifecycle ---------------------------------------------------------

    def apply_plan(self, plan: DeploymentPlan) -> AppliedRefs:
        """Admit, schedule and commit a whole plan atomically."""
        with self._lock:
            ns_name = plan.namespace_name
            if ns_name in self.namespaces:
                raise NamespaceExists(f"namespace {ns_name!r} already exists")

            staged = _NamespaceState(name=ns_name)
            object_refs: list[tuple[str, str]] = []
            for obj in plan.objects:
                if isinstance(obj, NamespaceDef):
                    raise ValidationError(
                        "plans must not carry Namespace objects; the namespace "
                        "comes from the plan itself")
                if obj.namespace != ns_name:
                    raise ValidationError(
                        f"object {obj!r} targets foreign namespace {obj.namespace!r}")
                if isinstance(obj, WorkloadDef):
                    obj.validate()
                    if obj.name in staged.workloads:
                        raise ValidationError(f"duplicate workload {obj.name!r}")
                    staged.workloads[obj.name] = obj
                    object_refs.append(("Workload", obj.name))
                elif isinstance(obj, ResourceQuotaDef):
                    if staged.quota is not None:
                        raise ValidationError("plan carries more than one ResourceQuota")
                    staged.quota = obj
                    object_refs.append(("ResourceQuota", ns_name))
                elif isinstance(obj, NetworkPolicyDef):
                    if staged.net_policy is not None:
                        raise ValidationError("plan carries more than one NetworkPolicy")
                    staged.net_policy = obj
                    object_refs.append(("NetworkPolicy", ns_name))
                elif isinstance(obj, BandwidthPolicyDef):
                    if obj.pod_name in staged.bw_policies:
                        raise ValidationError(
                            f"duplicate BandwidthPolicy for pod {obj.pod_name!r}")
                    staged.bw_policies[obj.pod_name] = obj
                    object_refs.append(("BandwidthPolicy", obj.pod_name))
                elif isinstance(obj, ServiceDef):
                    if obj.name in staged.services:
                        raise ValidationError(f"duplicate service {obj.name!r}")
                    staged.services[obj.name] = obj
                    object_refs.append(("Service", obj.name))

            # Admission (Q1) before scheduling (N1).
            requested = ZERO_RESOURCES
            for wl in staged.workloads.values():
                for _ in range(wl.replicas):
                    requested = requested.plus(wl.requests)
            if staged.quota is not None and not requested.fits_within(staged.quota.totals):
                raise QuotaExceeded(
                    f"namespace {ns_name!r}: requested {requested.to_wire()} exceeds "
                    f"quota {staged.quota.totals.to_wire()}")

            staged_usage = dict(self._node_usage)
            pods: list[PodInstance] = []
            for wl_name in sorted(staged.workloads):
                wl = staged.workloads[wl_name]
                for i in range(wl.replicas):
                    pod = PodInstance(
                        pod_id=f"{wl.name}-{i}",
                        workload=wl.name,
                        namespace=ns_name,
                        image_ref=wl.image_ref,
                        requests=wl.requests,
                        limits=wl.limits,
                        qos_class=wl.qos_class,
                        env=dict(wl.env),
                        node_selector=wl.node_selector,
                    )
                    node = self.schedule_pod(pod, staged_usage)
                    pod.assigned_node = node
                    pod.phase = "Running"
                    staged_usage[node] = staged_usage[node].plus(pod.requests)
                    pods.append(pod)

            # Commit point: nothing above mutated shared state.
            staged.pods = {p.pod_id: p for p in pods}
            self.namespaces[ns_name] = staged
            self._node_usage = staged_usage
            self.revision += 1
            return AppliedRefs(
                namespace=ns_name,
                object_refs=tuple(object_refs),
                pod_ids=tuple(p.pod_id for p in pods),
            )

    def delete_namespace_cascade(self, name: str) -> AppliedRefs:
        """Remove a namespace and everything in it; releases node accounting."""
        with self._lock:
            if name == SYSTEM_NAMESPACE:
                raise Forbidden("the system namespace cannot be deleted")
            ns = self.namespaces.get(name)
            if ns is None:
                raise NotFound(f"namespace {name!r} not found")

            refs: list[tuple[str, str]] = []
            if ns.quota is not None:
                refs.append(("ResourceQuota", name))
            if ns.net_policy is not None:
                refs.append(("NetworkPolicy", name))
            refs.extend(("BandwidthPolicy", p) for p in sorted(ns.bw_policies))
            refs.extend(("Service", s) for s in sorted(ns.services))
            refs.extend(("Workload", w) for w in sorted(ns.workloads))

            for pod in ns.pods.values():
                if pod.phase != "Terminated" and pod.assigned_node is not None:
                    node = pod.assigned_node
                    usage = self._node_usage[node]
                    self._node_usage[node] = ResourceSpec(
                        usage.cpu_millicores - pod.requests.cpu_millicores,
                        usage.memory_mib - pod.requests.memory_mib,
                        usage.storage_mib - pod.requests.storage_mib,
                    )
                pod.phase = "Terminated"
            pod_ids = tuple(sorted(ns.pods))
            del self.namespaces[name]
            self.revision += 1
            return AppliedRefs(namespace=name, object_refs=tuple(refs), pod_ids=pod_ids)

    # -- queries -----------------------------------------------------------

    def get_pod(self, namespace: str, pod_id: str) -> PodInstance:
        ns = self.namespaces.get(namespace)
        if ns is None or pod_id not in ns.pods:
            raise NotFound(f"pod {namespace}/{pod_id} not found")
        return ns.pods[pod_id]

    def pods_in(self, namespace: str) -> list[PodInstance]:
        ns = self.namespaces.get(namespace)
        if ns is None:
            raise NotFound(f"namespace {namespace!r} not found")
        return [ns.pods[k] for k in sorted(ns.pods)]

    def traffic_permitted(self, src: PodInstance, dst: PodInstance) -> bool:
        """Namespace isolation rule.

        Allowed iff same namespace, the source lives in the system
        namespace, or the destination namespace policy explicitly allows the
        source namespace.  Namespaces without a policy are closed
        (default-deny); there are no hidden implicit allows.
        """
        if src.namespace == dst.namespace:
            return True
        if src.namespace == SYSTEM_NAMESPACE:
            return True
        ns = self.namespaces.get(dst.namespace)
        if ns is None or ns.net_policy is None:
            return False
        return src.namespace in ns.net_policy.allow_from

    def effective_rate_limit(self, pod: PodInstance, direction: str) -> int | None:
        """Pod-level rate limit in Mbps; None means unlimited (the link
        capacity still caps transfers)."""
        if direction not in ("ingress", "egress"):
            raise ValueError(f"direction must be ingress or egress, got {direction!r}")
        ns = self.namespaces.get(pod.namespace)
        if ns is None:
            raise NotFound(f"namespace {pod.namespace!r} not found")
        policy = ns.bw_policies.get(pod.workload)
        if policy is None:
            return None
        return policy.ingress_mbps if direction == "ingress" else policy.egress_mbps

    # -- auditing and dumps --------------------------------------------------

    def audit(self) -> list[str]:
        """Recompute the Q1/N1 invariants from scratch; returns violations."""
        problems: list[str] = []
        usage: dict[str, ResourceSpec] = {name: ZERO_RESOURCES for name in self.nodes}
        for ns_name in sorted(self.namespaces):
            ns = self.namespaces[ns_name]
            live = ns.live_requests()
            if ns.quota is not None and not live.fits_within(ns.quota.totals):
                problems.append(
                    f"Q1: namespace {ns_name!r} live requests {live.to_wire()} exceed "
                    f"quota {ns.quota.totals.to_wire()}")
            for pod in ns.pods.values():
                if pod.phase == "Running":
                    if pod.assigned_node is None:
                        problems.append(f"pod {ns_name}/{pod.pod_id} Running but unassigned")
                        continue
                    usage[pod.assigned_node] = usage[pod.assigned_node].plus(pod.requests)
        for name in sorted(self.nodes):
            if not usage[name].fits_within(self.nodes[name].allocatable()):
                problems.append(
                    f"N1: node {name!r} usage {usage[name].to_wire()} exceeds "
                    f"allocatable {self.nodes[name].allocatable().to_wire()}")
            if usage[name] != self._node_usage[name]:
                problems.append(
                    f"accounting drift on node {name!r}: cached "
                    f"{self._node_usage[name].to_wire()} vs actual {usage[name].to_wire()}")
        return problems

    def to_wire(self) -> dict:
        """Canonical JSON-safe dump of the full cluster state."""
        namespaces = {}
        for ns_name in sorted(self.namespaces):
            ns = self.namespaces[ns_name]
            namespaces[ns_name] = {
                "quota": None if ns.quota is None else ns.quota.totals.to_wire(),
                "networkPolicy": None if ns.net_policy is None else {
                    "allowFromNamespaces": sorted(ns.net_policy.allow_from)},
                "bandwidthPolicies": {
                    name: {"ingressMbps": p.ingress_mbps, "egressMbps": p.egress_mbps}
                    for name, p in sorted(ns.bw_policies.items())},
                "services": {
                    name: {"targetWorkload": s.target_workload}
                    for name, s in sorted(ns.services.items())},
                "workloads": {
                    name: object_to_wire(wl)
                    for name, wl in sorted(ns.workloads.items())},
                "pods": {pid: ns.pods[pid].to_wire() for pid in sorted(ns.pods)},
            }
        return {
            "revision": self.revision,
            "nodes": {
                name: {
                    "cpuCapacityMillicores": n.cpu_capacity,
                    "memoryCapacityMiB": n.memory_capacity,
                    "storageCapacityMiB": n.storage_capacity,
                    "systemReserved": n.system_reserved.to_wire(),
                    "allocatable": n.allocatable().to_wire(),
                }
                for name, n in sorted(self.nodes.items())
            },
            "links": [
                {"between": list(key), "mbps": mbps}
                for key, mbps in sorted(self._links.items())
            ],
            "defaultLinkMbps": self.default_link_mbps,
            "namespaces": namespaces,
        }

    def dump_json(self) -> str:
        return json.dumps(self.to_wire(), sort_keys=True, indent=2)

    def fingerprint(self) -> str:
        """State identity excluding the revision counter."""
        doc = self.to_wire()
        doc.pop("revision")
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def load_topology(path: str | Path) -> ClusterState:
    """Build a cluster from a topology config file."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    nodes = []
    for raw in doc.get("nodes", []):
        nodes.append(Node(
            name=raw["name"],
            cpu_capacity=raw["cpuCapacityMillicores"],
            memory_capacity=raw["memoryCapacityMiB"],
            storage_capacity=raw["storageCapacityMiB"],
            system_reserved=ResourceSpec.from_wire(
                raw.get("systemReserved", {}), "$.systemReserved"),
        ))
    if not nodes:
        raise ValidationError(f"topology {path} declares no nodes")
    links = {}
    for raw in doc.get("links", []):
        links[(raw["from"], raw["to"])] = int(raw["mbps"])
    return ClusterState(
        nodes=nodes,
        links=links,
        default_link_mbps=int(doc.get("defaultLinkMbps", DEFAULT_LINK_MBPS)),
    )
