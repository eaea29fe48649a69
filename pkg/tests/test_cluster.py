import json
import random

import pytest

from edgeslice.cluster import (
    ClusterState,
    DeploymentPlan,
    NamespaceDef,
    NetworkPolicyDef,
    Node,
    PodInstance,
    ResourceQuotaDef,
    ServiceDef,
    BandwidthPolicyDef,
    WorkloadDef,
)
from edgeslice.descriptors import ResourceSpec, parse_mapssd
from edgeslice.errors import (
    Forbidden,
    NamespaceExists,
    NotFound,
    QuotaExceeded,
    Unschedulable,
    ValidationError,
)
from edgeslice.experiments import pipeline_descriptor
from edgeslice.templates import derive_params, render

from conftest import two_worker_nodes


def table3_plan(template_registry, mapss_id="slice1", analytic_cpu=1800):
    descriptor = parse_mapssd(json.dumps(
        pipeline_descriptor(mapss_id, qos="Guaranteed", analytic_cpu=analytic_cpu)))
    template = template_registry.get("demo-pipeline")
    return render(template, derive_params(descriptor, template))


def simple_plan(ns, *, cpu=500, node=None, replicas=1, quota_cpu=None):
    quota = ResourceSpec(quota_cpu if quota_cpu is not None else cpu * replicas,
                         4096, 4096)
    return DeploymentPlan(
        namespace_name=ns, release_name=ns, source_template_id="t",
        objects=(
            ResourceQuotaDef(namespace=ns, totals=quota),
            NetworkPolicyDef(namespace=ns),
            WorkloadDef(name="w", namespace=ns, image_ref="img:1",
                        requests=ResourceSpec(cpu, 64, 0),
                        limits=ResourceSpec(cpu, 64, 0),
                        qos_class="Guaranteed", node_selector=node,
                        replicas=replicas),
        ))


# ---------------------------------------------------------------------------
# apply_plan

def test_apply_reference_plan_places_all_five_pods(cluster, template_registry):
    refs = cluster.apply_plan(table3_plan(template_registry))
    assert len(refs.pod_ids) == 5
    pods = cluster.pods_in("slice1")
    assert all(p.phase == "Running" for p in pods)
    by_name = {p.workload: p.assigned_node for p in pods}
    assert by_name["frameAnalytic"] == "kw2"
    for name in ("cameraSimulator", "kafkaBridge", "kafkaBroker",
                 "analyticDelayMonitor"):
        assert by_name[name] == "kw1"
    # the analytic request owns 1800 of kw2's 3600 allocatable
    assert cluster.node_free_cpu("kw2") == 3600 - 1800
    assert cluster.audit() == []


def test_apply_rejects_quota_violation_without_side_effects(cluster):
    before = cluster.fingerprint()
    plan = simple_plan("over", cpu=2000, replicas=2, quota_cpu=3000)
    with pytest.raises(QuotaExceeded):
        cluster.apply_plan(plan)
    assert cluster.fingerprint() == before
    assert "over" not in cluster.namespaces


def test_apply_unschedulable_selector_leaves_no_state(cluster):
    # kw2 allocatable is 4000 - 400 reserved = 3600
    assert cluster.nodes["kw2"].allocatable().cpu_millicores == 3600
    before = cluster.fingerprint()
    with pytest.raises(Unschedulable):
        cluster.apply_plan(simple_plan("big", cpu=3700, node="kw2"))
    assert cluster.fingerprint() == before


def test_apply_existing_namespace_conflicts(cluster):
    cluster.apply_plan(simple_plan("dup"))
    with pytest.raises(NamespaceExists):
        cluster.apply_plan(simple_plan("dup"))


def test_apply_rejects_foreign_namespace_objects(cluster):
    plan = DeploymentPlan(
        namespace_name="mine", release_name="mine", source_template_id="t",
        objects=(ResourceQuotaDef(namespace="theirs",
                                  totals=ResourceSpec(1, 1, 1)),))
    with pytest.raises(ValidationError):
        cluster.apply_plan(plan)
    assert "mine" not in cluster.namespaces


def test_apply_rejects_namespace_objects_in_plan(cluster):
    plan = DeploymentPlan(
        namespace_name="ns", release_name="ns", source_template_id="t",
        objects=(NamespaceDef(name="ns"),))
    with pytest.raises(ValidationError):
        cluster.apply_plan(plan)


def test_apply_increments_revision_once(cluster, template_registry):
    rev = cluster.revision
    cluster.apply_plan(table3_plan(template_registry))
    assert cluster.revision == rev + 1


def test_guaranteed_workload_requires_requests_equal_limits(cluster):
    wl = WorkloadDef(name="w", namespace="ns", image_ref="i:1",
                     requests=ResourceSpec(100, 0, 0),
                     limits=ResourceSpec(200, 0, 0), qos_class="Guaranteed")
    plan = DeploymentPlan(namespace_name="ns", release_name="ns",
                          source_template_id="t", objects=(wl,))
    with pytest.raises(ValidationError):
        cluster.apply_plan(plan)


# ---------------------------------------------------------------------------
# delete_namespace_cascade

def test_delete_restores_prior_state_modulo_revision(cluster, template_registry):
    before = cluster.fingerprint()
    cluster.apply_plan(table3_plan(template_registry))
    assert cluster.fingerprint() != before
    refs = cluster.delete_namespace_cascade("slice1")
    assert refs.count() > 0
    assert cluster.fingerprint() == before
    assert cluster.audit() == []


def test_delete_unknown_namespace(cluster):
    with pytest.raises(NotFound):
        cluster.delete_namespace_cascade("ghost")


def test_delete_system_namespace_is_forbidden(cluster):
    with pytest.raises(Forbidden):
        cluster.delete_namespace_cascade("system")


def test_delete_does_not_touch_sibling_namespaces(cluster):
    cluster.apply_plan(simple_plan("a", cpu=300, node="kw1"))
    cluster.apply_plan(simple_plan("b", cpu=400, node="kw1"))
    b_before = json.dumps(cluster.to_wire()["namespaces"]["b"], sort_keys=True)
    free_before = cluster.node_free_cpu("kw1")
    cluster.delete_namespace_cascade("a")
    assert json.dumps(cluster.to_wire()["namespaces"]["b"],
                      sort_keys=True) == b_before
    assert cluster.node_free_cpu("kw1") == free_before + 300
    assert [p.phase for p in cluster.pods_in("b")] == ["Running"]


# ---------------------------------------------------------------------------
# scheduling

def pending_pod(cpu=100, selector=None, pod_id="p-0"):
    return PodInstance(
        pod_id=pod_id, workload="p", namespace="ns", image_ref="i:1",
        requests=ResourceSpec(cpu, 0, 0), limits=ResourceSpec(cpu, 0, 0),
        qos_class="Guaranteed", env={}, node_selector=selector)


def test_selector_forces_node(cluster):
    assert cluster.schedule_pod(pending_pod(1800, selector="kw2")) == "kw2"


def test_most_free_cpu_wins():
    # free cpu 2900 on one node vs 3600 on the other
    nodes = [Node("kw1", 2900, 4096, 40960), Node("kw2", 3600, 4096, 40960)]
    cluster = ClusterState(nodes)
    assert cluster.schedule_pod(pending_pod(100)) == "kw2"


def test_equal_free_cpu_breaks_ties_lexicographically():
    nodes = [Node("kwb", 3600, 4096, 40960), Node("kwa", 3600, 4096, 40960)]
    cluster = ClusterState(nodes)
    assert cluster.schedule_pod(pending_pod(100)) == "kwa"


def test_schedule_is_invariant_to_node_storage_order():
    specs = [("n1", 3000), ("n2", 3400), ("n3", 3200)]
    assignments = set()
    for ordering in ([0, 1, 2], [2, 1, 0], [1, 2, 0]):
        nodes = [Node(specs[i][0], specs[i][1], 4096, 40960) for i in ordering]
        cluster = ClusterState(nodes)
        assignments.add(cluster.schedule_pod(pending_pod(100)))
    assert assignments == {"n2"}


def test_unschedulable_when_nothing_fits(cluster):
    with pytest.raises(Unschedulable):
        cluster.schedule_pod(pending_pod(5000))


# ---------------------------------------------------------------------------
# traffic isolation and rate limits

def make_two_slices(cluster):
    cluster.apply_plan(simple_plan("slice-a", node="kw1"))
    cluster.apply_plan(simple_plan("slice-b", node="kw1"))
    return (cluster.get_pod("slice-a", "w-0"), cluster.get_pod("slice-b", "w-0"))


def test_cross_namespace_traffic_blocked_by_default(cluster):
    a, b = make_two_slices(cluster)
    assert cluster.traffic_permitted(a, b) is False
    assert cluster.traffic_permitted(b, a) is False


def test_same_namespace_traffic_allowed(cluster):
    a, _ = make_two_slices(cluster)
    assert cluster.traffic_permitted(a, a) is True


def test_system_namespace_source_is_exempt(cluster):
    a, _ = make_two_slices(cluster)
    system_pod = PodInstance(
        pod_id="sys-0", workload="sys", namespace="system", image_ref="i:1",
        requests=ResourceSpec(0, 0, 0), limits=ResourceSpec(0, 0, 0),
        qos_class="BestEffort", env={}, phase="Running")
    assert cluster.traffic_permitted(system_pod, a) is True
    assert cluster.traffic_permitted(a, system_pod) is False


def test_explicit_allow_opens_one_direction(cluster):
    cluster.apply_plan(simple_plan("slice-a", node="kw1"))
    plan = DeploymentPlan(
        namespace_name="slice-b", release_name="slice-b", source_template_id="t",
        objects=(
            NetworkPolicyDef(namespace="slice-b",
                             allow_from=frozenset({"slice-a"})),
            WorkloadDef(name="w", namespace="slice-b", image_ref="i:1",
                        node_selector="kw1"),
        ))
    cluster.apply_plan(plan)
    a = cluster.get_pod("slice-a", "w-0")
    b = cluster.get_pod("slice-b", "w-0")
    assert cluster.traffic_permitted(a, b) is True
    assert cluster.traffic_permitted(b, a) is False


def test_rate_limits_resolved_per_direction(cluster):
    plan = DeploymentPlan(
        namespace_name="ns", release_name="ns", source_template_id="t",
        objects=(
            WorkloadDef(name="w", namespace="ns", image_ref="i:1",
                        node_selector="kw1"),
            BandwidthPolicyDef(namespace="ns", pod_name="w",
                               ingress_mbps=30, egress_mbps=60),
        ))
    cluster.apply_plan(plan)
    pod = cluster.get_pod("ns", "w-0")
    assert cluster.effective_rate_limit(pod, "egress") == 60
    assert cluster.effective_rate_limit(pod, "ingress") == 30


def test_missing_policy_means_unlimited(cluster):
    cluster.apply_plan(simple_plan("ns", node="kw1"))
    pod = cluster.get_pod("ns", "w-0")
    assert cluster.effective_rate_limit(pod, "egress") is None
    assert cluster.effective_rate_limit(pod, "ingress") is None
    with pytest.raises(ValueError):
        cluster.effective_rate_limit(pod, "sideways")


# ---------------------------------------------------------------------------
# randomized inverse + audit property

def random_plan(rng: random.Random, ns: str) -> DeploymentPlan:
    objects = []
    n_workloads = rng.randint(1, 4)
    total = ResourceSpec(0, 0, 0)
    for i in range(n_workloads):
        guaranteed = rng.random() < 0.6
        cpu = rng.choice([0, 50, 100, 250, 400]) if guaranteed else 0
        memory = rng.choice([0, 16, 64, 128]) if guaranteed else 0
        requests = ResourceSpec(cpu, memory, 0)
        replicas = rng.randint(1, 2)
        objects.append(WorkloadDef(
            name=f"w{i}", namespace=ns, image_ref=f"img{i}:1",
            requests=requests, limits=requests,
            qos_class="Guaranteed" if guaranteed else "BestEffort",
            node_selector=rng.choice([None, "kw1", "kw2"]),
            replicas=replicas))
        for _ in range(replicas):
            total = total.plus(requests)
    objects.append(ResourceQuotaDef(
        namespace=ns,
        totals=ResourceSpec(total.cpu_millicores + rng.randint(0, 200),
                            total.memory_mib + rng.randint(0, 64),
                            total.storage_mib)))
    if rng.random() < 0.5:
        objects.append(NetworkPolicyDef(namespace=ns))
    if rng.random() < 0.4:
        objects.append(ServiceDef(namespace=ns, name="svc",
                                  target_workload="w0"))
    rng.shuffle(objects)
    return DeploymentPlan(namespace_name=ns, release_name=ns,
                          source_template_id="random", objects=tuple(objects))


def test_randomized_apply_delete_round_trip_restores_state():
    rng = random.Random(7)
    cluster = ClusterState(two_worker_nodes(), links={("kw1", "kw2"): 1000})
    for i in range(50):
        before = cluster.fingerprint()
        plan = random_plan(rng, f"ns-{i}")
        try:
            cluster.apply_plan(plan)
        except (QuotaExceeded, Unschedulable):
            assert cluster.fingerprint() == before
            continue
        assert cluster.audit() == []
        cluster.delete_namespace_cascade(plan.namespace_name)
        assert cluster.fingerprint() == before
        assert cluster.audit() == []


def test_interleaved_applies_and_deletes_keep_invariants():
    rng = random.Random(11)
    cluster = ClusterState(two_worker_nodes(), links={("kw1", "kw2"): 1000})
    live: list[str] = []
    for i in range(120):
        if live and rng.random() < 0.45:
            victim = live.pop(rng.randrange(len(live)))
            cluster.delete_namespace_cascade(victim)
        else:
            ns = f"ns-{i}"
            try:
                cluster.apply_plan(random_plan(rng, ns))
                live.append(ns)
            except (QuotaExceeded, Unschedulable):
                pass
        assert cluster.audit() == []
    for ns in live:
        cluster.delete_namespace_cascade(ns)
    assert cluster.audit() == []


def test_state_dump_is_canonical_json(cluster, template_registry):
    cluster.apply_plan(table3_plan(template_registry))
    first = cluster.dump_json()
    second = cluster.dump_json()
    assert first == second
    doc = json.loads(first)
    assert doc["nodes"]["kw2"]["allocatable"]["cpuMillicores"] == 3600
    assert "slice1" in doc["namespaces"]
