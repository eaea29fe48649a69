"""Acceptance gate: every exit criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run pytest with -s or -rA to see them
inline).  Experiments run at 60-second phases over the seven pinned seeds
from the packaged experiment config; the engine is deterministic, so these
are exact, reproducible checks rather than statistical ones.
"""

import json
import random
import threading
import time

import pytest

from edgeslice.cluster import ClusterState
from edgeslice.errors import QuotaExceeded, Unschedulable
from edgeslice.experiments import (
    ApiHarness,
    experiment_settings,
    headless_descriptor,
    load_experiment_config,
    pipeline_descriptor,
    run_bandwidth,
    run_cpu,
    run_isolation,
    run_sharing,
    shared_analytic_descriptor,
)
from edgeslice.meco import STEPS, StepFailure
from edgeslice.sim.cpu import PodDemand, cpu_grant
from edgeslice.sim.engine import SimScenario, WorkloadParams, run as run_sim

from conftest import two_worker_nodes
from test_cluster import random_plan
from test_sim_cpu import QUANTUM_MS, per_ms_reference, random_node_config

CONFIG = load_experiment_config()
SEEDS = tuple(CONFIG["seeds"])
PHASE_SECONDS = int(CONFIG["phaseSeconds"])


def report_line(criterion: str, passed: bool, detail: str):
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"{criterion}: {detail}"


# ---------------------------------------------------------------------------
# criterion 1: isolation

def test_criterion_1_isolation():
    assert len(SEEDS) >= 5
    started = time.monotonic()
    result = run_isolation(phase_seconds=PHASE_SECONDS, seeds=SEEDS,
                           config=CONFIG)
    wall = time.monotonic() - started
    table = result.tables["meanLatencyMs"]

    baseline = table["slice1"]["I"]
    ratio = table["slice2"]["II"] / table["slice2"]["I"]
    bump = table["slice1"]["II"] / table["slice1"]["I"] - 1.0
    ok = (23.0 <= baseline <= 29.0 and ratio >= 2.5 and bump <= 0.10
          and wall <= 120.0)
    report_line(
        "criterion-1 (isolation)", ok,
        f"baseline {baseline:.2f} ms (needs 26±3), slice2 II/I {ratio:.2f} "
        f"(needs >=2.5), slice1 bump {bump * 100:.1f}% (needs <=10%), "
        f"wall {wall:.0f}s (needs <=120s)")


# ---------------------------------------------------------------------------
# criterion 2: bandwidth

def test_criterion_2_bandwidth():
    result = run_bandwidth(phase_seconds=PHASE_SECONDS, seeds=SEEDS,
                           config=CONFIG)
    table = result.tables["byRateMbps"]
    m = {rate: table[str(rate)]["meanMs"] for rate in (30, 60, 120)}
    sd = {rate: table[str(rate)]["stddevMs"] for rate in (30, 60, 120)}
    rel_60 = m[60] / m[120] - 1.0
    rel_30 = m[30] / m[120] - 1.0
    ok = (0.40 <= rel_60 <= 0.90 and rel_30 >= 1.50
          and sd[30] > sd[60] > sd[120])
    report_line(
        "criterion-2 (bandwidth)", ok,
        f"60 vs 120: +{rel_60 * 100:.1f}% (needs 40..90%), "
        f"30 vs 120: +{rel_30 * 100:.1f}% (needs >=150%), "
        f"stddev {sd[30]:.1f} > {sd[60]:.1f} > {sd[120]:.1f}")


# ---------------------------------------------------------------------------
# criterion 3: cpu quota

def test_criterion_3_cpu_quota():
    result = run_cpu(phase_seconds=PHASE_SECONDS, seeds=SEEDS, config=CONFIG)
    table = result.tables["byQuotaMillicores"]
    m = {quota: table[str(quota)]["meanMs"] for quota in (500, 1000, 1800)}
    sd = {quota: table[str(quota)]["stddevMs"] for quota in (500, 1000, 1800)}
    rel_1000 = abs(m[1000] / m[1800] - 1.0)
    ratio_500 = m[500] / m[1800]
    ok = rel_1000 <= 0.15 and ratio_500 >= 3.0 and sd[500] > sd[1800]
    report_line(
        "criterion-3 (cpu quota)", ok,
        f"1000 vs 1800: {rel_1000 * 100:.1f}% apart (needs <=15%), "
        f"500 vs 1800: {ratio_500:.1f}x (needs >=3x), "
        f"stddev {sd[500]:.1f} > {sd[1800]:.1f}")


# ---------------------------------------------------------------------------
# criterion 4: shared edge resources

def test_criterion_4_sharing():
    phase_seconds, seeds = experiment_settings(CONFIG, "sharing")
    assert len(seeds) >= 5
    result = run_sharing(phase_seconds=phase_seconds, seeds=seeds,
                         config=CONFIG)
    table = result.tables["byCpuLimit"]
    details = []
    ok = True
    for limit in ("3600", "2000"):
        cell = table[limit]
        split = (cell["split.slice1"] + cell["split.slice2"]) / 2
        shared = (cell["shared.slice1"] + cell["shared.slice2"]) / 2
        improvement = 1.0 - shared / split
        ok = ok and shared < split and 0.05 <= improvement <= 0.30
        details.append(f"C={limit}: shared {shared:.1f} < split {split:.1f} "
                       f"(-{improvement * 100:.0f}%)")
        for mode in ("split", "shared"):
            a, b = cell[f"{mode}.slice1"], cell[f"{mode}.slice2"]
            gap = abs(a - b) / ((a + b) / 2)
            ok = ok and gap <= 0.03
            details.append(f"{mode}@{limit} slices {gap * 100:.1f}% apart")
    report_line("criterion-4 (sharing)", ok, "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 5: orchestration properties

def test_criterion_5a_apply_delete_restoration_on_200_random_plans():
    rng = random.Random(20_24)
    cluster = ClusterState(two_worker_nodes(), links={("kw1", "kw2"): 1000})
    applied = restored = 0
    audits_clean = True
    for i in range(200):
        before = cluster.fingerprint()
        plan = random_plan(rng, f"plan-{i}")
        try:
            cluster.apply_plan(plan)
        except (QuotaExceeded, Unschedulable):
            audits_clean = audits_clean and cluster.fingerprint() == before
            continue
        applied += 1
        audits_clean = audits_clean and cluster.audit() == []
        cluster.delete_namespace_cascade(plan.namespace_name)
        if cluster.fingerprint() == before:
            restored += 1
        audits_clean = audits_clean and cluster.audit() == []
    ok = restored == applied and applied >= 150 and audits_clean
    report_line(
        "criterion-5a (apply/delete restoration)", ok,
        f"{restored}/{applied} applied plans restored exactly over 200 trials")


def test_criterion_5b_fault_injection_leaves_no_residue():
    clean = []
    for step in STEPS:
        harness = ApiHarness()

        def fail_hook(tag, step=step):
            if tag == step:
                raise RuntimeError(f"injected at {tag}")

        doc = json.dumps(pipeline_descriptor("slice1", qos="Guaranteed"))
        with pytest.raises(StepFailure):
            harness.orchestrator.handle_instantiate(doc, fail_hook=fail_hook)
        residue = "slice1" in harness.orchestrator.cluster.namespaces
        clean.append(not residue and harness.orchestrator.cluster.audit() == [])
    report_line(
        "criterion-5b (fault injection)", all(clean),
        f"zero residual objects across injected failures at steps {list(STEPS)}")


def test_criterion_5c_auditor_clean_across_randomized_runs():
    rng = random.Random(55)
    cluster = ClusterState(two_worker_nodes(), links={("kw1", "kw2"): 1000})
    live = []
    violations = 0
    for i in range(150):
        if live and rng.random() < 0.4:
            cluster.delete_namespace_cascade(live.pop(rng.randrange(len(live))))
        else:
            try:
                cluster.apply_plan(random_plan(rng, f"ns-{i}"))
                live.append(f"ns-{i}")
            except (QuotaExceeded, Unschedulable):
                pass
        violations += len(cluster.audit())
    report_line(
        "criterion-5c (quota/capacity audit)", violations == 0,
        f"{violations} Q1/N1 violations across 150 randomized operations")


def test_criterion_5d_cross_namespace_drop_rate():
    harness = ApiHarness()
    assert harness.post_mapss(
        headless_descriptor("slice1", allow_from="")).status_code == 201
    assert harness.post_mapss(shared_analytic_descriptor(
        "spy", cpu=1800, consume_from="slice1:sourceFrames",
        allow_from="", parallelism="1.8")).status_code == 201
    scenario = SimScenario(
        cluster=harness.cluster_snapshot(), duration_ms=20_000, seed=9,
        workload=WorkloadParams.from_dict(CONFIG["workload"]))
    report = run_sim(scenario)
    counters = report.counters["slice1"]
    # every frame the foreign consumer claimed was dropped at the boundary
    no_leak = counters.sampled == 0 and counters.dropped_blocked > 0

    # and the system namespace is exempt from the same rule
    cluster = harness.orchestrator.cluster
    src = cluster.pods_in("spy")[0]
    dst = cluster.pods_in("slice1")[0]
    system_probe = type(src)(
        pod_id="probe-0", workload="probe", namespace="system",
        image_ref="probe:1", requests=src.requests, limits=src.limits,
        qos_class="BestEffort", env={}, assigned_node="kw1", phase="Running")
    exemption = (cluster.traffic_permitted(system_probe, dst) is True
                 and cluster.traffic_permitted(src, dst) is False)
    ok = no_leak and exemption
    report_line(
        "criterion-5d (namespace isolation)", ok,
        f"cross-namespace fetches dropped: {counters.dropped_blocked}, "
        f"leaked samples: {counters.sampled}, system exemption honored: "
        f"{exemption}")


def test_criterion_5e_csv_byte_identical_across_runs():
    harness = ApiHarness()
    assert harness.post_mapss(
        pipeline_descriptor("slice1", qos="Guaranteed")).status_code == 201
    snapshot = harness.cluster_snapshot()

    def one_run():
        scenario = SimScenario(
            cluster=snapshot, duration_ms=30_000, seed=SEEDS[0],
            workload=WorkloadParams.from_dict(CONFIG["workload"]))
        return run_sim(scenario).to_csv()

    first, second = one_run(), one_run()
    ok = first == second and len(first.splitlines()) > 500
    report_line(
        "criterion-5e (deterministic replay)", ok,
        f"two runs produced byte-identical CSV ({len(first)} bytes)")


def test_criterion_5f_concurrent_duplicate_posts():
    harness = ApiHarness()
    document = json.dumps(pipeline_descriptor("slice1", qos="Guaranteed"))
    outcomes = []
    lock = threading.Lock()
    barrier = threading.Barrier(10)

    def worker():
        barrier.wait()
        try:
            harness.orchestrator.handle_instantiate(document)
            code = 201
        except StepFailure as exc:
            code = 409 if exc.kind in ("conflict", "namespace-exists") else 500
        with lock:
            outcomes.append(code)

    threads = [threading.Thread(target=worker) for _ in range(10)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    ok = sorted(outcomes) == [201] + [409] * 9
    report_line(
        "criterion-5f (concurrent duplicate POSTs)", ok,
        f"outcomes {sorted(outcomes)} (needs exactly one 201)")


# ---------------------------------------------------------------------------
# criterion 6: scheduler model against the brute-force reference

def test_criterion_6_cpu_grant_matches_per_ms_reference():
    rng = random.Random(6_000)
    worst = 0.0
    for _ in range(100):
        budget, pods = random_node_config(rng)
        fast = cpu_grant(budget, pods)
        slow = per_ms_reference(budget, pods)
        for pod in pods:
            worst = max(worst, abs(fast[pod.pod_id] - slow[pod.pod_id]))
    ok = worst <= QUANTUM_MS
    report_line(
        "criterion-6 (scheduler vs reference)", ok,
        f"max per-pod deviation {worst:.3f} runtime-ms over 100 random node "
        f"configurations (allowed {QUANTUM_MS})")
