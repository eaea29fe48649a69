"""CPU bandwidth-control model.

Mirrors how a fixed-period CPU scheduler hands out runtime: time slices over
a period are assigned from requests and limits; a pod whose slices run out
mid-period waits for the next period.  Concretely, per period of length P on
a node with allocatable capacity C millicores:

  * the node budget is C * P / 1000 runtime-milliseconds;
  * a limited pod (Guaranteed: requests == limits) holds a quota of
    limits * P / 1000 runtime-ms and can never exceed it in one period;
  * each Guaranteed pod is served min(demand, quota) first;
  * the leftover budget is split equally among backlogged BestEffort pods
    (water-filling: a pod never receives more than its demand, the excess
    re-splits among the still-hungry).

``cpu_grant`` is the per-period accounting view of this policy and is the
unit checked against a brute-force per-millisecond reference.  The event
engine applies the same policy continuously (see ``engine``): instantaneous
execution rates honor reservations first, split the leftover equally, and a
per-period budget gate produces the run-then-throttle behavior.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PodDemand:
    """One pod's standing at a period boundary."""

    pod_id: str
    demand_ms: float  # backlog of runtime the pod could consume this period
    quota_ms: float | None  # None for BestEffort (no limit)
    guaranteed: bool


def waterfill(capacity: float, wants: list[tuple[str, float]]) -> dict[str, float]:
    """Split ``capacity`` equally among claimants, never exceeding a
    claimant's want; excess re-splits among the rest.  Deterministic for any
    input order."""
    grants = {key: 0.0 for key, _ in wants}
    pending = sorted(((want, key) for key, want in wants if want > 0))
    remaining = capacity
    while pending and remaining > 1e-12:
        share = remaining / len(pending)
        want, key = pending[0]
        if want <= share:
            # Smallest want is satisfiable in full; grant and re-split.
            grants[key] = want
            remaining -= want
            pending.pop(0)
        else:
            # Everyone left wants at least a full share.
            for want, key in pending:
                grants[key] = share
            remaining = 0.0
            pending = []
    return grants


def cpu_grant(node_budget_ms: float, pods: list[PodDemand]) -> dict[str, float]:
    """Runtime-ms granted to each pod for one period.

    Conserves the node budget; a Guaranteed pod's grant never drops below
    min(demand, quota) no matter what else runs.
    """
    grants: dict[str, float] = {}
    used = 0.0
    for pod in pods:
        if pod.guaranteed:
            quota = pod.quota_ms if pod.quota_ms is not None else node_budget_ms
            grant = min(pod.demand_ms, quota)
            grants[pod.pod_id] = grant
            used += grant
        else:
            grants[pod.pod_id] = 0.0

    leftover = max(0.0, node_budget_ms - used)
    hungry = [(p.pod_id, p.demand_ms) for p in pods
              if not p.guaranteed and p.demand_ms > 0]
    for pod_id, extra in waterfill(leftover, hungry).items():
        grants[pod_id] += extra
    return grants


def allocate_rates(cores: float,
                   pods: list[tuple[str, float, float]]) -> dict[str, float]:
    """Instantaneous execution-rate allocation used by the event engine.

    ``pods`` holds (pod_id, want_cores, reserved_cores) for every runnable
    pod on the node.  Reservations are honored first; the leftover is split
    equally (water-filled) among every pod wanting more than its
    reservation, BestEffort pods included (their reservation is zero).
    """
    rates: dict[str, float] = {}
    reserved_total = 0.0
    for pod_id, want, reserved in pods:
        base = min(want, reserved)
        rates[pod_id] = base
        reserved_total += base
    if reserved_total > cores and reserved_total > 0:
        # Defensive: admission keeps reservations within capacity.
        scale = cores / reserved_total
        for pod_id in rates:
            rates[pod_id] *= scale
        return rates

    leftover = cores - reserved_total
    claims = [(pod_id, want - rates[pod_id]) for pod_id, want, _ in pods
              if want - rates[pod_id] > 1e-12]
    for pod_id, extra in waterfill(leftover, claims).items():
        rates[pod_id] += extra
    return rates
