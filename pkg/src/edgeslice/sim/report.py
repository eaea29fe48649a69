"""Latency report assembly and deterministic emission."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class LatencySample:
    frame_id: int
    slice_id: str
    phase: str
    latency_ms: float
    stamped_at_us: int
    queue_wait_ms: float = 0.0
    throttle_wait_ms: float = 0.0
    demand_ms: float = 0.0
    size_bits: int = 0


@dataclass
class SliceCounters:
    generated: int = 0
    sampled: int = 0
    dropped_retention: int = 0
    dropped_blocked: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_retention + self.dropped_blocked

    def in_flight(self) -> int:
        return self.generated - self.sampled - self.dropped


def percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile on a pre-sorted list."""
    if not sorted_values:
        return float("nan")
    rank = max(1, math.ceil(q / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


@dataclass
class MetricsReport:
    seed: int
    duration_ms: int
    phases: list[dict]  # {"name", "startMs", "endMs"}
    samples: list[LatencySample] = field(default_factory=list)
    counters: dict[str, SliceCounters] = field(default_factory=dict)
    drops_by_phase: dict[tuple[str, str], int] = field(default_factory=dict)

    def slice_ids(self) -> list[str]:
        return sorted(self.counters)

    def latencies(self, slice_id: str, phase: str | None = None) -> list[float]:
        return [s.latency_ms for s in self.samples
                if s.slice_id == slice_id and (phase is None or s.phase == phase)]

    def summary(self) -> dict:
        """Per-slice, per-phase statistics."""
        out: dict = {}
        for slice_id in self.slice_ids():
            per_phase = {}
            for phase in self.phases:
                name = phase["name"]
                values = sorted(self.latencies(slice_id, name))
                span_s = (phase["endMs"] - phase["startMs"]) / 1000.0
                if values:
                    mean = sum(values) / len(values)
                    var = sum((v - mean) ** 2 for v in values) / len(values)
                    waits = [(s.queue_wait_ms, s.throttle_wait_ms)
                             for s in self.samples
                             if s.slice_id == slice_id and s.phase == name]
                    stats = {
                        "count": len(values),
                        "meanMs": round(mean, 3),
                        "p50Ms": round(percentile(values, 50), 3),
                        "p95Ms": round(percentile(values, 95), 3),
                        "p99Ms": round(percentile(values, 99), 3),
                        "stddevMs": round(math.sqrt(var), 3),
                        # waiting-time breakdown: time spent queued in the
                        # source topic vs time the worker sat throttled
                        "meanQueueWaitMs": round(
                            sum(w[0] for w in waits) / len(waits), 3),
                        "meanThrottleWaitMs": round(
                            sum(w[1] for w in waits) / len(waits), 3),
                    }
                else:
                    stats = {"count": 0, "meanMs": None, "p50Ms": None,
                             "p95Ms": None, "p99Ms": None, "stddevMs": None}
                stats["droppedFrames"] = self.drops_by_phase.get((slice_id, name), 0)
                stats["throughputFps"] = round(len(values) / span_s, 3) if span_s > 0 else 0.0
                per_phase[name] = stats
            counters = self.counters[slice_id]
            out[slice_id] = {
                "phases": per_phase,
                "conservation": {
                    "generated": counters.generated,
                    "sampled": counters.sampled,
                    "droppedRetention": counters.dropped_retention,
                    "droppedBlocked": counters.dropped_blocked,
                    "inFlightAtEnd": counters.in_flight(),
                },
            }
        return out

    # -- emission ----------------------------------------------------------

    def to_csv(self) -> str:
        lines = ["frameId,sliceId,phase,latencyMs"]
        for sample in sorted(self.samples, key=lambda s: (s.slice_id, s.frame_id)):
            lines.append(
                f"{sample.frame_id},{sample.slice_id},{sample.phase},"
                f"{sample.latency_ms:.3f}")
        return "\n".join(lines) + "\n"

    def emit_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    def emit_summary(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "seed": self.seed,
            "durationMs": self.duration_ms,
            "phases": self.phases,
            "slices": self.summary(),
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")
        return path
