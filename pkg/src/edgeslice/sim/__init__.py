"""Deterministic discrete-event workload engine."""

from .engine import SimScenario, run  # noqa: F401
from .report import MetricsReport  # noqa: F401
