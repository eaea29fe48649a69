"""edgeslice: lifecycle management for MEC application slice subnets (MAPSS)
on a simulated cluster, plus a deterministic workload engine for latency
experiments."""

__version__ = "0.1.0"
