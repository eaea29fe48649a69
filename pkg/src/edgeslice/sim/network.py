"""Store-and-forward transfer model.

A transfer moves ``size_bits`` from a source pod to a destination pod at

    effective_rate = min(source egress limit, destination ingress limit,
                         path capacity)

where the path capacity is the inter-node link for cross-node transfers and
a fast loopback constant for pods sharing a node.  One Mbps moves one bit
per microsecond, so durations are exact integer arithmetic-friendly.

Each constrained resource (a pod's egress, a pod's ingress, a directed
node-to-node link) serializes its transfers FIFO: a transfer begins once
every resource it touches is free, and holds them until it completes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

LOOPBACK_MBPS = 40000


@dataclass
class TransferFabric:
    link_mbps: dict[tuple[str, str], int]
    default_link_mbps: int = 1000
    loopback_mbps: int = LOOPBACK_MBPS
    # next-free times (us) per resource key
    _gates: dict[tuple, int] = field(default_factory=dict)

    def path_capacity(self, src_node: str, dst_node: str) -> int:
        if src_node == dst_node:
            return self.loopback_mbps
        key = (src_node, dst_node) if src_node <= dst_node else (dst_node, src_node)
        return self.link_mbps.get(key, self.default_link_mbps)

    def effective_rate(self, egress_mbps: int | None, ingress_mbps: int | None,
                       src_node: str, dst_node: str) -> float:
        rate = float(self.path_capacity(src_node, dst_node))
        if egress_mbps is not None:
            rate = min(rate, float(egress_mbps))
        if ingress_mbps is not None:
            rate = min(rate, float(ingress_mbps))
        return rate

    def transfer_complete_time(self, *, now_us: int, size_bits: int,
                               src_pod: str, dst_pod: str,
                               src_node: str, dst_node: str,
                               egress_mbps: int | None,
                               ingress_mbps: int | None) -> int:
        """Reserve the involved resources and return the arrival time (us)."""
        rate = self.effective_rate(egress_mbps, ingress_mbps, src_node, dst_node)
        keys: list[tuple] = [("egress", src_pod), ("ingress", dst_pod)]
        if src_node != dst_node:
            keys.append(("link", src_node, dst_node))
        start = now_us
        for key in keys:
            start = max(start, self._gates.get(key, 0))
        duration = 0 if size_bits <= 0 else math.ceil(size_bits / rate)
        finish = start + duration
        for key in keys:
            self._gates[key] = finish
        return finish
