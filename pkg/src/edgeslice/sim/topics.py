"""FIFO message topics with age-based retention.

A topic drops head-of-line messages that sat unconsumed longer than the
retention window; expiry is checked lazily at consume time (a message aged
exactly ``retention_ms`` is still delivered, anything older is dropped).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable


@dataclass
class TopicQueue:
    namespace: str
    name: str
    retention_ms: int = 2000
    _entries: deque = field(default_factory=deque)
    _waiters: list[Callable] = field(default_factory=list)
    on_drop: Callable | None = None  # called with the expired message

    def __len__(self) -> int:
        return len(self._entries)

    def enqueue(self, message, now_us: int) -> list[Callable]:
        """Append a message; returns the waiter callbacks to wake (the
        caller fires them so the event loop controls ordering)."""
        self._entries.append((message, now_us))
        waiters, self._waiters = self._waiters, []
        return waiters

    def consume(self, now_us: int):
        """Pop the next fresh message in FIFO order, expiring stale heads.

        Returns None when nothing fresh remains.
        """
        horizon_us = self.retention_ms * 1000
        while self._entries:
            message, enq_us = self._entries[0]
            if now_us - enq_us > horizon_us:
                self._entries.popleft()
                if self.on_drop is not None:
                    self.on_drop(message)
                continue
            self._entries.popleft()
            return message
        return None

    def subscribe(self, waiter: Callable):
        self._waiters.append(waiter)
