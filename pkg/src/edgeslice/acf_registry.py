"""ACF image registry: named container-image metadata plus the published ACFD.

Stands in for a content-addressed image registry.  Records are immutable and
the registry is append-only within a process lifetime; image fetches are
modeled as instantaneous (scheduling-time only).
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .descriptors import AcfDescriptor, parse_acfd
from .errors import Conflict, NotFound, ValidationError


@dataclass(frozen=True)
class ImageRecord:
    image_ref: str  # name:tag
    acfd: AcfDescriptor
    size_bytes: int

    def __post_init__(self):
        if not self.image_ref:
            raise ValidationError("imageRef must be non-empty")
        if not isinstance(self.size_bytes, int) or self.size_bytes <= 0:
            raise ValidationError("sizeBytes must be a positive integer")

    def digest(self) -> str:
        payload = json.dumps(
            {"imageRef": self.image_ref, "sizeBytes": self.size_bytes,
             "acfd": self.acfd.to_wire()},
            sort_keys=True, separators=(",", ":"),
        ).encode("utf-8")
        return "sha256:" + hashlib.sha256(payload).hexdigest()

    def to_wire(self) -> dict:
        return {
            "imageRef": self.image_ref,
            "sizeBytes": self.size_bytes,
            "digest": self.digest(),
            "acfd": self.acfd.to_wire(),
        }


class AcfRegistry:
    """Append-only store of ACF images keyed by imageRef.

    Publishes are serialized; lookups take snapshots and may run from any
    thread.
    """

    def __init__(self):
        self._records: dict[str, ImageRecord] = {}
        self._lock = threading.Lock()

    def publish(self, record: ImageRecord) -> str:
        """Store a record; returns its digest.  No overwrites, ever."""
        with self._lock:
            if record.image_ref in self._records:
                raise Conflict(f"imageRef {record.image_ref!r} already published")
            self._records[record.image_ref] = record
        return record.digest()

    def lookup(self, image_ref: str) -> ImageRecord:
        record = self._records.get(image_ref)
        if record is None:
            raise NotFound(f"imageRef {image_ref!r} not found")
        return record

    def has(self, image_ref: str) -> bool:
        return image_ref in self._records

    def image_refs(self) -> list[str]:
        return sorted(self._records)

    def __len__(self) -> int:
        return len(self._records)


def load_acf_dir(directory: str | Path) -> AcfRegistry:
    """Seed a registry from a directory of ACFD JSON files.

    Each file holds an ACFD document plus a ``sizeBytes`` sibling field used
    for fetch accounting.
    """
    registry = AcfRegistry()
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFound(f"ACF directory {directory} does not exist")
    for path in sorted(directory.glob("*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        size = doc.pop("sizeBytes", 1)
        acfd = parse_acfd(json.dumps(doc))
        registry.publish(ImageRecord(image_ref=acfd.image_ref, acfd=acfd,
                                     size_bytes=size))
    return registry
