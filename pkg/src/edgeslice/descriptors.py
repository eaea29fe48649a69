"""MAPSS and ACF descriptor parsing, validation, and serialization.

Descriptors are the wire-format contract between the slice-subnet management
client and the orchestrator.  The wire format is JSON with fixed field names:

    {
      "mapssId": "demoSlice",
      "description": "...",
      "mapssImplTemplateId": "demoTpl",
      "subnetResources": {"cpuMillicores": 2000, "memoryMiB": 8192,
                          "storageMiB": 102400},
      "acfs": [{"acfId": "acf1", "imageRef": "img:1.0",
                "resources": {...}, "qosClass": "Guaranteed",
                "customParams": {"bufferSize": "64"},
                "nodeSelector": "kw2"}],
      "virtualLinks": [{"from": "a", "to": "b", "maxBandwidthMbps": 120}]
    }

Units are millicores / MiB / Mbps throughout; all values integral.
Parsing never consults a registry; cross-checking image references happens in
:func:`validate_mapssd`, which returns violations as data rather than raising.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import DescriptorSyntaxError, SchemaError

QOS_CLASSES = ("Guaranteed", "BestEffort")
CONFIG_PARAM_TYPES = ("string", "int", "bool")

# Namespace-safe identifier: what a slice id must satisfy to become a
# namespace name (lowercase alphanumeric plus hyphen, at most 63 chars,
# must not start or end with a hyphen).
_NAME_RE = re.compile(r"^[a-z0-9]([a-z0-9-]{0,61}[a-z0-9])?$")


def is_valid_namespace_name(name: str) -> bool:
    return bool(_NAME_RE.match(name))


@dataclass(frozen=True)
class ResourceSpec:
    """Compute/memory/storage amounts in millicores and MiB."""

    cpu_millicores: int = 0
    memory_mib: int = 0
    storage_mib: int = 0

    def __post_init__(self):
        for name in ("cpu_millicores", "memory_mib", "storage_mib"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    def to_wire(self) -> dict:
        return {
            "cpuMillicores": self.cpu_millicores,
            "memoryMiB": self.memory_mib,
            "storageMiB": self.storage_mib,
        }

    @classmethod
    def from_wire(cls, doc: dict, path: str) -> "ResourceSpec":
        _require_object(doc, path)
        out = {}
        for wire, attr in (
            ("cpuMillicores", "cpu_millicores"),
            ("memoryMiB", "memory_mib"),
            ("storageMiB", "storage_mib"),
        ):
            value = doc.get(wire, 0)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise SchemaError(
                    f"{wire} must be a non-negative integer", path=f"{path}.{wire}"
                )
            out[attr] = value
        unknown = set(doc) - {"cpuMillicores", "memoryMiB", "storageMiB"}
        if unknown:
            raise SchemaError(
                f"unknown resource field {sorted(unknown)[0]!r}", path=path
            )
        return cls(**out)

    def fits_within(self, other: "ResourceSpec") -> bool:
        return (
            self.cpu_millicores <= other.cpu_millicores
            and self.memory_mib <= other.memory_mib
            and self.storage_mib <= other.storage_mib
        )

    def plus(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(
            self.cpu_millicores + other.cpu_millicores,
            self.memory_mib + other.memory_mib,
            self.storage_mib + other.storage_mib,
        )


ZERO_RESOURCES = ResourceSpec(0, 0, 0)


@dataclass(frozen=True)
class AcfSpec:
    """One application component function inside a slice subnet."""

    acf_id: str
    image_ref: str
    resources: ResourceSpec | None = None
    qos_class: str = "BestEffort"
    custom_params: dict[str, str] = field(default_factory=dict)
    node_selector: str | None = None

    def requests(self) -> ResourceSpec:
        return self.resources if self.resources is not None else ZERO_RESOURCES

    def to_wire(self) -> dict:
        doc: dict = {"acfId": self.acf_id, "imageRef": self.image_ref}
        if self.resources is not None:
            doc["resources"] = self.resources.to_wire()
        doc["qosClass"] = self.qos_class
        if self.custom_params:
            doc["customParams"] = dict(sorted(self.custom_params.items()))
        if self.node_selector is not None:
            doc["nodeSelector"] = self.node_selector
        return doc


@dataclass(frozen=True)
class VirtualLinkSpec:
    """Directed bandwidth requirement between two ACFs of one slice."""

    from_acf: str
    to_acf: str
    max_bandwidth_mbps: int

    def to_wire(self) -> dict:
        return {
            "from": self.from_acf,
            "to": self.to_acf,
            "maxBandwidthMbps": self.max_bandwidth_mbps,
        }


@dataclass(frozen=True)
class MapssDescriptor:
    """The VI-agnostic slice-subnet blueprint carried by instantiation requests."""

    mapss_id: str
    description: str
    template_id: str
    subnet_resources: ResourceSpec
    acfs: tuple[AcfSpec, ...] = ()
    virtual_links: tuple[VirtualLinkSpec, ...] = ()

    def acf(self, acf_id: str) -> AcfSpec | None:
        for spec in self.acfs:
            if spec.acf_id == acf_id:
                return spec
        return None

    def to_wire(self) -> dict:
        return {
            "mapssId": self.mapss_id,
            "description": self.description,
            "mapssImplTemplateId": self.template_id,
            "subnetResources": self.subnet_resources.to_wire(),
            "acfs": [a.to_wire() for a in self.acfs],
            "virtualLinks": [v.to_wire() for v in self.virtual_links],
        }


@dataclass(frozen=True)
class ConfigParam:
    name: str
    type: str
    default: str
    documentation: str = ""

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "type": self.type,
            "default": self.default,
            "documentation": self.documentation,
        }


@dataclass(frozen=True)
class AcfDescriptor:
    """ACF user manual: exposed API plus run-time configuration knobs."""

    acf_id: str
    image_ref: str
    api_spec: str = ""
    config_params: tuple[ConfigParam, ...] = ()

    def param(self, name: str) -> ConfigParam | None:
        for p in self.config_params:
            if p.name == name:
                return p
        return None

    def to_wire(self) -> dict:
        return {
            "acfId": self.acf_id,
            "imageRef": self.image_ref,
            "apiSpec": self.api_spec,
            "configParams": [p.to_wire() for p in self.config_params],
        }


@dataclass(frozen=True)
class Violation:
    """One reason a descriptor is not deployable."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


# ---------------------------------------------------------------------------
# parsing helpers

def _decode(document: bytes | str) -> dict:
    if isinstance(document, (bytes, bytearray)):
        try:
            text = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DescriptorSyntaxError(f"document is not valid UTF-8: {exc}") from exc
    else:
        text = document
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptorSyntaxError(f"document is not valid JSON: {exc.msg}",
                                    path=f"line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object", path="$")
    return doc


def _require_object(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError("expected an object", path=path)
    return value


def _require_string(doc: dict, key: str, path: str, *, required: bool = True,
                    default: str | None = None) -> str | None:
    if key not in doc:
        if required:
            raise SchemaError(f"missing required field {key!r}", path=f"{path}.{key}")
        return default
    value = doc[key]
    if not isinstance(value, str):
        raise SchemaError(f"{key} must be a string", path=f"{path}.{key}")
    return value


def _require_list(doc: dict, key: str, path: str) -> list:
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise SchemaError(f"{key} must be an array", path=f"{path}.{key}")
    return value


def _parse_acf(doc, idx: int) -> AcfSpec:
    path = f"$.acfs[{idx}]"
    _require_object(doc, path)
    acf_id = _require_string(doc, "acfId", path)
    if not acf_id:
        raise SchemaError("acfId must be non-empty", path=f"{path}.acfId")
    image_ref = _require_string(doc, "imageRef", path)
    if not image_ref:
        raise SchemaError("imageRef must be non-empty", path=f"{path}.imageRef")

    resources = None
    if doc.get("resources") is not None:
        resources = ResourceSpec.from_wire(doc["resources"], f"{path}.resources")

    qos = doc.get("qosClass", "BestEffort")
    if qos not in QOS_CLASSES:
        raise SchemaError(
            f"qosClass must be one of {QOS_CLASSES}, got {qos!r}",
            path=f"{path}.qosClass",
        )

    raw_params = doc.get("customParams", {})
    if not isinstance(raw_params, dict):
        raise SchemaError("customParams must be an object", path=f"{path}.customParams")
    params: dict[str, str] = {}
    for key, value in raw_params.items():
        if not isinstance(value, str):
            raise SchemaError(
                "customParams values must be strings",
                path=f"{path}.customParams.{key}",
            )
        params[key] = value

    selector = doc.get("nodeSelector")
    if selector is not None and not isinstance(selector, str):
        raise SchemaError("nodeSelector must be a string", path=f"{path}.nodeSelector")

    if qos == "Guaranteed" and (resources is None or resources.cpu_millicores <= 0):
        raise SchemaError(
            "Guaranteed ACFs must declare resources with cpuMillicores > 0",
            path=f"{path}.resources",
        )

    return AcfSpec(
        acf_id=acf_id,
        image_ref=image_ref,
        resources=resources,
        qos_class=qos,
        custom_params=params,
        node_selector=selector,
    )


def _parse_link(doc, idx: int) -> VirtualLinkSpec:
    path = f"$.virtualLinks[{idx}]"
    _require_object(doc, path)
    src = _require_string(doc, "from", path)
    dst = _require_string(doc, "to", path)
    if src == dst:
        raise SchemaError("link endpoints must differ", path=path)
    rate = doc.get("maxBandwidthMbps")
    if not isinstance(rate, int) or isinstance(rate, bool) or rate <= 0:
        raise SchemaError(
            "maxBandwidthMbps must be a positive integer",
            path=f"{path}.maxBandwidthMbps",
        )
    return VirtualLinkSpec(from_acf=src, to_acf=dst, max_bandwidth_mbps=rate)


def parse_mapssd(document: bytes | str) -> MapssDescriptor:
    """Parse a MAPSS descriptor document.

    Raises :class:`DescriptorSyntaxError` for unparseable input and
    :class:`SchemaError` for structural violations; both identify the
    offending path.
    """
    doc = _decode(document)

    mapss_id = _require_string(doc, "mapssId", "$")
    if not is_valid_namespace_name(mapss_id):
        raise SchemaError(
            "mapssId must be a valid namespace name "
            "(lowercase alphanumeric and hyphen, at most 63 chars)",
            path="$.mapssId",
        )
    description = _require_string(doc, "description", "$", required=False, default="")
    template_id = _require_string(doc, "mapssImplTemplateId", "$")
    if not template_id:
        raise SchemaError("mapssImplTemplateId must be non-empty",
                          path="$.mapssImplTemplateId")

    if "subnetResources" not in doc:
        raise SchemaError("missing required field 'subnetResources'",
                          path="$.subnetResources")
    subnet = ResourceSpec.from_wire(doc["subnetResources"], "$.subnetResources")

    acfs = tuple(_parse_acf(a, i) for i, a in enumerate(_require_list(doc, "acfs", "$")))
    seen: set[str] = set()
    for i, acf in enumerate(acfs):
        if acf.acf_id in seen:
            raise SchemaError(f"duplicate acfId {acf.acf_id!r}",
                              path=f"$.acfs[{i}].acfId")
        seen.add(acf.acf_id)

    links = tuple(
        _parse_link(l, i) for i, l in enumerate(_require_list(doc, "virtualLinks", "$"))
    )

    return MapssDescriptor(
        mapss_id=mapss_id,
        description=description,
        template_id=template_id,
        subnet_resources=subnet,
        acfs=acfs,
        virtual_links=links,
    )


def serialize_mapssd(descriptor: MapssDescriptor) -> bytes:
    """Canonical JSON encoding; parse(serialize(d)) == d."""
    return json.dumps(descriptor.to_wire(), sort_keys=True, indent=2).encode("utf-8")


def parse_acfd(document: bytes | str) -> AcfDescriptor:
    """Parse an ACF descriptor document (API section plus config section)."""
    doc = _decode(document)
    acf_id = _require_string(doc, "acfId", "$")
    if not acf_id:
        raise SchemaError("acfId must be non-empty", path="$.acfId")
    image_ref = _require_string(doc, "imageRef", "$")
    if not image_ref:
        raise SchemaError("imageRef must be non-empty", path="$.imageRef")
    api_spec = _require_string(doc, "apiSpec", "$", required=False, default="")

    params: list[ConfigParam] = []
    names: set[str] = set()
    for i, raw in enumerate(_require_list(doc, "configParams", "$")):
        path = f"$.configParams[{i}]"
        _require_object(raw, path)
        name = _require_string(raw, "name", path)
        if name in names:
            raise SchemaError(f"duplicate configParam name {name!r}",
                              path=f"{path}.name")
        names.add(name)
        ptype = _require_string(raw, "type", path)
        if ptype not in CONFIG_PARAM_TYPES:
            raise SchemaError(
                f"type must be one of {CONFIG_PARAM_TYPES}, got {ptype!r}",
                path=f"{path}.type",
            )
        default = _require_string(raw, "default", path)
        if not _default_typechecks(default, ptype):
            raise SchemaError(
                f"default {default!r} does not typecheck as {ptype}",
                path=f"{path}.default",
            )
        doc_text = _require_string(raw, "documentation", path,
                                   required=False, default="")
        params.append(ConfigParam(name=name, type=ptype, default=default,
                                  documentation=doc_text))

    return AcfDescriptor(acf_id=acf_id, image_ref=image_ref, api_spec=api_spec,
                         config_params=tuple(params))


def serialize_acfd(descriptor: AcfDescriptor) -> bytes:
    return json.dumps(descriptor.to_wire(), sort_keys=True, indent=2).encode("utf-8")


def _default_typechecks(value: str, ptype: str) -> bool:
    if ptype == "string":
        return True
    if ptype == "int":
        try:
            int(value)
            return True
        except ValueError:
            return False
    if ptype == "bool":
        return value in ("true", "false")
    return False


# ---------------------------------------------------------------------------
# semantic validation

def validate_mapssd(descriptor: MapssDescriptor, registry=None) -> ValidationReport:
    """Check a parsed descriptor for deployability.

    ``registry`` is any object with ``has(imageRef) -> bool``; pass None to
    skip image checks.  Violations are returned as data: an empty report
    means the descriptor is deployable.  Pure function.
    """
    violations: list[Violation] = []

    seen: set[str] = set()
    for acf in descriptor.acfs:
        if acf.acf_id in seen:
            violations.append(Violation(
                "duplicate-acf", f"duplicate acfId {acf.acf_id!r}"))
        seen.add(acf.acf_id)

    total = ZERO_RESOURCES
    for acf in descriptor.acfs:
        total = total.plus(acf.requests())
    subnet = descriptor.subnet_resources
    if total.cpu_millicores > subnet.cpu_millicores:
        violations.append(Violation(
            "cpu-oversubscribed",
            f"acf cpu sum {total.cpu_millicores} > subnet {subnet.cpu_millicores}"))
    if total.memory_mib > subnet.memory_mib:
        violations.append(Violation(
            "memory-oversubscribed",
            f"acf memory sum {total.memory_mib} > subnet {subnet.memory_mib}"))
    if total.storage_mib > subnet.storage_mib:
        violations.append(Violation(
            "storage-oversubscribed",
            f"acf storage sum {total.storage_mib} > subnet {subnet.storage_mib}"))

    declared = {acf.acf_id for acf in descriptor.acfs}
    for link in descriptor.virtual_links:
        for endpoint in (link.from_acf, link.to_acf):
            if endpoint not in declared:
                violations.append(Violation(
                    "dangling-endpoint", f"dangling endpoint {endpoint!r}"))

    for acf in descriptor.acfs:
        if acf.qos_class == "Guaranteed" and acf.requests().cpu_millicores <= 0:
            violations.append(Violation(
                "guaranteed-without-cpu",
                f"Guaranteed acf {acf.acf_id!r} has no cpu request"))

    if registry is not None:
        for acf in descriptor.acfs:
            if not registry.has(acf.image_ref):
                violations.append(Violation(
                    "image-not-found",
                    f"imageRef {acf.image_ref!r} not present in the ACF registry"))

    return ValidationReport(tuple(violations))
