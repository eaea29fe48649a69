"""Deployment-plan templates and their rendering into concrete plans.

A template is a JSON document bundling parameterized cluster-object
definitions with a parameter schema:

    {
      "templateId": "demo-pipeline",
      "parameters": [{"name": "namespaceName", "type": "string",
                      "required": true},
                     {"name": "hasMonitor", "type": "bool",
                      "default": true}],
      "objects": [ ...cluster objects with ${placeholder} strings... ],
      "conditionalBlocks": [{"guard": "hasMonitor", "objects": [...]}]
    }

The template language is deliberately tiny: ``${name}`` substitution plus
guard-controlled object blocks, no loops.  A string that is exactly one
placeholder takes the parameter's typed value; placeholders embedded in a
longer string interpolate as text.  Rendering is a pure function: the same
template and parameter set always produce byte-identical plans.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import DeploymentPlan, object_from_wire
from .descriptors import MapssDescriptor
from .errors import (
    Conflict,
    EdgesliceError,
    NotFound,
    ParamError,
    RenderError,
    TemplateError,
)

_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z0-9_.\-]+)\}")
PARAM_TYPES = ("string", "int", "bool")


@dataclass(frozen=True)
class ParamDecl:
    name: str
    type: str
    default: object | None = None
    required: bool = False


@dataclass(frozen=True)
class ConditionalBlock:
    guard: str
    objects: tuple[dict, ...]


@dataclass(frozen=True)
class DeploymentPlanTemplate:
    template_id: str
    objects: tuple[dict, ...]
    parameter_schema: tuple[ParamDecl, ...]
    conditional_blocks: tuple[ConditionalBlock, ...] = ()

    def schema_by_name(self) -> dict[str, ParamDecl]:
        return {p.name: p for p in self.parameter_schema}

    def placeholders(self) -> set[str]:
        found: set[str] = set()
        for obj in self.objects:
            _collect_placeholders(obj, found)
        for block in self.conditional_blocks:
            for obj in block.objects:
                _collect_placeholders(obj, found)
        return found


@dataclass(frozen=True)
class ParamSet:
    """Resolved parameter values feeding one render."""

    values: dict[str, object] = field(default_factory=dict)

    def get(self, name: str, default=None):
        return self.values.get(name, default)

    def merged_with_defaults(self, template: DeploymentPlanTemplate) -> "ParamSet":
        merged = {}
        for decl in template.parameter_schema:
            if decl.name in self.values:
                merged[decl.name] = self.values[decl.name]
            elif decl.default is not None:
                merged[decl.name] = decl.default
            elif decl.required:
                raise ParamError(f"required parameter {decl.name!r} has no source")
            else:
                merged[decl.name] = _zero_value(decl.type)
        return ParamSet(merged)


def _zero_value(ptype: str):
    return {"string": "", "int": 0, "bool": False}[ptype]


def _value_matches(value, ptype: str) -> bool:
    if ptype == "string":
        return isinstance(value, str)
    if ptype == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if ptype == "bool":
        return isinstance(value, bool)
    return False


def _collect_placeholders(node, out: set[str]):
    if isinstance(node, str):
        out.update(_PLACEHOLDER_RE.findall(node))
    elif isinstance(node, dict):
        for value in node.values():
            _collect_placeholders(value, out)
    elif isinstance(node, list):
        for value in node:
            _collect_placeholders(value, out)


def parse_template(document: bytes | str) -> DeploymentPlanTemplate:
    """Parse and consistency-check a template document."""
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TemplateError(f"template is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("templateId"), str):
        raise TemplateError("template must be an object with a templateId")

    decls: list[ParamDecl] = []
    names: set[str] = set()
    for raw in doc.get("parameters", []):
        name = raw.get("name")
        ptype = raw.get("type")
        if not isinstance(name, str) or not name:
            raise TemplateError("parameter entries need a non-empty name")
        if name in names:
            raise TemplateError(f"duplicate parameter {name!r}")
        names.add(name)
        if ptype not in PARAM_TYPES:
            raise TemplateError(
                f"parameter {name!r}: type must be one of {PARAM_TYPES}")
        default = raw.get("default")
        if default is not None and not _value_matches(default, ptype):
            raise TemplateError(
                f"parameter {name!r}: default {default!r} does not typecheck as {ptype}")
        decls.append(ParamDecl(name=name, type=ptype, default=default,
                               required=bool(raw.get("required", False))))

    blocks: list[ConditionalBlock] = []
    for raw in doc.get("conditionalBlocks", []):
        guard = raw.get("guard")
        if guard not in names:
            raise TemplateError(f"conditional guard {guard!r} is not a declared parameter")
        decl = next(d for d in decls if d.name == guard)
        if decl.type != "bool":
            raise TemplateError(f"conditional guard {guard!r} must be a bool parameter")
        blocks.append(ConditionalBlock(
            guard=guard, objects=tuple(raw.get("objects", []))))

    template = DeploymentPlanTemplate(
        template_id=doc["templateId"],
        objects=tuple(doc.get("objects", [])),
        parameter_schema=tuple(decls),
        conditional_blocks=tuple(blocks),
    )
    unknown = template.placeholders() - names
    if unknown:
        raise TemplateError(
            f"placeholders not declared in the parameter schema: {sorted(unknown)}")
    return template


class TemplateRegistry:
    """Store of deployment-plan templates keyed by templateId."""

    def __init__(self):
        self._templates: dict[str, DeploymentPlanTemplate] = {}
        self._lock = threading.Lock()

    def register(self, template: DeploymentPlanTemplate) -> str:
        with self._lock:
            if template.template_id in self._templates:
                raise Conflict(f"templateId {template.template_id!r} already registered")
            # Re-validate even for pre-parsed templates built in code.
            unknown = template.placeholders() - set(template.schema_by_name())
            if unknown:
                raise TemplateError(
                    f"placeholders not declared in the parameter schema: {sorted(unknown)}")
            self._templates[template.template_id] = template
        return template.template_id

    def get(self, template_id: str) -> DeploymentPlanTemplate:
        template = self._templates.get(template_id)
        if template is None:
            raise NotFound(f"templateId {template_id!r} not found")
        return template

    def has(self, template_id: str) -> bool:
        return template_id in self._templates

    def template_ids(self) -> list[str]:
        return sorted(self._templates)


def load_template_dir(directory: str | Path) -> TemplateRegistry:
    registry = TemplateRegistry()
    directory = Path(directory)
    if not directory.is_dir():
        raise NotFound(f"template directory {directory} does not exist")
    for path in sorted(directory.glob("*.json")):
        registry.register(parse_template(path.read_text(encoding="utf-8")))
    return registry


# ---------------------------------------------------------------------------
# descriptor -> parameters

def derive_params(descriptor: MapssDescriptor,
                  template: DeploymentPlanTemplate) -> ParamSet:
    """Derive the customization parameters a descriptor supplies.

    Produces ``namespaceName``, subnet quota parameters, per-ACF resource,
    placement and environment parameters, and per-link bandwidth parameters.
    Anything the descriptor supplies must be a parameter the template
    declares, otherwise the template cannot realize the request and a
    :class:`ParamError` is raised.  Schema defaults fill the rest at render
    time.
    """
    if descriptor.template_id != template.template_id:
        raise ParamError(
            f"descriptor names template {descriptor.template_id!r} but "
            f"{template.template_id!r} was supplied")

    derived: dict[str, object] = {
        "namespaceName": descriptor.mapss_id,
        "subnetCpu": descriptor.subnet_resources.cpu_millicores,
        "subnetMemory": descriptor.subnet_resources.memory_mib,
        "subnetStorage": descriptor.subnet_resources.storage_mib,
    }
    for acf in descriptor.acfs:
        prefix = f"acf.{acf.acf_id}"
        derived[f"{prefix}.image"] = acf.image_ref
        derived[f"{prefix}.qos"] = acf.qos_class
        if acf.resources is not None:
            derived[f"{prefix}.cpu"] = acf.resources.cpu_millicores
            derived[f"{prefix}.memory"] = acf.resources.memory_mib
            derived[f"{prefix}.storage"] = acf.resources.storage_mib
        if acf.node_selector is not None:
            derived[f"{prefix}.node"] = acf.node_selector
        for key, value in acf.custom_params.items():
            derived[f"{prefix}.env.{key}"] = value
    for link in descriptor.virtual_links:
        derived[f"link.{link.from_acf}.{link.to_acf}.mbps"] = link.max_bandwidth_mbps

    schema = template.schema_by_name()
    for name, value in derived.items():
        decl = schema.get(name)
        if decl is None:
            raise ParamError(
                f"descriptor supplies parameter {name!r} which template "
                f"{template.template_id!r} does not declare")
        if not _value_matches(value, decl.type):
            raise ParamError(
                f"parameter {name!r}: descriptor value {value!r} does not "
                f"typecheck as {decl.type}")

    # Fail fast when a required parameter can come from nowhere.
    for decl in template.parameter_schema:
        if decl.required and decl.default is None and decl.name not in derived:
            raise ParamError(f"required parameter {decl.name!r} has no source")

    return ParamSet(derived)


# ---------------------------------------------------------------------------
# rendering

def render(template: DeploymentPlanTemplate, params: ParamSet) -> DeploymentPlan:
    """Substitute parameters into the template; pure and deterministic."""
    full = params.merged_with_defaults(template)
    schema = template.schema_by_name()
    for name, value in full.values.items():
        decl = schema.get(name)
        if decl is None:
            raise ParamError(f"parameter {name!r} is not declared by the template")
        if not _value_matches(value, decl.type):
            raise RenderError(
                f"parameter {name!r}: value {value!r} does not typecheck "
                f"as {decl.type}")

    namespace = full.get("namespaceName")
    if not isinstance(namespace, str) or not namespace:
        raise RenderError("render requires a non-empty namespaceName parameter")

    raw_objects = list(template.objects)
    for block in template.conditional_blocks:
        if full.values[block.guard] is True:
            raw_objects.extend(block.objects)

    objects = []
    for raw in raw_objects:
        substituted = _substitute(raw, full.values)
        _assert_resolved(substituted)
        try:
            objects.append(object_from_wire(substituted))
        except EdgesliceError as exc:
            raise RenderError(f"object does not type-check after substitution: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise RenderError(f"object does not type-check after substitution: {exc}") from exc

    return DeploymentPlan(
        namespace_name=namespace,
        release_name=namespace,  # release name is the slice id, one instance per id
        source_template_id=template.template_id,
        objects=tuple(objects),
    )


def _substitute(node, values: dict[str, object]):
    if isinstance(node, str):
        whole = _PLACEHOLDER_RE.fullmatch(node)
        if whole:
            return values[whole.group(1)]

        def repl(match: re.Match) -> str:
            value = values[match.group(1)]
            if isinstance(value, bool):
                return "true" if value else "false"
            return str(value)

        return _PLACEHOLDER_RE.sub(repl, node)
    if isinstance(node, dict):
        return {key: _substitute(value, values) for key, value in node.items()}
    if isinstance(node, list):
        return [_substitute(value, values) for value in node]
    return node


def _assert_resolved(node):
    leftovers: set[str] = set()
    _collect_placeholders(node, leftovers)
    if leftovers:
        raise RenderError(f"unresolved placeholders after render: {sorted(leftovers)}")
