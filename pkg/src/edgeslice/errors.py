"""Exception types shared across the orchestrator stack.

Every error that can surface over the management API carries a short
machine-readable ``kind`` plus a human-readable message; the HTTP layer maps
kinds onto status codes.
"""

from __future__ import annotations


class EdgesliceError(Exception):
    """Base class; ``kind`` identifies the error family."""

    kind = "error"

    def __init__(self, message: str, *, path: str | None = None):
        super().__init__(message)
        self.message = message
        self.path = path

    def __str__(self) -> str:
        if self.path:
            return f"{self.message} (at {self.path})"
        return self.message


class DescriptorSyntaxError(EdgesliceError):
    """Document is not parseable at all (bad encoding, bad JSON)."""

    kind = "syntax"


class SchemaError(EdgesliceError):
    """Document parsed but violates the descriptor schema."""

    kind = "schema"


class ValidationError(EdgesliceError):
    """Structurally valid object that fails semantic validation."""

    kind = "validation"


class ParamError(EdgesliceError):
    """Descriptor and template disagree about customization parameters."""

    kind = "param"


class TemplateError(EdgesliceError):
    """Template is internally inconsistent (placeholder/schema mismatch)."""

    kind = "template"


class RenderError(EdgesliceError):
    """Type mismatch or bad substitution while rendering a template."""

    kind = "render"


class Conflict(EdgesliceError):
    """Identifier already in use."""

    kind = "conflict"


class NotFound(EdgesliceError):
    """Identifier does not resolve."""

    kind = "not-found"


class NamespaceExists(Conflict):
    kind = "namespace-exists"


class QuotaExceeded(EdgesliceError):
    """Admission rejected: object set violates the namespace quota."""

    kind = "quota-exceeded"


class Unschedulable(EdgesliceError):
    """No node can host some pod under capacity and selector constraints."""

    kind = "unschedulable"


class Forbidden(EdgesliceError):
    """Operation is never allowed on this target (e.g. system namespace)."""

    kind = "forbidden"


class ScenarioError(EdgesliceError):
    """Simulation scenario cannot be realized on the given cluster."""

    kind = "scenario"


class SeedError(EdgesliceError):
    """Scenario lacks an explicit seed; determinism is mandatory."""

    kind = "seed"
