"""The slice-subnet orchestrator: lifecycle API over descriptors, templates,
registry, and the cluster.

Instantiation runs a fixed sequence: parse the descriptor, validate it
against the ACF registry, fetch the implementation template, derive the
customization parameters, render the deployment plan (namespace and release
name both equal the slice id), apply it on the cluster, and record the live
instance.  A failure at any step leaves zero cluster objects behind for the
attempted slice id and a ledger record with status Failed.

Concurrency: operations on one slice id are mutually exclusive; operations
on distinct ids proceed concurrently and serialize only at the cluster state
owner.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .acf_registry import AcfRegistry
from .cluster import AppliedRefs, ClusterState, DeploymentPlan
from .descriptors import MapssDescriptor, parse_mapssd, validate_mapssd
from .errors import Conflict, EdgesliceError, NotFound, ValidationError
from .templates import TemplateRegistry, derive_params, render

STEPS = ("parse", "validate", "fetch-template", "derive-params", "render",
         "apply", "record")


@dataclass(frozen=True)
class InstanceStatus:
    state: str  # Deploying | Active | Terminating | Failed
    reason: str = ""

    def to_wire(self) -> dict:
        doc: dict = {"state": self.state}
        if self.reason:
            doc["reason"] = self.reason
        return doc


@dataclass
class InstanceRecord:
    mapss_id: str
    descriptor: MapssDescriptor | None
    template_id: str
    rendered_plan: DeploymentPlan | None
    applied_refs: AppliedRefs | None
    status: InstanceStatus
    created_at_revision: int = 0

    def to_wire(self) -> dict:
        return {
            "mapssId": self.mapss_id,
            "templateId": self.template_id,
            "status": self.status.to_wire(),
            "createdAtRevision": self.created_at_revision,
            "descriptor": None if self.descriptor is None else self.descriptor.to_wire(),
            "appliedRefs": None if self.applied_refs is None else {
                "namespace": self.applied_refs.namespace,
                "objects": [list(ref) for ref in self.applied_refs.object_refs],
                "podIds": list(self.applied_refs.pod_ids),
            },
        }


class StepFailure(EdgesliceError):
    """Wrapper keeping the failing step alongside the underlying error."""

    def __init__(self, step: str, cause: Exception):
        super().__init__(str(cause))
        self.step = step
        self.cause = cause
        self.kind = getattr(cause, "kind", "error")


class Orchestrator:
    def __init__(self, cluster: ClusterState, acf_registry: AcfRegistry,
                 template_registry: TemplateRegistry):
        self.cluster = cluster
        self.acf_registry = acf_registry
        self.template_registry = template_registry
        self._instances: dict[str, InstanceRecord] = {}
        self._registry_lock = threading.Lock()
        self._id_locks: dict[str, threading.Lock] = {}

    def _lock_for(self, mapss_id: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._id_locks.get(mapss_id)
            if lock is None:
                lock = threading.Lock()
                self._id_locks[mapss_id] = lock
            return lock

    # -- lifecycle ---------------------------------------------------------

    def handle_instantiate(self, document: bytes | str,
                           fail_hook=None) -> InstanceRecord:
        """Run the instantiation sequence for one descriptor document.

        ``fail_hook(step)`` is a fault-injection seam for tests; it is called
        just before each step executes and may raise.
        """
        try:
            _checkpoint(fail_hook, "parse")
            descriptor = parse_mapssd(document)
        except Exception as exc:
            raise _as_step_failure("parse", exc)

        mapss_id = descriptor.mapss_id
        with self._lock_for(mapss_id):
            existing = self._instances.get(mapss_id)
            if existing is not None and existing.status.state != "Failed":
                raise StepFailure(
                    "record",
                    Conflict(f"mapssId {mapss_id!r} already has a live instance"))

            record = InstanceRecord(
                mapss_id=mapss_id,
                descriptor=descriptor,
                template_id=descriptor.template_id,
                rendered_plan=None,
                applied_refs=None,
                status=InstanceStatus("Deploying"),
            )
            self._instances[mapss_id] = record
            applied = False
            try:
                step = "validate"
                _checkpoint(fail_hook, step)
                report = validate_mapssd(descriptor, self.acf_registry)
                if not report.ok:
                    image_only = all(v.code == "image-not-found"
                                     for v in report.violations)
                    message = "; ".join(str(v) for v in report.violations)
                    if image_only:
                        raise NotFound(message)
                    raise ValidationError(message)

                step = "fetch-template"
                _checkpoint(fail_hook, step)
                template = self.template_registry.get(descriptor.template_id)

                step = "derive-params"
                _checkpoint(fail_hook, step)
                params = derive_params(descriptor, template)

                step = "render"
                _checkpoint(fail_hook, step)
                plan = render(template, params)
                record.rendered_plan = plan

                step = "apply"
                _checkpoint(fail_hook, step)
                refs = self.cluster.apply_plan(plan)
                applied = True

                step = "record"
                _checkpoint(fail_hook, step)
                record.applied_refs = refs
                record.created_at_revision = self.cluster.revision
                record.status = InstanceStatus("Active")
                return record
            except Exception as exc:
                # Compensate a committed apply so zero objects remain.
                if applied and mapss_id in self.cluster.namespaces:
                    self.cluster.delete_namespace_cascade(mapss_id)
                record.applied_refs = None
                record.status = InstanceStatus("Failed", reason=f"{step}: {exc}")
                raise _as_step_failure(step, exc)

    def handle_terminate(self, mapss_id: str) -> dict:
        """Tear down an instance; idempotent only in the sense that a second
        DELETE reports not-found."""
        with self._lock_for(mapss_id):
            record = self._instances.get(mapss_id)
            if record is None:
                raise NotFound(f"mapssId {mapss_id!r} not found")
            deleted = 0
            if record.status.state == "Active":
                record.status = InstanceStatus("Terminating")
                refs = self.cluster.delete_namespace_cascade(mapss_id)
                deleted = refs.count()
            del self._instances[mapss_id]
            return {"mapssId": mapss_id, "deletedObjects": deleted}

    # -- observability -----------------------------------------------------

    def get_instance(self, mapss_id: str) -> InstanceRecord:
        record = self._instances.get(mapss_id)
        if record is None:
            raise NotFound(f"mapssId {mapss_id!r} not found")
        return record

    def list_instances(self) -> list[InstanceRecord]:
        return [self._instances[k] for k in sorted(self._instances)]

    def active_ids(self) -> set[str]:
        return {k for k, r in self._instances.items() if r.status.state == "Active"}


def _checkpoint(fail_hook, step: str):
    if fail_hook is not None:
        fail_hook(step)


def _as_step_failure(step: str, exc: Exception) -> StepFailure:
    if isinstance(exc, StepFailure):
        return exc
    return StepFailure(step, exc)
