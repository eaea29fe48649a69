import json

import pytest

from edgeslice.cluster import (
    BandwidthPolicyDef,
    NetworkPolicyDef,
    ResourceQuotaDef,
    WorkloadDef,
)
from edgeslice.descriptors import parse_mapssd
from edgeslice.errors import Conflict, ParamError, RenderError, TemplateError
from edgeslice.experiments import pipeline_descriptor
from edgeslice.templates import (
    ParamSet,
    TemplateRegistry,
    derive_params,
    parse_template,
    render,
)

MINI_TEMPLATE = {
    "templateId": "mini",
    "parameters": [
        {"name": "namespaceName", "type": "string", "required": True},
        {"name": "cpu", "type": "int", "default": 100},
        {"name": "withExtra", "type": "bool", "default": False},
    ],
    "objects": [
        {"kind": "ResourceQuota", "namespace": "${namespaceName}",
         "totals": {"cpuMillicores": "${cpu}"}},
        {"kind": "Workload", "name": "main", "namespace": "${namespaceName}",
         "imageRef": "img:1", "env": {"GREETING": "hello ${namespaceName}"},
         "resources": {"requests": {"cpuMillicores": "${cpu}"},
                       "limits": {"cpuMillicores": "${cpu}"}},
         "qosClass": "Guaranteed"},
    ],
    "conditionalBlocks": [
        {"guard": "withExtra",
         "objects": [{"kind": "Service", "namespace": "${namespaceName}",
                      "name": "extra", "targetWorkload": "main"}]},
    ],
}


def mini_template():
    return parse_template(json.dumps(MINI_TEMPLATE))


def test_register_and_get():
    registry = TemplateRegistry()
    registry.register(mini_template())
    assert registry.get("mini").template_id == "mini"


def test_register_rejects_undeclared_placeholder():
    doc = json.loads(json.dumps(MINI_TEMPLATE))
    doc["objects"][0]["totals"]["cpuMillicores"] = "${mystery}"
    with pytest.raises(TemplateError) as err:
        parse_template(json.dumps(doc))
    assert "mystery" in str(err.value)


def test_register_same_id_conflicts():
    registry = TemplateRegistry()
    registry.register(mini_template())
    with pytest.raises(Conflict):
        registry.register(mini_template())


def test_template_default_typecheck():
    doc = json.loads(json.dumps(MINI_TEMPLATE))
    doc["parameters"][1]["default"] = "not an int"
    with pytest.raises(TemplateError):
        parse_template(json.dumps(doc))


def test_guard_must_be_bool():
    doc = json.loads(json.dumps(MINI_TEMPLATE))
    doc["conditionalBlocks"][0]["guard"] = "cpu"
    with pytest.raises(TemplateError):
        parse_template(json.dumps(doc))


# ---------------------------------------------------------------------------
# derive_params

def test_derive_params_for_reference_pipeline(template_registry):
    descriptor = parse_mapssd(json.dumps(
        pipeline_descriptor("slice1", qos="Guaranteed", link_mbps=120)))
    template = template_registry.get("demo-pipeline")
    params = derive_params(descriptor, template)
    assert params.get("namespaceName") == "slice1"
    assert params.get("subnetCpu") == 3000
    assert params.get("acf.frameAnalytic.cpu") == 1800
    assert params.get("acf.frameAnalytic.node") == "kw2"
    assert params.get("link.kafkaBridge.frameAnalytic.mbps") == 120


def test_derive_params_defaults_fill_missing_resources(template_registry):
    descriptor = parse_mapssd(json.dumps(
        pipeline_descriptor("slice2", qos="BestEffort")))
    template = template_registry.get("demo-pipeline")
    params = derive_params(descriptor, template)
    assert params.get("acf.frameAnalytic.cpu") is None  # filled at render
    plan = render(template, params)
    analytic = next(o for o in plan.objects
                    if isinstance(o, WorkloadDef) and o.name == "frameAnalytic")
    assert analytic.requests.cpu_millicores == 0
    assert analytic.qos_class == "BestEffort"


def test_derive_params_rejects_unknown_acf(template_registry):
    doc = pipeline_descriptor("slice1", qos="Guaranteed")
    doc["acfs"].append({"acfId": "mystery", "imageRef": "frameAnalytic:1.0"})
    template = template_registry.get("demo-pipeline")
    with pytest.raises(ParamError) as err:
        derive_params(parse_mapssd(json.dumps(doc)), template)
    assert "mystery" in str(err.value)


def test_derive_params_rejects_template_mismatch(template_registry):
    descriptor = parse_mapssd(json.dumps(
        pipeline_descriptor("slice1", qos="Guaranteed")))
    with pytest.raises(ParamError):
        derive_params(descriptor, template_registry.get("stress"))


def test_derive_params_requires_source_for_required_params():
    template = mini_template()
    doc = pipeline_descriptor("slice1", qos="Guaranteed")
    doc["mapssImplTemplateId"] = "mini"
    with pytest.raises(ParamError):
        derive_params(parse_mapssd(json.dumps(doc)), template)


# ---------------------------------------------------------------------------
# render

def test_render_propagates_namespace():
    plan = render(mini_template(), ParamSet({"namespaceName": "demo"}))
    assert plan.namespace_name == "demo"
    assert plan.release_name == "demo"
    assert all(obj.namespace == "demo" for obj in plan.objects)
    workload = plan.workloads()[0]
    assert workload.env["GREETING"] == "hello demo"
    assert workload.requests.cpu_millicores == 100


def test_render_is_deterministic_byte_for_byte():
    params = ParamSet({"namespaceName": "demo", "cpu": 250})
    a = json.dumps(render(mini_template(), params).to_wire(), sort_keys=True)
    b = json.dumps(render(mini_template(), params).to_wire(), sort_keys=True)
    assert a == b


def test_render_conditional_block_toggles_object():
    on = render(mini_template(), ParamSet({"namespaceName": "demo",
                                           "withExtra": True}))
    off = render(mini_template(), ParamSet({"namespaceName": "demo",
                                            "withExtra": False}))
    assert len(on.objects) == len(MINI_TEMPLATE["objects"]) + 1
    assert len(off.objects) == len(MINI_TEMPLATE["objects"])


def test_render_without_monitor_omits_the_monitor_workload(template_registry):
    template = template_registry.get("demo-pipeline")
    descriptor = parse_mapssd(json.dumps(
        pipeline_descriptor("slice1", qos="Guaranteed")))
    params = derive_params(descriptor, template)
    with_monitor = render(template, params)
    without = render(template, ParamSet(dict(params.values, hasMonitor=False)))
    names = lambda plan: {w.name for w in plan.workloads()}
    assert "analyticDelayMonitor" in names(with_monitor)
    assert "analyticDelayMonitor" not in names(without)
    assert len(without.objects) == len(with_monitor.objects) - 1


def test_render_type_mismatch_is_render_error():
    with pytest.raises(RenderError):
        render(mini_template(), ParamSet({"namespaceName": "demo",
                                          "cpu": "a-string"}))


def test_rendered_guaranteed_workloads_have_requests_equal_limits(template_registry):
    template = template_registry.get("demo-pipeline")
    descriptor = parse_mapssd(json.dumps(
        pipeline_descriptor("slice1", qos="Guaranteed", link_mbps=60)))
    plan = render(template, derive_params(descriptor, template))
    for workload in plan.workloads():
        assert workload.qos_class == "Guaranteed"
        assert workload.requests == workload.limits
    quota = next(o for o in plan.objects if isinstance(o, ResourceQuotaDef))
    assert quota.totals.cpu_millicores == 3000
    policy = next(o for o in plan.objects if isinstance(o, NetworkPolicyDef))
    assert policy.allow_from == frozenset()
    limits = [o for o in plan.objects if isinstance(o, BandwidthPolicyDef)]
    assert {(p.pod_name, p.ingress_mbps, p.egress_mbps) for p in limits} == {
        ("kafkaBridge", None, 60), ("frameAnalytic", 60, None)}
