import pytest

from edgeslice.acf_registry import AcfRegistry, ImageRecord, load_acf_dir
from edgeslice.descriptors import AcfDescriptor, ConfigParam
from edgeslice.errors import Conflict, NotFound, ValidationError
from edgeslice.experiments import CONFIG_DIR


def record(ref="frameAnalytic:1.0", acf_id="frameAnalytic", size=1000):
    acfd = AcfDescriptor(
        acf_id=acf_id, image_ref=ref, api_spec="openapi: 3.0.0",
        config_params=(ConfigParam("bufferSize", "int", "64"),))
    return ImageRecord(image_ref=ref, acfd=acfd, size_bytes=size)


def test_publish_then_lookup():
    registry = AcfRegistry()
    digest = registry.publish(record())
    assert digest.startswith("sha256:")
    found = registry.lookup("frameAnalytic:1.0")
    assert found.acfd.acf_id == "frameAnalytic"
    assert found.digest() == digest


def test_publish_twice_conflicts():
    registry = AcfRegistry()
    registry.publish(record())
    with pytest.raises(Conflict):
        registry.publish(record(size=2000))


def test_acf_id_and_image_ref_are_independent_namespaces():
    registry = AcfRegistry()
    rec = record(ref="generic-detector:2.1", acf_id="frameAnalytic")
    registry.publish(rec)
    assert registry.lookup("generic-detector:2.1") == rec


def test_lookup_unknown_is_not_found():
    with pytest.raises(NotFound):
        AcfRegistry().lookup("ghost:1.0")


def test_five_records_retrievable_independently():
    registry = AcfRegistry()
    records = [record(ref=f"img{i}:1.0", acf_id=f"acf{i}") for i in range(5)]
    for rec in records:
        registry.publish(rec)
    for rec in records:
        assert registry.lookup(rec.image_ref) == rec
    assert len(registry) == 5


def test_digest_is_deterministic_function_of_contents():
    assert record().digest() == record().digest()
    assert record().digest() != record(size=2000).digest()


def test_size_must_be_positive():
    with pytest.raises(ValidationError):
        record(size=0)


def test_load_packaged_acf_dir():
    registry = load_acf_dir(CONFIG_DIR / "acfs")
    for ref in ("cameraSimulator:1.0", "kafkaBridge:1.0", "kafkaBroker:1.0",
                "frameAnalytic:1.0", "analyticDelayMonitor:1.0",
                "cpuStress:1.0", "sharedFrameAnalytic:1.0", "webView:1.0"):
        assert registry.has(ref), ref
    bridge = registry.lookup("kafkaBridge:1.0")
    assert bridge.acfd.param("bufferSize").type == "int"
