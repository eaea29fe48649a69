import json
import warnings

import pytest
from hypothesis import HealthCheck, settings

from edgeslice.acf_registry import load_acf_dir
from edgeslice.cluster import ClusterState, Node, load_topology
from edgeslice.descriptors import ResourceSpec
from edgeslice.experiments import CONFIG_DIR
from edgeslice.templates import load_template_dir

warnings.filterwarnings("ignore", category=DeprecationWarning)

settings.register_profile(
    "ci", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def two_worker_nodes():
    """The reference testbed: three- and four-core workers, 400 mc of
    control-plane overhead each."""
    reserved = ResourceSpec(400, 512, 2048)
    return [
        Node("kw1", 3000, 4096, 40960, reserved),
        Node("kw2", 4000, 4096, 40960, reserved),
    ]


@pytest.fixture
def cluster():
    return ClusterState(two_worker_nodes(), links={("kw1", "kw2"): 1000})


@pytest.fixture(scope="session")
def acf_registry():
    return load_acf_dir(CONFIG_DIR / "acfs")


@pytest.fixture(scope="session")
def template_registry():
    return load_template_dir(CONFIG_DIR / "templates")


@pytest.fixture(scope="session")
def packaged_cluster_file():
    return CONFIG_DIR / "cluster.json"


@pytest.fixture
def packaged_cluster(packaged_cluster_file):
    return load_topology(packaged_cluster_file)


def demo_mapssd_doc() -> dict:
    """Single-component example descriptor: two dedicated cores, 8 GiB of
    memory, 100 GiB of storage at subnet level; one component holding one of
    those cores."""
    return {
        "mapssId": "demo-slice",
        "description": "minimal analytics slice",
        "mapssImplTemplateId": "demo-pipeline",
        "subnetResources": {
            "cpuMillicores": 2000,
            "memoryMiB": 8192,
            "storageMiB": 102400,
        },
        "acfs": [
            {
                "acfId": "acf1",
                "imageRef": "frameAnalytic:1.0",
                "resources": {"cpuMillicores": 1000, "memoryMiB": 1024,
                              "storageMiB": 0},
                "qosClass": "Guaranteed",
                "customParams": {"bufferSize": "64"},
            }
        ],
        "virtualLinks": [],
    }


def demo_mapssd_bytes() -> bytes:
    return json.dumps(demo_mapssd_doc()).encode()
