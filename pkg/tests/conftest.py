import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from synthseg.manifest import DatasetManifest, ManifestEntry
from synthseg.pcdcore import CameraIntrinsics, PointCloud
from synthseg.synthworld import DatasetConfig, LidarSpec, SensorRig, generate_dataset
from synthseg.taxonomy import get_taxonomy

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def carla():
    return get_taxonomy("carla12")


@pytest.fixture(scope="session")
def small_rig():
    """Low-resolution rig so dataset fixtures stay fast."""
    return SensorRig(lidar=LidarSpec(16, 256), camera=CameraIntrinsics.from_fov(160, 120, 90.0))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, small_rig):
    out = tmp_path_factory.mktemp("tiny")
    manifest = generate_dataset(DatasetConfig(seed=3, rig=small_rig), 4, out)
    return out, manifest


def random_cloud(rng, n, taxonomy=None, labels=True, colors=True):
    return PointCloud(
        rng.normal(size=(n, 3)),
        rng.integers(0, 256, (n, 3)) if colors else None,
        rng.integers(0, len(taxonomy) if taxonomy else 5, n) if labels else None,
        taxonomy,
    )



def memory_manifest(n):
    """Manifest of ``n`` frames that only ``memory_loader`` can read."""
    return DatasetManifest(tuple(ManifestEntry(f"f{i:03d}", f"f{i:03d}.ply", point_count=50)
                                 for i in range(n)), Path("mem"))


def memory_loader(n, points=50, latency=0.0, calls=None):
    """Deterministic clouds keyed by file name; frame i has every label equal to i % 7."""
    clouds = {}
    for i in range(n):
        rng = np.random.default_rng(i)
        clouds[f"f{i:03d}.ply"] = PointCloud(rng.normal(size=(points, 3)),
                                             rng.integers(0, 256, (points, 3)),
                                             np.full(points, i % 7))

    def load(path):
        if calls is not None:
            calls.append(path)
        if latency:
            time.sleep(latency)
        return clouds[Path(path).name]
    return load

def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
