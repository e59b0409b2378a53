"""Fixed-size training samples, PointNet++-style sampling primitives, dataset splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from synthseg.manifest import DatasetManifest
from synthseg.pcdcore import PointCloud, as_point3

DEFAULT_SAMPLE_SIZE = 8192
MODALITIES = ("RGB-D", "D")


class SamplingError(ValueError):
    pass


def check_modality(modality: str) -> str:
    m = modality.upper()
    if m not in MODALITIES:
        raise SamplingError(f"modality must be one of {MODALITIES}, got '{modality}'")
    return m


@dataclass(frozen=True, eq=False)
class Batch:
    positions: np.ndarray
    colors: np.ndarray
    labels: np.ndarray
    source_frame: str = ""
    modality: str = "RGB-D"

    def __post_init__(self):
        n = len(self.positions)
        if self.colors.shape != (n, 3) or self.labels.shape != (n,):
            raise SamplingError("batch arrays must share one length")

    def __len__(self) -> int:
        return len(self.positions)

    def as_cloud(self, taxonomy=None) -> PointCloud:
        return PointCloud(self.positions, self.colors, self.labels, taxonomy)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise SamplingError("train_fraction must lie strictly between 0 and 1")


def farthest_point_sample(points, k: int, start_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; ties go to the lowest index."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if not 1 <= k <= n:
        raise SamplingError(f"k must lie in [1, {n}], got {k}")
    if not 0 <= start_index < n:
        raise SamplingError(f"start_index {start_index} out of range")
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start_index
    dist = np.sum((pts - pts[start_index]) ** 2, axis=1)
    dist[start_index] = -1.0
    for i in range(1, k):
        nxt = int(np.argmax(dist))  # argmax returns the first maximum
        chosen[i] = nxt
        np.minimum(dist, np.sum((pts - pts[nxt]) ** 2, axis=1), out=dist)
        dist[nxt] = -1.0
    return chosen


def ball_query(points, center, radius: float, max_neighbors: int) -> np.ndarray:
    """Indices (ascending) of the first ``max_neighbors`` points within ``radius``."""
    if not radius > 0:
        raise SamplingError("radius must be > 0")
    if max_neighbors < 1:
        raise SamplingError("max_neighbors must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    c = as_point3(center)
    inside = np.nonzero(np.sum((pts - c) ** 2, axis=1) <= radius * radius)[0]
    return inside[:max_neighbors]


def ball_query_all(points: np.ndarray, radius: float, max_neighbors: int,
                   tree: Optional[cKDTree] = None) -> tuple[np.ndarray, np.ndarray]:
    """ball_query for every point as its own center, kd-tree accelerated.

    Returns (neighbors, counts): neighbors is (N, max_neighbors) padded with -1.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if tree is None:
        tree = cKDTree(pts)
    lists = tree.query_ball_point(pts, radius, return_sorted=True)
    out = np.full((n, max_neighbors), -1, dtype=np.int64)
    counts = np.empty(n, dtype=np.int64)
    for i, nb in enumerate(lists):
        nb = nb[:max_neighbors]
        out[i, :len(nb)] = nb
        counts[i] = len(nb)
    return out, counts


def sample_batch(cloud: PointCloud, sample_size: int = DEFAULT_SAMPLE_SIZE, rng_seed=0,
                 modality: str = "RGB-D", source_frame: str = "") -> Batch:
    """Draw a fixed-size sample and recenter it on its centroid.

    Clouds smaller than ``sample_size`` are sampled with replacement.
    """
    modality = check_modality(modality)
    n = len(cloud)
    if n == 0:
        raise SamplingError("cannot sample from an empty cloud")
    if cloud.labels is None:
        raise SamplingError("cloud has no labels")
    if sample_size < 1:
        raise SamplingError("sample_size must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if n >= sample_size:
        idx = rng.permutation(n)[:sample_size]
    else:
        idx = rng.integers(0, n, size=sample_size)
    pos = cloud.positions[idx]
    pos = pos - pos.mean(axis=0)
    if modality == "D" or cloud.colors is None:
        colors = np.zeros((sample_size, 3), dtype=np.uint8)
    else:
        colors = cloud.colors[idx]
    return Batch(pos, colors, cloud.labels[idx].copy(), source_frame, modality)


def split_manifest(manifest: DatasetManifest, spec: SplitSpec = SplitSpec()):
    """Seeded shuffle of frame ids; the first ceil(f*N) go to training."""
    n = len(manifest)
    if n == 0:
        raise SamplingError("cannot split an empty manifest")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = min(n, math.ceil(spec.train_fraction * n - 1e-9))
    ids = [manifest[i].frame_id for i in order]
    return manifest.subset(ids[:n_train]), manifest.subset(ids[n_train:])
