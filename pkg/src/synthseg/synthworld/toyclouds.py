"""Small constructed point clouds with a known separating cue.

* ``color_only_cloud``: one flat plane tiled into square cells. Road and
  Sidewalk cells share geometry and density and differ only in color.
* ``geometry_only_cloud``: ground with walls and floating tree crowns, all
  painted the same gray, so only geometry tells the classes apart.
* ``ground_and_boxes_cloud``: flat ground plus elevated boxes, a two-class toy
  that a point-wise classifier separates easily.

``write_cloud_dataset`` stores any list of clouds as PLY frames plus a manifest,
so the fixtures flow through the same loaders as generated datasets.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from synthseg.io import write_ply
from synthseg.manifest import DatasetManifest, ManifestEntry, write_manifest
from synthseg.pcdcore import PointCloud
from synthseg.synthworld.scene import L
from synthseg.taxonomy import get_taxonomy

GRAY = (128, 128, 128)
COLOR_ONLY_CLASSES = ("Road", "Sidewalk")
GEOMETRY_ONLY_CLASSES = ("Road", "Building", "Vegetation")


def _plane(rng, n, extent):
    xy = rng.uniform(-extent, extent, (n, 2))
    return np.column_stack([xy, rng.normal(0.0, 0.01, n)])


def color_only_cloud(seed: int, n: int = 6000, extent: float = 10.0, cell: float = 2.5) -> PointCloud:
    """Checkerboard of Road and Sidewalk cells on one plane, told apart only by color."""
    rng = np.random.default_rng(seed)
    pos = _plane(rng, n, extent)
    parity = (np.floor(pos[:, 0] / cell) + np.floor(pos[:, 1] / cell)).astype(int) % 2
    labels = np.where(parity == 0, L["Road"], L["Sidewalk"]).astype(np.uint16)
    base = np.where(parity[:, None] == 0, [70, 70, 80], [200, 170, 140])
    colors = np.clip(base + rng.normal(0, 6, (n, 3)), 0, 255).astype(np.uint8)
    return PointCloud(pos, colors, labels, get_taxonomy("carla12"))


def geometry_only_cloud(seed: int, n: int = 6000, extent: float = 10.0) -> PointCloud:
    """Road ground between two Building walls with Vegetation crowns above, all one color."""
    rng = np.random.default_rng(seed)
    n_ground, n_wall = n // 2, n // 4
    n_veg = n - n_ground - n_wall
    ground = _plane(rng, n_ground, extent)
    side = rng.integers(0, 2, n_wall) * 2 - 1
    wall = np.column_stack([rng.uniform(-extent, extent, n_wall),
                            side * extent + rng.normal(0, 0.01, n_wall),
                            rng.uniform(0.0, 6.0, n_wall)])
    centers = rng.uniform([-extent + 2, -extent + 3, 3.0], [extent - 2, extent - 3, 5.0], (5, 3))
    which = rng.integers(0, len(centers), n_veg)
    veg = centers[which] + rng.normal(0, 0.8, (n_veg, 3))
    pos = np.vstack([ground, wall, veg])
    labels = np.concatenate([np.full(n_ground, L["Road"]), np.full(n_wall, L["Building"]),
                             np.full(n_veg, L["Vegetation"])]).astype(np.uint16)
    colors = np.tile(np.array(GRAY, dtype=np.uint8), (n, 1))
    return PointCloud(pos, colors, labels, get_taxonomy("carla12"))


def ground_and_boxes_cloud(seed: int, n: int = 4000, extent: float = 10.0) -> PointCloud:
    """Flat Road ground plus points filling raised Building boxes."""
    rng = np.random.default_rng(seed)
    n_ground = n // 2
    ground = _plane(rng, n_ground, extent)
    m = n - n_ground
    centers = rng.uniform(-extent + 2, extent - 2, (4, 2))
    which = rng.integers(0, 4, m)
    box = np.column_stack([centers[which] + rng.uniform(-1.5, 1.5, (m, 2)),
                           rng.uniform(2.0, 4.0, m)])
    pos = np.vstack([ground, box])
    labels = np.concatenate([np.full(n_ground, L["Road"]), np.full(m, L["Building"])]).astype(np.uint16)
    colors = np.tile(np.array(GRAY, dtype=np.uint8), (n, 1))
    return PointCloud(pos, colors, labels, get_taxonomy("carla12"))


def write_cloud_dataset(clouds: Sequence[PointCloud], out_dir, prefix: str = "frame") -> DatasetManifest:
    """Write clouds as ``<prefix>_NNNN.ply`` plus ``manifest.tsv``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, cloud in enumerate(clouds):
        name = f"{prefix}_{i:04d}"
        write_ply(cloud, out / f"{name}.ply")
        tax = cloud.taxonomy.name if cloud.taxonomy is not None else "carla12"
        entries.append(ManifestEntry(name, f"{name}.ply", point_count=len(cloud), taxonomy=tax))
    return write_manifest(DatasetManifest(tuple(entries), out), out / "manifest.tsv")
