"""Per-point features for the point-wise classifier.

Columns (``FEATURE_NAMES``):

0. height above the cloud's ground estimate (5th percentile of z), meters
1. |z| of the neighborhood normal (eigenvector of the smallest eigenvalue)
2. planarity (l2 - l3) / l1
3. linearity (l1 - l2) / l1
4. neighbor count within the radius divided by ``max_neighbors``
5-7. r, g, b scaled to [0, 1]; zero for the D modality

Neighborhoods are ``ball_query`` results (first ``max_neighbors`` indices within
the radius, the point itself included). Fewer than 3 neighbors leaves the
normal, planarity and linearity at zero.
"""

from __future__ import annotations

import numpy as np

from synthseg.pcdcore import PointCloud
from synthseg.sampler import ball_query_all, check_modality

FEATURE_NAMES = ("height", "normal_z", "planarity", "linearity", "density", "r", "g", "b")
N_FEATURES = len(FEATURE_NAMES)
DEFAULT_RADIUS = 0.8
DEFAULT_MAX_NEIGHBORS = 64
GROUND_PERCENTILE = 5.0
MIN_NEIGHBORS = 3


def neighborhood_eigen(points: np.ndarray, neighbors: np.ndarray, counts: np.ndarray):
    """Covariance eigen-decomposition per neighborhood.

    Returns (eigenvalues descending (N,3), smallest-eigenvalue eigenvectors (N,3)).
    """
    valid = neighbors >= 0
    idx = np.where(valid, neighbors, 0)
    w = valid.astype(np.float64)
    nb = points[idx]  # (N, K, 3)
    cnt = np.maximum(counts, 1).astype(np.float64)[:, None]
    mean = np.einsum("nk,nkd->nd", w, nb) / cnt
    d = (nb - mean[:, None, :]) * w[..., None]
    cov = np.einsum("nki,nkj->nij", d, d) / cnt[..., None]
    vals, vecs = np.linalg.eigh(cov)  # ascending
    vals = np.clip(vals[:, ::-1], 0.0, None)
    return vals, vecs[:, :, 0]


def extract_features(cloud: PointCloud, radius: float = DEFAULT_RADIUS, modality: str = "RGB-D",
                     max_neighbors: int = DEFAULT_MAX_NEIGHBORS) -> np.ndarray:
    """(N, 8) float64 feature matrix, one row per point of ``cloud``."""
    return features_from_arrays(cloud.positions, cloud.colors, radius, modality, max_neighbors)


def features_from_arrays(positions, colors=None, radius: float = DEFAULT_RADIUS,
                         modality: str = "RGB-D",
                         max_neighbors: int = DEFAULT_MAX_NEIGHBORS) -> np.ndarray:
    modality = check_modality(modality)
    pts = np.asarray(positions, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise ValueError("cannot extract features from an empty cloud")
    out = np.zeros((n, N_FEATURES))
    out[:, 0] = pts[:, 2] - np.percentile(pts[:, 2], GROUND_PERCENTILE)

    neighbors, counts = ball_query_all(pts, radius, max_neighbors)
    out[:, 4] = counts / max_neighbors
    vals, normal = neighborhood_eigen(pts, neighbors, counts)
    ok = (counts >= MIN_NEIGHBORS) & (vals[:, 0] > 0)
    l1 = np.where(ok, vals[:, 0], 1.0)
    out[:, 1] = np.where(ok, np.abs(normal[:, 2]), 0.0)
    out[:, 2] = np.where(ok, (vals[:, 1] - vals[:, 2]) / l1, 0.0)
    out[:, 3] = np.where(ok, (vals[:, 0] - vals[:, 1]) / l1, 0.0)

    if modality == "RGB-D" and colors is not None:
        out[:, 5:8] = np.asarray(colors, dtype=np.float64) / 255.0
    return out
