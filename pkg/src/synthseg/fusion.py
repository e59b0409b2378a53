"""Pinhole projection and back-projection, and label/color registration onto clouds.

Pixel (u, v) denotes integer image coordinates; a continuous projection
(u, v) is looked up at pixel (floor(u), floor(v)). Projections are first nudged
by ``PIXEL_SNAP`` so that a back-projected pixel, which reprojects to within
about 1e-12 px of its integer coordinate, lands on its own pixel and inside the
half-open frustum 0 <= u < width. ``fuse`` has no z-buffer:
a point hidden from the camera by an occluder takes the occluder's label
unless the opt-in depth-consistency check is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from synthseg.pcdcore import (CameraIntrinsics, ColorImage, DepthImage, PointCloud, Pose,
                              SemanticImage, as_point3, check_image_matches)

# Backprojected pixel centers reproject to u = k ± 1e-12; snap before flooring.
PIXEL_SNAP = 1e-6
DEPTH_CONSISTENCY_M = 0.2


@dataclass(frozen=True)
class ProjectionResult:
    u: float
    v: float
    depth: float
    in_frustum: bool

    @property
    def pixel(self) -> tuple[float, float]:
        return (self.u, self.v)


def backproject(depth: DepthImage, intr: CameraIntrinsics, cam_pose: Pose) -> PointCloud:
    """Lift every pixel with depth > 0 to a world point, row-major order."""
    check_image_matches(intr, depth)
    v, u = np.nonzero(depth.depths > 0)
    d = depth.depths[v, u]
    cam = np.stack([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d], axis=1)
    return PointCloud(cam_pose.apply(cam))


def project_points(points: np.ndarray, intr: CameraIntrinsics, cam_pose: Pose):
    """Vectorized projection: returns (u, v, depth, in_frustum) arrays."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = (pts - cam_pose.translation) @ cam_pose.rotation
    z = cam[:, 2]
    front = z > 0
    safe = np.where(front, z, 1.0)
    u = np.where(front, intr.fx * cam[:, 0] / safe + intr.cx, np.nan)
    v = np.where(front, intr.fy * cam[:, 1] / safe + intr.cy, np.nan)
    with np.errstate(invalid="ignore"):
        us, vs = u + PIXEL_SNAP, v + PIXEL_SNAP
        inside = front & (us >= 0) & (us < intr.width) & (vs >= 0) & (vs < intr.height)
    return u, v, z, inside


def project_point(p_world, intr: CameraIntrinsics, cam_pose: Pose) -> ProjectionResult:
    u, v, z, inside = project_points(as_point3(p_world)[None, :], intr, cam_pose)
    return ProjectionResult(float(u[0]), float(v[0]), float(z[0]), bool(inside[0]))


def pixel_index(u: np.ndarray, v: np.ndarray, intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    iu = np.clip(np.floor(u + PIXEL_SNAP), 0, intr.width - 1).astype(np.intp)
    iv = np.clip(np.floor(v + PIXEL_SNAP), 0, intr.height - 1).astype(np.intp)
    return iu, iv


def fuse(cloud: PointCloud, semantic: SemanticImage, color: ColorImage,
         intr: CameraIntrinsics, cam_pose: Pose, depth: Optional[DepthImage] = None,
         depth_tolerance: float = DEPTH_CONSISTENCY_M) -> PointCloud:
    """Give each in-frustum point the label and color of the pixel it projects to.

    Out-of-frustum points get label 0 and color (0,0,0). Passing ``depth``
    enables the consistency filter: points whose camera depth differs from the
    depth image by more than ``depth_tolerance`` are treated as occluded.
    """
    check_image_matches(intr, semantic, color)
    if depth is not None:
        check_image_matches(intr, depth)
    n = len(cloud)
    labels = np.zeros(n, dtype=np.uint16)
    colors = np.zeros((n, 3), dtype=np.uint8)
    if n:
        u, v, z, inside = project_points(cloud.positions, intr, cam_pose)
        idx = np.nonzero(inside)[0]
        iu, iv = pixel_index(u[idx], v[idx], intr)
        if depth is not None:
            ref = depth.depths[iv, iu]
            ok = (ref > 0) & (np.abs(ref - z[idx]) <= depth_tolerance)
            idx, iu, iv = idx[ok], iu[ok], iv[ok]
        labels[idx] = semantic.labels[iv, iu]
        colors[idx] = color.pixels[iv, iu]
    return PointCloud(cloud.positions, colors, labels, semantic.taxonomy)


def frustum_mask(cloud: PointCloud, intr: CameraIntrinsics, cam_pose: Pose) -> np.ndarray:
    return project_points(cloud.positions, intr, cam_pose)[3]

