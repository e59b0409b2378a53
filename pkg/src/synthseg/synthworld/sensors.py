"""Simulated LiDAR and pinhole cameras (depth, semantic, color) over a Scene."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from synthseg.pcdcore import (CameraIntrinsics, ColorImage, DepthImage, PointCloud, Pose,
                              SemanticImage)
from synthseg.synthworld.raycast import cast_rays
from synthseg.synthworld.scene import CARLA, Scene, SceneError

CAMERA_FAR = 65.0

# 14 opaque weather presets: (per-channel tint, sky color)
WEATHER_PRESETS = (
    ((1.00, 1.00, 1.00), (135, 190, 235)),
    ((1.05, 1.02, 0.95), (150, 200, 240)),
    ((0.90, 0.92, 0.98), (170, 180, 190)),
    ((0.80, 0.82, 0.88), (140, 145, 150)),
    ((0.70, 0.72, 0.78), (110, 115, 125)),
    ((0.95, 0.85, 0.75), (240, 170, 110)),
    ((0.85, 0.75, 0.70), (200, 120, 90)),
    ((0.60, 0.62, 0.70), (70, 75, 90)),
    ((0.92, 0.95, 1.05), (190, 205, 225)),
    ((0.75, 0.80, 0.85), (125, 135, 145)),
    ((1.10, 1.05, 0.95), (160, 210, 250)),
    ((0.65, 0.68, 0.80), (85, 90, 110)),
    ((0.88, 0.90, 0.90), (200, 200, 200)),
    ((0.55, 0.55, 0.65), (50, 50, 70)),
)


@dataclass(frozen=True)
class LidarSpec:
    channels: int = 32
    points_per_channel: int = 1024
    vertical_fov: tuple[float, float] = (-30.0, 10.0)
    max_range: float = 50.0
    range_noise_std: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.channels < 1 or self.points_per_channel < 1:
            raise SceneError("LiDAR needs >= 1 channel and >= 1 point per channel")
        if not self.vertical_fov[0] < self.vertical_fov[1]:
            raise SceneError("vertical_fov lower bound must be below the upper bound")
        if not self.max_range > 0:
            raise SceneError("max_range must be > 0")
        if self.range_noise_std < 0:
            raise SceneError("range_noise_std must be >= 0")

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, channel-major."""
        lo, hi = self.vertical_fov
        if self.channels == 1:
            pitch = np.array([np.radians(lo)])
        else:
            pitch = np.radians(np.linspace(lo, hi, self.channels))
        az = 2.0 * np.pi * np.arange(self.points_per_channel) / self.points_per_channel
        p, a = np.meshgrid(pitch, az, indexing="ij")
        d = np.stack([np.cos(p) * np.cos(a), np.cos(p) * np.sin(a), np.sin(p)], axis=-1)
        return d.reshape(-1, 3)


def simulate_lidar(scene: Scene, sensor_pose: Pose, spec: LidarSpec) -> PointCloud:
    """One ray per (channel, azimuth); nearest hit within range, expressed in the sensor frame."""
    dirs_local = spec.ray_directions()
    dirs = dirs_local @ sensor_pose.rotation.T
    t, hit = cast_rays(sensor_pose.translation, dirs, spec.max_range, scene.packed)
    keep = hit >= 0
    r = t[keep]
    if spec.range_noise_std > 0:
        rng = np.random.default_rng(spec.noise_seed)
        r = np.clip(r + rng.normal(0.0, spec.range_noise_std, r.shape), 0.0, spec.max_range)
    pts = dirs_local[keep] * r[:, None]
    labels = scene.packed.label[hit[keep]]
    return PointCloud(pts, None, labels, CARLA)


@dataclass(frozen=True, eq=False)
class CameraHits:
    """Per-pixel ray-cast result shared by the three aligned renders."""

    depth: np.ndarray
    primitive: np.ndarray


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray through each integer pixel coordinate, scaled so z = 1."""
    v, u = np.mgrid[0:intr.height, 0:intr.width]
    d = np.empty((intr.height, intr.width, 3))
    d[..., 0] = (u - intr.cx) / intr.fx
    d[..., 1] = (v - intr.cy) / intr.fy
    d[..., 2] = 1.0
    return d.reshape(-1, 3)


def cast_camera(scene: Scene, camera_pose: Pose, intr: CameraIntrinsics,
                far: float = CAMERA_FAR) -> CameraHits:
    dirs = pixel_rays(intr) @ camera_pose.rotation.T
    t, hit = cast_rays(camera_pose.translation, dirs, far, scene.packed)
    shape = (intr.height, intr.width)
    return CameraHits(t.reshape(shape), hit.reshape(shape))


def weather_tint(weather_id: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= weather_id < len(WEATHER_PRESETS):
        raise SceneError(f"weather_id must lie in [0, {len(WEATHER_PRESETS) - 1}]")
    tint, sky = WEATHER_PRESETS[weather_id]
    return np.array(tint), np.array(sky, dtype=np.uint8)


def shade_primitives(scene: Scene, primitive: np.ndarray, weather_id: int) -> np.ndarray:
    """Palette color of each hit primitive's label times its brightness jitter and the weather tint."""
    tint, sky = weather_tint(weather_id)
    pk = scene.packed
    palette = CARLA.palette().astype(np.float64)
    out = np.empty(primitive.shape + (3,), dtype=np.uint8)
    hit = primitive >= 0
    idx = primitive[hit]
    rgb = palette[pk.label[idx]] * pk.shade[idx, None] * tint
    out[hit] = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    out[~hit] = sky
    return out


def depth_from_hits(hits: CameraHits) -> DepthImage:
    return DepthImage(np.where(hits.primitive >= 0, hits.depth, 0.0))


def semantic_from_hits(scene: Scene, hits: CameraHits) -> SemanticImage:
    lab = np.zeros(hits.primitive.shape, dtype=np.uint16)
    hit = hits.primitive >= 0
    lab[hit] = scene.packed.label[hits.primitive[hit]]
    return SemanticImage(lab, CARLA)


def color_from_hits(scene: Scene, hits: CameraHits, weather_id: int) -> ColorImage:
    return ColorImage(shade_primitives(scene, hits.primitive, weather_id))


def render_depth(scene: Scene, camera_pose: Pose, intr: CameraIntrinsics,
                 weather_id: Optional[int] = None, far: float = CAMERA_FAR) -> DepthImage:
    return depth_from_hits(cast_camera(scene, camera_pose, intr, far))


def render_semantic(scene: Scene, camera_pose: Pose, intr: CameraIntrinsics,
                    weather_id: Optional[int] = None, far: float = CAMERA_FAR) -> SemanticImage:
    return semantic_from_hits(scene, cast_camera(scene, camera_pose, intr, far))


def render_color(scene: Scene, camera_pose: Pose, intr: CameraIntrinsics,
                 weather_id: Optional[int] = None, far: float = CAMERA_FAR) -> ColorImage:
    w = scene.weather_id if weather_id is None else weather_id
    return color_from_hits(scene, cast_camera(scene, camera_pose, intr, far), w)


def render_all(scene: Scene, camera_pose: Pose, intr: CameraIntrinsics,
               weather_id: Optional[int] = None, far: float = CAMERA_FAR):
    """Depth, semantic and color from a single cast, so the three are pixel-aligned."""
    hits = cast_camera(scene, camera_pose, intr, far)
    w = scene.weather_id if weather_id is None else weather_id
    return (depth_from_hits(hits), semantic_from_hits(scene, hits),
            color_from_hits(scene, hits, w))
