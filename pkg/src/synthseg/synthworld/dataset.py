"""Write generated scenes and scenarios to disk as a manifest-indexed dataset.

Layout of ``output_dir``::

    manifest.tsv          frame index (see synthseg.manifest)
    sensors.cfg           key=value rig description (intrinsics, camera-in-LiDAR pose)
    poses.tsv             frame_id, ego/LiDAR/camera world poses (row-major 3x4)
    <frame>.ply           LiDAR points in the LiDAR frame, labels/colors fused from the camera
    <frame>.depth.pgm     16-bit depth in millimeters
    <frame>.sem.pgm       8-bit carla12 label ids
    <frame>.color.ppm     color image
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from synthseg.fusion import frustum_mask, fuse
from synthseg.io import (atomic_write, read_pgm8, read_pgm16, read_ppm, write_pgm8, write_pgm16,
                         write_ply, write_ppm)
from synthseg.manifest import DatasetManifest, ManifestEntry, read_manifest, write_manifest
from synthseg.pcdcore import CameraIntrinsics, Pose
from synthseg.synthworld.scenario import SensorFrame, SensorRig, capture_frame
from synthseg.synthworld.scene import SceneConfig, generate_scene
from synthseg.synthworld.sensors import WEATHER_PRESETS, LidarSpec

MANIFEST_NAME = "manifest.tsv"
SENSORS_NAME = "sensors.cfg"
POSES_NAME = "poses.tsv"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    seed: int = 0
    vehicle_range: tuple[int, int] = (40, 80)
    pedestrian_range: tuple[int, int] = (10, 30)
    town_extent: float = 120.0
    building_density_range: tuple[float, float] = (0.5, 0.9)
    vegetation_density_range: tuple[float, float] = (0.3, 0.7)
    rig: SensorRig = field(default_factory=SensorRig)
    crop_to_camera: bool = True

    def __post_init__(self):
        for name in ("vehicle_range", "pedestrian_range", "building_density_range",
                     "vegetation_density_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise DatasetError(f"{name} must be an increasing non-negative pair")

    def scene_config(self, index: int) -> SceneConfig:
        rng = np.random.default_rng([self.seed, index])
        return SceneConfig(
            seed=int(rng.integers(2**31)),
            vehicle_count=int(rng.integers(self.vehicle_range[0], self.vehicle_range[1] + 1)),
            pedestrian_count=int(rng.integers(self.pedestrian_range[0], self.pedestrian_range[1] + 1)),
            weather_id=index % len(WEATHER_PRESETS),
            town_extent=self.town_extent,
            building_density=float(rng.uniform(*self.building_density_range)),
            vegetation_density=float(rng.uniform(*self.vegetation_density_range)),
        )


def _pose_fields(p: Pose) -> str:
    m = np.hstack([p.rotation, p.translation[:, None]])
    return ",".join(repr(float(v)) for v in m.ravel())


def _parse_pose(text: str) -> Pose:
    m = np.array([float(v) for v in text.split(",")]).reshape(3, 4)
    return Pose(m[:, :3], m[:, 3])


def rig_to_text(rig: SensorRig) -> str:
    c, l = rig.camera, rig.lidar
    lines = [
        f"camera_width={c.width}", f"camera_height={c.height}",
        f"fx={float(c.fx)!r}", f"fy={float(c.fy)!r}", f"cx={float(c.cx)!r}", f"cy={float(c.cy)!r}",
        f"camera_far={float(rig.camera_far)!r}",
        f"camera_in_lidar={_pose_fields(rig.camera_in_lidar)}",
        f"lidar_mount={_pose_fields(rig.lidar_mount)}",
        f"lidar_channels={l.channels}", f"lidar_points_per_channel={l.points_per_channel}",
        f"lidar_vertical_fov={float(l.vertical_fov[0])!r},{float(l.vertical_fov[1])!r}",
        f"lidar_max_range={float(l.max_range)!r}",
    ]
    return "\n".join(lines) + "\n"


def rig_from_text(text: str) -> SensorRig:
    kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
    try:
        cam = CameraIntrinsics(int(kv["camera_width"]), int(kv["camera_height"]), float(kv["fx"]),
                               float(kv["fy"]), float(kv["cx"]), float(kv["cy"]))
        mount = _parse_pose(kv["lidar_mount"])
        cam_in_lidar = _parse_pose(kv["camera_in_lidar"])
        lo, hi = (float(v) for v in kv["lidar_vertical_fov"].split(","))
        lidar = LidarSpec(int(kv["lidar_channels"]), int(kv["lidar_points_per_channel"]),
                          (lo, hi), float(kv["lidar_max_range"]))
    except KeyError as e:
        raise DatasetError(f"sensors file is missing key {e}") from None
    return SensorRig(lidar, mount, cam, mount.compose(cam_in_lidar), float(kv.get("camera_far", 65.0)))


def read_rig(dataset_dir) -> SensorRig:
    return rig_from_text((Path(dataset_dir) / SENSORS_NAME).read_text())


def write_frame(frame: SensorFrame, rig: SensorRig, output_dir: Path, name: str,
                crop_to_camera: bool = True) -> ManifestEntry:
    """Fuse the frame's LiDAR cloud with its camera GT and write all files."""
    cam = rig.camera_in_lidar
    cloud = fuse(frame.lidar, frame.semantic, frame.color, rig.camera, cam)
    if crop_to_camera:
        cloud = cloud.select(frustum_mask(cloud, rig.camera, cam))
    ply = f"{name}.ply"
    depth = f"{name}.depth.pgm"
    sem = f"{name}.sem.pgm"
    color = f"{name}.color.ppm"
    write_ply(cloud, output_dir / ply)
    write_pgm16(frame.depth, output_dir / depth)
    write_pgm8(frame.semantic, output_dir / sem)
    write_ppm(frame.color, output_dir / color)
    return ManifestEntry(name, ply, depth, sem, color, len(cloud), "carla12")


def _finish(entries: Sequence[ManifestEntry], frames_poses: Iterable[str], rig: SensorRig,
            output_dir: Path) -> DatasetManifest:
    atomic_write(output_dir / SENSORS_NAME, rig_to_text(rig).encode())
    atomic_write(output_dir / POSES_NAME, "".join(frames_poses).encode())
    manifest = DatasetManifest(tuple(entries), output_dir)
    return write_manifest(manifest, output_dir / MANIFEST_NAME)


def _pose_line(name: str, f: SensorFrame) -> str:
    return "\t".join([name, _pose_fields(f.ego_pose), _pose_fields(f.lidar_pose),
                      _pose_fields(f.camera_pose)]) + "\n"


def _prepare_dir(output_dir) -> Path:
    output_dir = Path(output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {output_dir}: {e}") from e
    return output_dir


def generate_dataset(config: DatasetConfig, scene_count: int, output_dir) -> DatasetManifest:
    """Generate ``scene_count`` scenes, one captured frame each, spawned at each scene's ego spawn."""
    if scene_count < 1:
        raise DatasetError("scene_count must be >= 1")
    output_dir = _prepare_dir(output_dir)
    entries, poses = [], []
    for i in range(scene_count):
        scene = generate_scene(config.scene_config(i))
        frame = capture_frame(scene, scene.ego_spawn, config.rig, i)
        name = f"frame_{i:06d}"
        entries.append(write_frame(frame, config.rig, output_dir, name, config.crop_to_camera))
        poses.append(_pose_line(name, frame))
    return _finish(entries, poses, config.rig, output_dir)


def write_scenario_dataset(frames: Sequence[SensorFrame], rig: SensorRig, output_dir,
                           prefix: str = "scenario", crop_to_camera: bool = True) -> DatasetManifest:
    if not frames:
        raise DatasetError("scenario produced no frames")
    output_dir = _prepare_dir(output_dir)
    entries, poses = [], []
    for f in frames:
        name = f"{prefix}_{f.frame_id:06d}"
        entries.append(write_frame(f, rig, output_dir, name, crop_to_camera))
        poses.append(_pose_line(name, f))
    return _finish(entries, poses, rig, output_dir)


def load_frame_images(manifest: DatasetManifest, entry: ManifestEntry, taxonomy=None):
    """Read (depth, semantic, color) images for one manifest entry."""
    paths = [manifest.resolve(p) for p in (entry.depth, entry.semantic, entry.color)]
    if any(p is None for p in paths):
        raise DatasetError(f"frame {entry.frame_id} lacks camera images")
    return read_pgm16(paths[0]), read_pgm8(paths[1], taxonomy), read_ppm(paths[2])


__all__ = ["DatasetConfig", "DatasetError", "generate_dataset", "write_scenario_dataset",
           "write_frame", "read_rig", "rig_to_text", "rig_from_text", "load_frame_images",
           "read_manifest", "MANIFEST_NAME"]
