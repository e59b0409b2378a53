"""Core geometric containers shared by the whole pipeline.

Frames: world and ego/sensor frames are right-handed with x forward, y left,
z up. Camera frames follow the pinhole convention: z forward, x right, y down.
All containers are immutable; arrays are stored read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from synthseg.taxonomy import Taxonomy

ORTHO_TOL = 1e-9

# camera (z fwd, x right, y down) -> body (x fwd, y left, z up)
CAMERA_TO_BODY = np.array(
    [[0.0, 0.0, 1.0],
     [-1.0, 0.0, 0.0],
     [0.0, -1.0, 0.0]]
)


class GeometryError(ValueError):
    """Invalid geometric input (non-finite values, bad shapes, bad rotations)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def as_point3(p: Sequence[float]) -> np.ndarray:
    """Validate and return a single point as a float64 array of shape (3,)."""
    a = np.asarray(p, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise GeometryError(f"point must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"point has non-finite component: {a}")
    return a


def as_rgb(c: Sequence[int]) -> tuple[int, int, int]:
    r, g, b = (int(v) for v in c)
    for v in (r, g, b):
        if not 0 <= v <= 255:
            raise GeometryError(f"color channel out of [0,255]: {c}")
    return (r, g, b)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping points in a sensor frame into the world frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise GeometryError("pose needs a 3x3 rotation and a 3-vector translation")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise GeometryError("pose contains non-finite values")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise GeometryError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy(cls, roll: float = 0.0, pitch: float = 0.0, yaw: float = 0.0,
                 translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "Pose":
        """Build a pose from roll/pitch/yaw in radians (R = Rz(yaw) Ry(pitch) Rx(roll))."""
        cr, sr = np.cos(roll), np.sin(roll)
        cp, sp = np.cos(pitch), np.sin(pitch)
        cy, sy = np.cos(yaw), np.sin(yaw)
        rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
        ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
        rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
        return cls(rz @ ry @ rx, translation)

    @classmethod
    def camera_looking(cls, yaw: float = 0.0, pitch: float = 0.0,
                       translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "Pose":
        """Camera-frame pose whose optical axis points along body heading (yaw, pitch).

        Positive pitch tilts the optical axis downward.
        """
        body = cls.from_rpy(0.0, pitch, yaw)
        return cls(body.rotation @ CAMERA_TO_BODY, translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Return self ∘ other: apply `other` first, then `self`."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def __eq__(self, other):
        return (isinstance(other, Pose)
                and np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError("image dimensions must be >= 1")
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise GeometryError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, width: int = 800, height: int = 600, hfov_deg: float = 90.0) -> "CameraIntrinsics":
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(width, height, f, f, width / 2.0, height / 2.0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Columnar point store: (N,3) float64 positions, optional uint8 colors and uint16 labels."""

    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    taxonomy: Optional["Taxonomy"] = field(default=None)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.size == 0:
            pos = pos.reshape(0, 3)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError(f"positions must be (N,3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("positions contain NaN/Inf")
        n = pos.shape[0]
        object.__setattr__(self, "positions", _frozen(pos))
        if self.colors is not None:
            raw = np.asarray(self.colors)
            if raw.size == 0:
                raw = raw.reshape(0, 3)
            if raw.shape != (n, 3):
                raise GeometryError(f"colors must be ({n},3), got {raw.shape}")
            if raw.dtype != np.uint8 and (raw.min(initial=0) < 0 or raw.max(initial=0) > 255):
                raise GeometryError("color channels must lie in [0,255]")
            object.__setattr__(self, "colors", _frozen(raw.astype(np.uint8)))
        if self.labels is not None:
            lab = np.asarray(self.labels).reshape(-1)
            if lab.shape != (n,):
                raise GeometryError(f"labels must have length {n}, got {lab.shape[0]}")
            if lab.size and (lab.min() < 0 or lab.max() > 0xFFFF):
                raise GeometryError("label ids must fit in uint16")
            lab = lab.astype(np.uint16)
            if self.taxonomy is not None and lab.size and int(lab.max()) >= len(self.taxonomy):
                raise GeometryError(
                    f"label id {int(lab.max())} not in taxonomy {self.taxonomy.name}")
            object.__setattr__(self, "labels", _frozen(lab))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def with_(self, **changes) -> "PointCloud":
        kw = dict(positions=self.positions, colors=self.colors,
                  labels=self.labels, taxonomy=self.taxonomy)
        kw.update(changes)
        return PointCloud(**kw)

    def select(self, index) -> "PointCloud":
        return PointCloud(
            self.positions[index],
            None if self.colors is None else self.colors[index],
            None if self.labels is None else self.labels[index],
            self.taxonomy,
        )

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (same(self.positions, other.positions) and same(self.colors, other.colors)
                and same(self.labels, other.labels)
                and getattr(self.taxonomy, "name", None) == getattr(other.taxonomy, "name", None))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Depth in meters, shape (height, width); 0 means no return."""

    depths: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=np.float64)
        if d.ndim != 2:
            raise GeometryError("depth image must be 2-D")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise GeometryError("depths must be finite and >= 0")
        object.__setattr__(self, "depths", _frozen(d))

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    @property
    def height(self) -> int:
        return self.depths.shape[0]


@dataclass(frozen=True, eq=False)
class SemanticImage:
    labels: np.ndarray
    taxonomy: Optional["Taxonomy"] = None

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise GeometryError("semantic image must be 2-D")
        if lab.size and (lab.min() < 0 or lab.max() > 0xFFFF):
            raise GeometryError("label ids must fit in uint16")
        lab = lab.astype(np.uint16)
        if self.taxonomy is not None and lab.size and int(lab.max()) >= len(self.taxonomy):
            raise GeometryError(f"label id {int(lab.max())} not in taxonomy {self.taxonomy.name}")
        object.__setattr__(self, "labels", _frozen(lab))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True, eq=False)
class ColorImage:
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3:
            raise GeometryError("color image must be (H, W, 3)")
        if p.dtype != np.uint8 and p.size and (p.min() < 0 or p.max() > 255):
            raise GeometryError("color channels must lie in [0,255]")
        object.__setattr__(self, "pixels", _frozen(p.astype(np.uint8)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def check_image_matches(intr: CameraIntrinsics, *images) -> None:
    for img in images:
        if (img.width, img.height) != (intr.width, intr.height):
            raise GeometryError(
                f"image is {img.width}x{img.height} but intrinsics are {intr.width}x{intr.height}")


def transform_cloud(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Map positions by rotation·p + translation; attributes are carried through."""
    return cloud.with_(positions=pose.apply(cloud.positions))
