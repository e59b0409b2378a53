"""Procedural urban scenes built from labeled geometric primitives."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from synthseg.pcdcore import Pose
from synthseg.synthworld.raycast import BOX, CYLINDER, ELLIPSOID, bounding_radius
from synthseg.taxonomy import builtin_taxonomies

CARLA = builtin_taxonomies()["carla12"]
L = {name: CARLA.id_of(name) for name in CARLA.names}

CURB_HEIGHT = 0.15
GROUND_DEPTH = 0.5
ROAD_WIDTH = 7.0
SIDEWALK_WIDTH = 3.0
BLOCK_SPACING = 40.0
CAR_HALF = (2.25, 0.9, 0.75)
PEDESTRIAN_RADIUS = 0.3
PEDESTRIAN_HEIGHT = 1.75
EGO_CLEARANCE = 8.0

KIND_NAMES = {"box": BOX, "cylinder": CYLINDER, "ellipsoid": ELLIPSOID}


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    vehicle_count: int = 60
    pedestrian_count: int = 20
    weather_id: int = 0
    town_extent: float = 120.0
    building_density: float = 0.7
    vegetation_density: float = 0.5

    def __post_init__(self):
        if self.vehicle_count < 0 or self.pedestrian_count < 0:
            raise SceneError("actor counts must be >= 0")
        if not 0 <= self.weather_id <= 13:
            raise SceneError("weather_id must lie in [0, 13]")
        if not self.town_extent > 0:
            raise SceneError("town_extent must be > 0")
        for name in ("building_density", "vegetation_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SceneError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class GroundRect:
    """Axis-aligned ground patch whose top surface sits at ``elevation``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    elevation: float
    label: int
    shade: float = 1.0


@dataclass(frozen=True)
class Solid:
    """Labeled primitive. ``half`` holds box half-extents, (r, r, half-height)
    for vertical cylinders, or semi-axes for ellipsoids. Rotation is yaw only."""

    kind: str
    label: int
    center: tuple[float, float, float]
    half: tuple[float, float, float]
    yaw: float = 0.0
    shade: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KIND_NAMES:
            raise SceneError(f"unknown primitive kind '{self.kind}'")
        if not 0 < self.label < len(CARLA):
            raise SceneError(f"solid label {self.label} is not a carla12 class")
        if min(self.half) <= 0:
            raise SceneError("primitive dimensions must be positive")

    def moved(self, x: float, y: float, yaw: Optional[float] = None) -> "Solid":
        return Solid(self.kind, self.label, (x, y, self.center[2]), self.half,
                     self.yaw if yaw is None else yaw, self.shade, self.name)

    def footprint(self) -> np.ndarray:
        """Corners (4,2) of the xy footprint; round primitives use their bounding square."""
        hx, hy = self.half[0], self.half[1]
        yaw = self.yaw if self.kind == "box" else 0.0
        c, s = np.cos(yaw), np.sin(yaw)
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        return local @ np.array([[c, s], [-s, c]]) + np.array(self.center[:2])

    def z_range(self) -> tuple[float, float]:
        return self.center[2] - self.half[2], self.center[2] + self.half[2]


def _separated(a: np.ndarray, b: np.ndarray, margin: float) -> bool:
    for poly in (a, b):
        for i in range(4):
            edge = poly[(i + 1) % 4] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            norm = np.hypot(*axis)
            if norm == 0:
                continue
            axis /= norm
            pa, pb = a @ axis, b @ axis
            if pa.max() + margin <= pb.min() or pb.max() + margin <= pa.min():
                return True
    return False


def solids_overlap(a: Solid, b: Solid, margin: float = 0.0) -> bool:
    """Footprint separating-axis test plus vertical interval overlap."""
    az, bz = a.z_range(), b.z_range()
    if az[1] <= bz[0] or bz[1] <= az[0]:
        return False
    reach = np.hypot(a.half[0], a.half[1]) + np.hypot(b.half[0], b.half[1]) + margin
    if np.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) >= reach:
        return False
    return not _separated(a.footprint(), b.footprint(), margin)


@dataclass(frozen=True)
class PackedPrimitives:
    kind: np.ndarray
    center: np.ndarray
    half: np.ndarray
    cos_yaw: np.ndarray
    sin_yaw: np.ndarray
    radius: np.ndarray
    label: np.ndarray
    shade: np.ndarray


@dataclass(frozen=True)
class Scene:
    ground: tuple[GroundRect, ...]
    solids: tuple[Solid, ...]
    ego_spawn: Pose = field(default_factory=Pose.identity)
    curb_height: float = CURB_HEIGHT
    weather_id: int = 0

    def __post_init__(self):
        road = [g.elevation for g in self.ground if g.label == L["Road"]]
        walk = [g.elevation for g in self.ground if g.label == L["Sidewalk"]]
        if road and walk and min(walk) <= max(road):
            raise SceneError("sidewalks must sit above the road")

    def with_solids(self, extra: Iterable[Solid]) -> "Scene":
        return Scene(self.ground, self.solids + tuple(extra), self.ego_spawn,
                     self.curb_height, self.weather_id)

    def count(self, label_name: str) -> int:
        lid = CARLA.id_of(label_name)
        return sum(1 for s in self.solids if s.label == lid)

    @cached_property
    def packed(self) -> PackedPrimitives:
        kinds, centers, halves, yaws, labels, shades = [], [], [], [], [], []
        for g in self.ground:
            kinds.append(BOX)
            centers.append(((g.xmin + g.xmax) / 2, (g.ymin + g.ymax) / 2,
                            g.elevation - GROUND_DEPTH / 2))
            halves.append(((g.xmax - g.xmin) / 2, (g.ymax - g.ymin) / 2, GROUND_DEPTH / 2))
            yaws.append(0.0)
            labels.append(g.label)
            shades.append(g.shade)
        for s in self.solids:
            kinds.append(KIND_NAMES[s.kind])
            centers.append(s.center)
            halves.append(s.half)
            yaws.append(s.yaw)
            labels.append(s.label)
            shades.append(s.shade)
        kind = np.array(kinds, dtype=np.int64)
        half = np.array(halves, dtype=np.float64).reshape(-1, 3)
        yaw = np.array(yaws, dtype=np.float64)
        return PackedPrimitives(
            kind=kind,
            center=np.array(centers, dtype=np.float64).reshape(-1, 3),
            half=half,
            cos_yaw=np.cos(yaw),
            sin_yaw=np.sin(yaw),
            radius=bounding_radius(kind, half),
            label=np.array(labels, dtype=np.uint16),
            shade=np.array(shades, dtype=np.float64),
        )


def _shade(rng) -> float:
    return float(rng.uniform(0.8, 1.2))


class _Placer:
    """Rejection placement against already placed solids."""

    def __init__(self, rng, reserved: list[Solid]):
        self.rng = rng
        self.placed: list[Solid] = list(reserved)

    def fits(self, s: Solid, margin: float) -> bool:
        return not any(solids_overlap(s, o, margin) for o in self.placed)

    def try_place(self, make, attempts: int, margin: float = 0.2, force: bool = False):
        s = None
        for _ in range(attempts):
            s = make()
            if self.fits(s, margin):
                self.placed.append(s)
                return s
        if force and s is not None:
            self.placed.append(s)
            return s
        return None


def generate_scene(config: SceneConfig) -> Scene:
    """Deterministic grid town: roads, elevated sidewalks, blocks of buildings,
    walls/fences, vegetation, poles and signs, parked/driving cars and pedestrians."""
    rng = np.random.default_rng(config.seed)
    ext = float(config.town_extent)
    n = max(1, int(round(ext / BLOCK_SPACING)))
    spacing = ext / n
    hw = min(ROAD_WIDTH / 2, spacing / 4)
    sw = min(SIDEWALK_WIDTH, spacing / 8)
    lines = [-ext / 2 + k * spacing for k in range(n + 1)]
    lo, hi = -ext / 2 - hw, ext / 2 + hw
    curb = CURB_HEIGHT

    ground: list[GroundRect] = []
    for c in lines:
        ground.append(GroundRect(c - hw, c + hw, lo, hi, 0.0, L["Road"], _shade(rng)))
        ground.append(GroundRect(lo, hi, c - hw, c + hw, 0.0, L["Road"], _shade(rng)))
    for c in lines:
        ground.append(GroundRect(c - 0.075, c + 0.075, lo, hi, 0.01, L["Road-line"], _shade(rng)))
        ground.append(GroundRect(lo, hi, c - 0.075, c + 0.075, 0.01, L["Road-line"], _shade(rng)))

    blocks = []
    for i in range(n):
        for j in range(n):
            x0, x1 = lines[i] + hw, lines[i + 1] - hw
            y0, y1 = lines[j] + hw, lines[j + 1] - hw
            blocks.append((x0, x1, y0, y1))
            ground += [
                GroundRect(x0, x1, y0, y0 + sw, curb, L["Sidewalk"], _shade(rng)),
                GroundRect(x0, x1, y1 - sw, y1, curb, L["Sidewalk"], _shade(rng)),
                GroundRect(x0, x0 + sw, y0 + sw, y1 - sw, curb, L["Sidewalk"], _shade(rng)),
                GroundRect(x1 - sw, x1, y0 + sw, y1 - sw, curb, L["Sidewalk"], _shade(rng)),
            ]
            if x1 - x0 > 2 * sw and y1 - y0 > 2 * sw:
                ground.append(GroundRect(x0 + sw, x1 - sw, y0 + sw, y1 - sw, curb,
                                         L["Other"], _shade(rng)))

    # ego spawn on a driving lane; reserved so no car is placed on top of it
    ego_line = lines[int(rng.integers(len(lines)))]
    along = float(rng.uniform(-ext / 2 + hw, ext / 2 - hw))
    along_x = bool(rng.integers(2))
    lane = hw / 2
    heading = float(rng.choice([0.0, np.pi]))
    if along_x:
        ex, ey, eyaw = along, ego_line - lane if heading == 0.0 else ego_line + lane, heading
    else:
        ex, ey, eyaw = ego_line + lane if heading == 0.0 else ego_line - lane, along, heading + np.pi / 2
    ego = Pose.from_rpy(yaw=eyaw, translation=(ex, ey, 0.0))
    ego_zone = Solid("cylinder", L["Other"], (ex, ey, 1.0), (EGO_CLEARANCE, EGO_CLEARANCE, 1.0))

    placer = _Placer(rng, [ego_zone])
    solids: list[Solid] = []

    # buildings along block interiors
    for (x0, x1, y0, y1) in blocks:
        ix0, ix1, iy0, iy1 = x0 + sw, x1 - sw, y0 + sw, y1 - sw
        if ix1 - ix0 < 4 or iy1 - iy0 < 4:
            continue
        for edge in range(4):
            pos = 0.0
            length = (ix1 - ix0) if edge < 2 else (iy1 - iy0)
            while pos < length - 4:
                width = float(rng.uniform(8, 16))
                width = min(width, length - pos)
                depth = float(min(rng.uniform(8, 14), (iy1 - iy0 if edge < 2 else ix1 - ix0) / 2))
                height = float(rng.uniform(6, 28))
                keep = rng.random() < config.building_density
                shade = _shade(rng)
                mid = pos + width / 2
                pos += width + float(rng.uniform(0.5, 3.0))
                if not keep or width < 3 or depth < 2:
                    continue
                inset = 0.5
                if edge == 0:
                    c = (ix0 + mid, iy0 + inset + depth / 2)
                    hxy = (width / 2, depth / 2)
                elif edge == 1:
                    c = (ix0 + mid, iy1 - inset - depth / 2)
                    hxy = (width / 2, depth / 2)
                elif edge == 2:
                    c = (ix0 + inset + depth / 2, iy0 + mid)
                    hxy = (depth / 2, width / 2)
                else:
                    c = (ix1 - inset - depth / 2, iy0 + mid)
                    hxy = (depth / 2, width / 2)
                b = Solid("box", L["Building"], (c[0], c[1], curb + height / 2),
                          (hxy[0] * 0.98, hxy[1] * 0.98, height / 2), 0.0, shade)
                if placer.fits(b, 0.1):
                    placer.placed.append(b)
                    solids.append(b)

        # one wall or fence run per block, at the inner edge of the sidewalk
        if rng.random() < 0.8:
            is_wall = bool(rng.integers(2))
            h = 2.5 if is_wall else 1.3
            t = 0.3 if is_wall else 0.08
            edge = int(rng.integers(4))
            seg = float(rng.uniform(6, 14))
            if edge < 2:
                cx = float(rng.uniform(ix0 + seg / 2, max(ix0 + seg / 2, ix1 - seg / 2)))
                cy = iy0 + t if edge == 0 else iy1 - t
                half = (seg / 2, t / 2, h / 2)
            else:
                cy = float(rng.uniform(iy0 + seg / 2, max(iy0 + seg / 2, iy1 - seg / 2)))
                cx = ix0 + t if edge == 2 else ix1 - t
                half = (t / 2, seg / 2, h / 2)
            w = Solid("box", L["Wall"] if is_wall else L["Fence"], (cx, cy, curb + h / 2),
                      half, 0.0, _shade(rng))
            if placer.fits(w, 0.05):
                placer.placed.append(w)
                solids.append(w)

    # poles and signs along the curb side of sidewalks
    for (x0, x1, y0, y1) in blocks:
        for edge in range(4):
            length = (x1 - x0) if edge < 2 else (y1 - y0)
            k = 0
            for a in np.arange(6.0, length - 3.0, 18.0):
                a = float(a + rng.uniform(-2, 2))
                off = 0.5
                if edge == 0:
                    p = (x0 + a, y0 + off)
                elif edge == 1:
                    p = (x0 + a, y1 - off)
                elif edge == 2:
                    p = (x0 + off, y0 + a)
                else:
                    p = (x1 - off, y0 + a)
                pole = Solid("cylinder", L["Pole"], (p[0], p[1], curb + 3.0), (0.12, 0.12, 3.0),
                             0.0, _shade(rng))
                if not placer.fits(pole, 0.1):
                    continue
                placer.placed.append(pole)
                solids.append(pole)
                k += 1
                if k % 2 == 0:
                    plate = (0.4, 0.04, 0.4) if edge >= 2 else (0.04, 0.4, 0.4)
                    sign = Solid("box", L["Traffic-sign"], (p[0], p[1], curb + 2.6),
                                 plate, 0.0, _shade(rng))
                    solids.append(sign)
                    placer.placed.append(sign)

    # vegetation: canopy clusters on sidewalks and in block interiors
    for (x0, x1, y0, y1) in blocks:
        n_trees = int(round(config.vegetation_density * 10))
        for _ in range(n_trees):
            def make_tree():
                if rng.random() < 0.6:
                    edge = int(rng.integers(4))
                    if edge < 2:
                        px = float(rng.uniform(x0 + 1, x1 - 1))
                        py = y0 + sw * 0.65 if edge == 0 else y1 - sw * 0.65
                    else:
                        py = float(rng.uniform(y0 + 1, y1 - 1))
                        px = x0 + sw * 0.65 if edge == 2 else x1 - sw * 0.65
                else:
                    px = float(rng.uniform(x0 + sw + 1, max(x0 + sw + 1, x1 - sw - 1)))
                    py = float(rng.uniform(y0 + sw + 1, max(y0 + sw + 1, y1 - sw - 1)))
                r = float(rng.uniform(0.8, 1.3))
                return Solid("ellipsoid", L["Vegetation"], (px, py, curb + 2.2),
                             (0.25, 0.25, 2.2), 0.0, _shade(rng)), r
            for _attempt in range(20):
                trunk, r = make_tree()
                crown = Solid("cylinder", L["Vegetation"], trunk.center, (r, r, 2.2))
                if placer.fits(crown, 0.1):
                    break
            else:
                continue
            tree = [trunk]
            cx, cy = trunk.center[:2]
            top = curb + float(rng.uniform(3.5, 5.0))
            for _k in range(int(rng.integers(2, 5))):
                tree.append(Solid(
                    "ellipsoid", L["Vegetation"],
                    (cx + float(rng.normal(0, 0.4)), cy + float(rng.normal(0, 0.4)),
                     top + float(rng.normal(0, 0.3))),
                    (r * float(rng.uniform(0.8, 1.2)), r * float(rng.uniform(0.8, 1.2)),
                     r * float(rng.uniform(0.7, 1.0))),
                    0.0, _shade(rng)))
            solids += tree
            placer.placed.append(Solid("cylinder", L["Vegetation"], (cx, cy, top / 2),
                                       (r + 0.5, r + 0.5, top / 2 + r)))
        # low hedges in the interior
        for _ in range(int(round(config.vegetation_density * 4))):
            px = float(rng.uniform(x0 + sw + 1, max(x0 + sw + 1, x1 - sw - 1)))
            py = float(rng.uniform(y0 + sw + 1, max(y0 + sw + 1, y1 - sw - 1)))
            hedge = Solid("ellipsoid", L["Vegetation"], (px, py, curb + 0.5),
                          (float(rng.uniform(1, 2.5)), float(rng.uniform(0.6, 1.2)), 0.6),
                          0.0, _shade(rng))
            if placer.fits(hedge, 0.1):
                placer.placed.append(hedge)
                solids.append(hedge)

    # cars: driving lanes and curbside parking, exactly vehicle_count of them
    for k in range(config.vehicle_count):
        def make_car():
            line = lines[int(rng.integers(len(lines)))]
            a = float(rng.uniform(lo + 3, hi - 3))
            slot = float(rng.choice([-hw + 1.2, -hw / 2, hw / 2, hw - 1.2]))
            flip = float(rng.choice([0.0, np.pi]))
            if rng.integers(2):
                return Solid("box", L["Car"], (a, line + slot, CAR_HALF[2]), CAR_HALF,
                             flip, _shade(rng), f"car{k}")
            return Solid("box", L["Car"], (line + slot, a, CAR_HALF[2]), CAR_HALF,
                         flip + np.pi / 2, _shade(rng), f"car{k}")
        solids.append(placer.try_place(make_car, 400, margin=0.5, force=True))

    # pedestrians on sidewalks
    for k in range(config.pedestrian_count):
        def make_ped():
            (x0, x1, y0, y1) = blocks[int(rng.integers(len(blocks)))]
            edge = int(rng.integers(4))
            u = float(rng.uniform(0.3, sw - 0.3)) if sw > 0.6 else sw / 2
            if edge < 2:
                px = float(rng.uniform(x0 + 0.5, x1 - 0.5))
                py = y0 + u if edge == 0 else y1 - u
            else:
                py = float(rng.uniform(y0 + 0.5, y1 - 0.5))
                px = x0 + u if edge == 2 else x1 - u
            return Solid("cylinder", L["Pedestrian"], (px, py, curb + PEDESTRIAN_HEIGHT / 2),
                         (PEDESTRIAN_RADIUS, PEDESTRIAN_RADIUS, PEDESTRIAN_HEIGHT / 2),
                         0.0, _shade(rng), f"ped{k}")
        solids.append(placer.try_place(make_ped, 200, margin=0.1, force=True))

    return Scene(tuple(ground), tuple(solids), ego, curb, config.weather_id)
