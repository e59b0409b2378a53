"""Scripted scenarios: actors with behaviours, ego-proximity triggers, sensor capture.

Script text format (one directive per line, ``#`` comments, yaw in degrees)::

    duration 40
    frame_rate 10
    weather 3
    ego x=0 y=-1.75 yaw=0 speed=5 path=20,-1.75;60,-1.75
    actor name=car1 kind=car x=60 y=1.75 yaw=180 behaviour=straight speed=8
    actor name=walker kind=pedestrian x=10 y=6 behaviour=waypoints speed=1.4 path=10,12
    actor name=parked kind=car x=30 y=-2.5 yaw=0
    trigger actor=car1 x=30 y=-1.75 radius=10
    lidar channels=32 points=1024 fov=-30,10 range=50
    camera width=800 height=600 hfov=90

Actors named by a trigger stay idle until the ego comes within ``radius`` of
the trigger point; other actors are active from the first frame. A moving
actor that would overlap another solid advances only up to contact and stays
stopped from then on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from synthseg.pcdcore import (CameraIntrinsics, ColorImage, DepthImage, PointCloud, Pose,
                              SemanticImage)
from synthseg.synthworld.scene import (CAR_HALF, L, PEDESTRIAN_HEIGHT, PEDESTRIAN_RADIUS,
                                       Scene, SceneError, Solid, solids_overlap)
from synthseg.synthworld.sensors import CAMERA_FAR, LidarSpec, render_all, simulate_lidar

BEHAVIOURS = ("stationary", "straight", "waypoints")


class ScriptError(ValueError):
    pass


class SpawnCollisionError(SceneError):
    def __init__(self, actor: str, other: str):
        super().__init__(f"actor '{actor}' spawns inside '{other}'")
        self.actor = actor


@dataclass(frozen=True)
class SensorRig:
    lidar: LidarSpec = field(default_factory=LidarSpec)
    lidar_mount: Pose = field(default_factory=lambda: Pose.from_rpy(translation=(0.0, 0.0, 1.8)))
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics.from_fov)
    camera_mount: Pose = field(default_factory=lambda: Pose.camera_looking(translation=(0.0, 0.0, 1.8)))
    camera_far: float = CAMERA_FAR

    @property
    def camera_in_lidar(self) -> Pose:
        """Camera pose expressed in the LiDAR frame."""
        return self.lidar_mount.inverse().compose(self.camera_mount)


@dataclass(frozen=True, eq=False)
class SensorFrame:
    frame_id: int
    depth: DepthImage
    semantic: SemanticImage
    color: ColorImage
    lidar: PointCloud
    ego_pose: Pose
    lidar_pose: Pose
    camera_pose: Pose
    weather_id: int = 0
    actors: tuple = ()  # scripted actor solids as placed in this frame

    def same_content(self, other: "SensorFrame") -> bool:
        return (np.array_equal(self.depth.depths, other.depth.depths)
                and np.array_equal(self.semantic.labels, other.semantic.labels)
                and np.array_equal(self.color.pixels, other.color.pixels)
                and self.lidar == other.lidar
                and self.ego_pose == other.ego_pose
                and self.lidar_pose == other.lidar_pose
                and self.camera_pose == other.camera_pose)


def capture_frame(scene: Scene, ego_pose: Pose, rig: SensorRig, frame_id: int = 0,
                  weather_id: Optional[int] = None) -> SensorFrame:
    weather = scene.weather_id if weather_id is None else weather_id
    lidar_pose = ego_pose.compose(rig.lidar_mount)
    camera_pose = ego_pose.compose(rig.camera_mount)
    cloud = simulate_lidar(scene, lidar_pose, rig.lidar)
    depth, sem, color = render_all(scene, camera_pose, rig.camera, weather, rig.camera_far)
    return SensorFrame(frame_id, depth, sem, color, cloud, ego_pose, lidar_pose, camera_pose, weather)


@dataclass(frozen=True)
class ActorSpec:
    name: str
    kind: str = "car"
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    behaviour: str = "stationary"
    speed: float = 0.0
    path: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("car", "pedestrian"):
            raise ScriptError(f"actor '{self.name}': unknown kind '{self.kind}'")
        if self.behaviour not in BEHAVIOURS:
            raise ScriptError(f"actor '{self.name}': unknown behaviour '{self.behaviour}'")
        if self.speed < 0:
            raise ScriptError(f"actor '{self.name}': speed must be >= 0")
        if self.behaviour == "waypoints" and not self.path:
            raise ScriptError(f"actor '{self.name}': waypoints behaviour needs a path")

    def solid(self, x: float, y: float, yaw: float) -> Solid:
        if self.kind == "car":
            return Solid("box", L["Car"], (x, y, CAR_HALF[2]), CAR_HALF, yaw, 1.0, self.name)
        return Solid("cylinder", L["Pedestrian"], (x, y, PEDESTRIAN_HEIGHT / 2 + 0.15),
                     (PEDESTRIAN_RADIUS, PEDESTRIAN_RADIUS, PEDESTRIAN_HEIGHT / 2), 0.0, 1.0, self.name)


@dataclass(frozen=True)
class EgoSpec:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    speed: float = 0.0
    path: tuple[tuple[float, float], ...] = ()
    rig: SensorRig = field(default_factory=SensorRig)


@dataclass(frozen=True)
class Trigger:
    actor: str
    x: float
    y: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ScriptError(f"trigger for '{self.actor}': radius must be > 0")


@dataclass(frozen=True)
class ScenarioScript:
    actors: tuple[ActorSpec, ...] = ()
    ego: EgoSpec = field(default_factory=EgoSpec)
    triggers: tuple[Trigger, ...] = ()
    duration: int = 1
    frame_rate: float = 10.0
    weather_id: Optional[int] = None

    def __post_init__(self):
        if self.duration < 1:
            raise ScriptError("duration must be >= 1 frame")
        if not self.frame_rate > 0:
            raise ScriptError("frame_rate must be > 0")
        names = [a.name for a in self.actors]
        if len(set(names)) != len(names):
            raise ScriptError("actor names must be unique")
        for t in self.triggers:
            if t.actor not in names:
                raise ScriptError(f"trigger references unknown actor '{t.actor}'")


def _follow(x: float, y: float, yaw: float, path, idx: int, step: float):
    """Advance along waypoints by ``step`` meters; returns (x, y, yaw, next index)."""
    while step > 1e-12 and idx < len(path):
        tx, ty = path[idx]
        dx, dy = tx - x, ty - y
        dist = float(np.hypot(dx, dy))
        if dist < 1e-12:
            idx += 1
            continue
        yaw = float(np.arctan2(dy, dx))
        if dist <= step:
            x, y = tx, ty
            step -= dist
            idx += 1
        else:
            x += dx / dist * step
            y += dy / dist * step
            step = 0.0
    return x, y, yaw, idx


@dataclass
class _ActorState:
    spec: ActorSpec
    x: float
    y: float
    yaw: float
    active: bool
    stopped: bool = False
    waypoint: int = 0

    def solid(self) -> Solid:
        return self.spec.solid(self.x, self.y, self.yaw)


def _move_actor(state: _ActorState, others: Sequence[Solid], dt: float) -> None:
    spec = state.spec
    if not state.active or state.stopped or spec.behaviour == "stationary" or spec.speed == 0:
        return
    step = spec.speed * dt
    x0, y0, yaw0, wp0 = state.x, state.y, state.yaw, state.waypoint

    def advance(frac: float):
        if spec.behaviour == "straight":
            return (x0 + np.cos(yaw0) * step * frac, y0 + np.sin(yaw0) * step * frac, yaw0, wp0)
        return _follow(x0, y0, yaw0, spec.path, wp0, step * frac)

    def blocked(frac: float) -> bool:
        x, y, yaw, _ = advance(frac)
        s = spec.solid(x, y, yaw)
        return any(solids_overlap(s, o) for o in others)

    if not blocked(1.0):
        state.x, state.y, state.yaw, state.waypoint = advance(1.0)
        return
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = (lo + hi) / 2
        if blocked(mid):
            hi = mid
        else:
            lo = mid
    state.x, state.y, state.yaw, state.waypoint = advance(lo)
    state.stopped = True


def run_scenario(script: ScenarioScript, base: Scene) -> list[SensorFrame]:
    """Step ego and actors at ``frame_rate`` and capture one SensorFrame per step."""
    statics = [s for s in base.solids]
    triggered = {t.actor for t in script.triggers}
    states = []
    for a in script.actors:
        st = _ActorState(a, a.x, a.y, np.radians(a.yaw), active=a.name not in triggered)
        body = st.solid()
        for other in statics + [s.solid() for s in states]:
            if solids_overlap(body, other):
                raise SpawnCollisionError(a.name, other.name or f"label {other.label}")
        states.append(st)
    by_name = {s.spec.name: s for s in states}

    ego = script.ego
    ex, ey, eyaw, ewp = ego.x, ego.y, float(np.radians(ego.yaw)), 0
    dt = 1.0 / script.frame_rate
    weather = base.weather_id if script.weather_id is None else script.weather_id
    frames = []
    for k in range(script.duration):
        if k > 0:
            if ego.path and ego.speed > 0:
                ex, ey, eyaw, ewp = _follow(ex, ey, eyaw, ego.path, ewp, ego.speed * dt)
            for st in states:
                others = statics + [o.solid() for o in states if o is not st]
                _move_actor(st, others, dt)
        for trig in script.triggers:
            if np.hypot(ex - trig.x, ey - trig.y) <= trig.radius:
                by_name[trig.actor].active = True
        scene = base.with_solids(st.solid() for st in states)
        ego_pose = Pose.from_rpy(yaw=eyaw, translation=(ex, ey, 0.0))
        frame = capture_frame(scene, ego_pose, ego.rig, k, weather)
        frames.append(replace(frame, actors=tuple(st.solid() for st in states)))
    return frames


# ---------------------------------------------------------------- text format

def _kv(tokens: Sequence[str], lineno: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ScriptError(f"line {lineno}: expected key=value, got '{tok}'")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _path(text: str, lineno: int) -> tuple[tuple[float, float], ...]:
    pts = []
    for chunk in text.split(";"):
        if not chunk:
            continue
        try:
            x, y = (float(v) for v in chunk.split(","))
        except ValueError:
            raise ScriptError(f"line {lineno}: bad waypoint '{chunk}'") from None
        pts.append((x, y))
    return tuple(pts)


def _num(kv: dict, key: str, default: float, lineno: int) -> float:
    try:
        return float(kv.pop(key, default))
    except ValueError:
        raise ScriptError(f"line {lineno}: '{key}' must be a number") from None


def parse_script(text: str) -> ScenarioScript:
    actors, triggers = [], []
    ego_kv: dict = {}
    lidar = LidarSpec()
    camera = CameraIntrinsics.from_fov()
    duration, frame_rate, weather = 1, 10.0, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *rest = line.split()
        try:
            if word == "duration":
                duration = int(rest[0])
            elif word == "frame_rate":
                frame_rate = float(rest[0])
            elif word == "weather":
                weather = int(rest[0])
            elif word == "ego":
                ego_kv = _kv(rest, lineno)
                ego_kv["_line"] = lineno
            elif word == "actor":
                kv = _kv(rest, lineno)
                if "name" not in kv:
                    raise ScriptError(f"line {lineno}: actor needs name=")
                actors.append(ActorSpec(
                    name=kv.pop("name"), kind=kv.pop("kind", "car"),
                    x=_num(kv, "x", 0, lineno), y=_num(kv, "y", 0, lineno),
                    yaw=_num(kv, "yaw", 0, lineno),
                    behaviour=kv.pop("behaviour", "stationary"),
                    speed=_num(kv, "speed", 0, lineno),
                    path=_path(kv.pop("path", ""), lineno)))
                if kv:
                    raise ScriptError(f"line {lineno}: unknown actor keys {sorted(kv)}")
            elif word == "trigger":
                kv = _kv(rest, lineno)
                triggers.append(Trigger(kv.pop("actor", ""), _num(kv, "x", 0, lineno),
                                        _num(kv, "y", 0, lineno), _num(kv, "radius", 0, lineno)))
            elif word == "lidar":
                kv = _kv(rest, lineno)
                fov = tuple(float(v) for v in kv.pop("fov", "-30,10").split(","))
                lidar = LidarSpec(int(kv.pop("channels", 32)), int(kv.pop("points", 1024)),
                                  fov, float(kv.pop("range", 50.0)))
            elif word == "camera":
                kv = _kv(rest, lineno)
                camera = CameraIntrinsics.from_fov(int(kv.pop("width", 800)),
                                                   int(kv.pop("height", 600)),
                                                   float(kv.pop("hfov", 90.0)))
            else:
                raise ScriptError(f"line {lineno}: unknown directive '{word}'")
        except (IndexError, ValueError) as e:
            if isinstance(e, ScriptError):
                raise
            raise ScriptError(f"line {lineno}: {e}") from None
    lineno = ego_kv.pop("_line", 0)
    ego = EgoSpec(x=_num(ego_kv, "x", 0, lineno), y=_num(ego_kv, "y", 0, lineno),
                  yaw=_num(ego_kv, "yaw", 0, lineno), speed=_num(ego_kv, "speed", 0, lineno),
                  path=_path(ego_kv.pop("path", ""), lineno),
                  rig=SensorRig(lidar=lidar, camera=camera))
    return ScenarioScript(tuple(actors), ego, tuple(triggers), duration, frame_rate, weather)
