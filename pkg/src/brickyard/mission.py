"""Pick-and-build mission simulation.

A plain state machine drives a kinematic robot through
detect pile -> estimate bricks -> pick -> store -> drive -> localize -> place
using the perception modules on synthetic sensor data. The robot acts in
its own (odometry) frame; the simulator keeps the true pose and the scene
ground truth, so odometry drift, sensor noise and estimation errors all
reach the final brick placements.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bricks import MultiBrickConfig, estimate_bricks_full
from .errors import (
    BrickyardError,
    CorruptSnapshot,
    MissionFailed,
    NoCandidate,
    OverCapacity,
)
from .geometry import PlanarPose, RigidTransform, pose_error, wrap_angle
from .marker import MarkerAccumulator, MarkerConfig, MarkerDetection
from .model import BRICK_SECTION, Blueprint, Brick, BrickType, StorageRack, blueprint_brick_centers
from .pile import Geofence, detect_pile, footprint_frame
from .planner import PlannerConfig, is_placeable, plan_optimal, support_dependencies
from .register import RegistrationConfig, register_target, render_target
from .cloud import PointCloud
from .scenarios import nominal_pile, pile_sweep
from .synth import Camera, LidarModel, Scene, look_at, simulate_lidar_scan, sweep_trajectory, synth_marker_image

log = logging.getLogger(__name__)

ON_PILE = "on_pile"
STORED = "stored"
PLACED = "placed"
LOST = "lost"
STATUSES = (ON_PILE, STORED, PLACED, LOST)

ORANGE_SLOT = "orange"

# wall frame relative to the marker frame: bricks run parallel to the long
# leg, on the side away from the short leg
WALL_OFFSET = PlanarPose(0.0, -0.35, 0.0)


# ---------------------------------------------------------------- storage


@dataclass(frozen=True)
class StorageSlot:
    compartment: int  # -1 for the orange rack
    bin: int  # orange slot number for oranges, 1-based
    level: int

    @property
    def label(self) -> str:
        return f"{ORANGE_SLOT}{self.bin}" if self.compartment < 0 else f"c{self.compartment}b{self.bin}"

    def to_list(self) -> list[int]:
        return [self.compartment, self.bin, self.level]


@dataclass
class StoragePlan:
    """Pick-list index (or brick id) -> slot."""

    slots: dict

    def bins_used(self) -> set[str]:
        return {s.label for s in self.slots.values()}

    def to_json(self) -> dict:
        return {str(k): v.to_list() for k, v in self.slots.items()}


def _types_of(pick_list):
    out = []
    for i, item in enumerate(pick_list):
        if isinstance(item, Brick):
            out.append((item.id, item.type))
        else:
            out.append((i, BrickType.parse(item)))
    return out


def assign_storage(pick_list, rack: StorageRack | None = None, occupancy: dict | None = None) -> StoragePlan:
    """Deterministic first fit into bins dedicated to one brick type.

    ``pick_list`` holds brick types or Bricks (keyed by id). Oranges go to
    numbered rack slots; a load may not mix oranges with small bricks.
    ``occupancy`` (bin label -> stacked ids) lets a plan continue a
    partially filled rack.
    """
    rack = rack or StorageRack()
    items = _types_of(pick_list)
    kinds = {t is BrickType.ORANGE for _, t in items}
    held = {k: list(v) for k, v in (occupancy or {}).items() if v}
    if any(k.startswith(ORANGE_SLOT) for k in held):
        kinds.add(True)
    if any(not k.startswith(ORANGE_SLOT) for k in held):
        kinds.add(False)
    if len(kinds) > 1:
        raise OverCapacity("oranges cannot share the rack with small bricks")
    fill = {k: len(v) for k, v in held.items()}
    slots = {}
    for key, t in items:
        if t is BrickType.ORANGE:
            for n in range(1, rack.rack_orange_capacity + 1):
                label = f"{ORANGE_SLOT}{n}"
                if fill.get(label, 0) == 0:
                    fill[label] = 1
                    slots[key] = StorageSlot(-1, n, 0)
                    break
            else:
                raise OverCapacity(f"more than {rack.rack_orange_capacity} orange bricks")
            continue
        placed = False
        for c, ct in enumerate(rack.compartment_types):
            if ct is not t:
                continue
            for b in range(rack.bins_per_compartment):
                label = f"c{c}b{b}"
                level = fill.get(label, 0)
                if level < rack.per_bin_stack_limit[t]:
                    fill[label] = level + 1
                    slots[key] = StorageSlot(c, b, level)
                    placed = True
                    break
            if placed:
                break
        if not placed:
            raise OverCapacity(f"no free bin for {t.value} brick {key}")
    return StoragePlan(slots)


def rack_within_limits(occupancy: dict, types: dict, rack: StorageRack | None = None) -> bool:
    """Every bin within its stack limit and holding a single type; oranges not mixed in."""
    rack = rack or StorageRack()
    oranges = [k for k, v in occupancy.items() if k.startswith(ORANGE_SLOT) and v]
    small = [k for k, v in occupancy.items() if not k.startswith(ORANGE_SLOT) and v]
    if oranges and small:
        return False
    if len(oranges) > rack.rack_orange_capacity or any(len(occupancy[k]) > 1 for k in oranges):
        return False
    for k in small:
        ids = occupancy[k]
        ts = {types[i] for i in ids}
        if len(ts) != 1:
            return False
        c = int(k[1:k.index("b")])
        t = ts.pop()
        if rack.compartment_types[c] is not t or len(ids) > rack.per_bin_stack_limit[t]:
            return False
    return True


# ---------------------------------------------------------------- state


@dataclass
class WorldState:
    scene: Scene
    status: dict[int, str]
    bins: dict[int, str]
    robot: PlanarPose
    believed: PlanarPose
    rack: dict[str, list[int]]
    placed_slots: dict[int, list[int]]
    fsm: str = "init"
    clock: float = 0.0

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in STATUSES}
        for s in self.status.values():
            out[s] += 1
        return out

    def brick_types(self) -> dict[int, BrickType]:
        return {b.id: b.type for b in self.scene.bricks}

    def to_json(self) -> dict:
        return {
            "scene": self.scene.to_json(),
            "status": {str(k): v for k, v in sorted(self.status.items())},
            "bins": {str(k): v for k, v in sorted(self.bins.items())},
            "robot": self.robot.to_list(),
            "believed": self.believed.to_list(),
            "rack": {k: list(v) for k, v in sorted(self.rack.items())},
            "placed_slots": {str(k): list(v) for k, v in sorted(self.placed_slots.items())},
            "fsm": self.fsm,
            "clock": self.clock,
        }

    @classmethod
    def from_json(cls, d) -> WorldState:
        return cls(
            Scene.from_json(d["scene"]),
            {int(k): v for k, v in d["status"].items()},
            {int(k): v for k, v in d["bins"].items()},
            PlanarPose.from_list(d["robot"]),
            PlanarPose.from_list(d["believed"]),
            {k: list(v) for k, v in d["rack"].items()},
            {int(k): list(v) for k, v in d["placed_slots"].items()},
            d["fsm"],
            float(d["clock"]),
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, WorldState) and self.to_json() == other.to_json()


_MAGIC = b"BYWS1\n"


def snapshot(state: WorldState) -> bytes:
    body = json.dumps(state.to_json(), sort_keys=True, separators=(",", ":")).encode()
    digest = hashlib.sha256(body).hexdigest().encode()
    return _MAGIC + digest + b"\n" + body


def restore(data: bytes) -> WorldState:
    if not isinstance(data, (bytes, bytearray)) or not data.startswith(_MAGIC):
        raise CorruptSnapshot("missing snapshot header")
    rest = bytes(data[len(_MAGIC):])
    digest, sep, body = rest.partition(b"\n")
    if not sep or hashlib.sha256(body).hexdigest().encode() != digest:
        raise CorruptSnapshot("checksum mismatch (truncated or modified)")
    try:
        return WorldState.from_json(json.loads(body))
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptSnapshot(str(e)) from e


@dataclass
class LogEntry:
    t: float
    state: str
    event: str
    payload: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"t": self.t, "state": self.state, "event": self.event, "payload": self.payload}


class MissionLog:
    """Append-only event list with monotone timestamps."""

    def __init__(self):
        self.entries: list[LogEntry] = []

    def append(self, t: float, state: str, event: str, **payload) -> None:
        if self.entries and t < self.entries[-1].t:
            raise ValueError("log timestamps must be monotone")
        self.entries.append(LogEntry(float(t), state, event, _jsonable(payload)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def events(self, name: str) -> list[LogEntry]:
        return [e for e in self.entries if e.event == name]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> MissionLog:
        out = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                out.entries.append(LogEntry(d["t"], d["state"], d["event"], d.get("payload", {})))
        return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, BrickType):
        return v.value
    return v


# ---------------------------------------------------------------- config


@dataclass
class MissionConfig:
    orange_first: bool = True
    pick_confidence: float = 0.5
    grip_tolerance: float = 0.04
    grip_yaw_tolerance: float = math.radians(10.0)
    place_tolerance: float = 0.05
    odometry_drift: float = 0.0  # position sigma per meter driven
    heading_drift: float = 0.0  # yaw sigma (rad) per meter driven
    lidar_sigma: float = 0.0
    place_sigma: float = 0.0
    pile_prior_error: float = 0.3
    marker_prior_error: float = 0.5
    station_standoff: float = 1.2
    marker_standoff: float = 3.0
    wall_scan_height: float = 1.8
    max_wall_correction: float = 0.3
    camera_height: float = 1.5
    camera_f: float = 525.0
    camera_size: tuple[int, int] = (640, 480)
    marker_frames: int = 3
    lidar_height: float = 3.0
    drive_speed: float = 0.5
    pick_time: float = 20.0
    store_time: float = 5.0
    place_time: float = 20.0
    scan_time: float = 5.0
    frame_period: float = 1.0
    max_cycles: int = 40
    snapshots: bool = True
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    bricks: MultiBrickConfig = field(default_factory=MultiBrickConfig)
    marker: MarkerConfig = field(default_factory=MarkerConfig)

    @classmethod
    def noisy(cls, **kw) -> MissionConfig:
        """Odometry drift 1 cm per meter, LiDAR sigma 1 cm."""
        base = {"odometry_drift": 0.01, "heading_drift": 0.005, "lidar_sigma": 0.01}
        base.update(kw)
        return cls(**base)

    def to_json(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v = v.to_json() if hasattr(v, "to_json") else {
                    g.name: getattr(v, g.name) for g in dataclasses.fields(v)
                    if isinstance(getattr(v, g.name), (int, float, str, bool, type(None)))}
            out[f.name] = _jsonable(v)
        return out


@dataclass
class MissionResult:
    log: MissionLog
    state: WorldState
    snapshots: list[tuple[str, bytes]]
    placement_errors: dict[int, float]
    retries: int

    def __iter__(self):
        # unpacks as (log, state)
        return iter((self.log, self.state))


# ---------------------------------------------------------------- simulation


def _tf(p: PlanarPose, z: float = 0.0) -> RigidTransform:
    return RigidTransform.from_planar(p, z)


def _yaw_error(a: float, b: float) -> float:
    """Yaw difference of two bricks, which look the same after a half turn."""
    d = abs(wrap_angle(a - b))
    return min(d, math.pi - d)


class _Mission:
    def __init__(self, scene: Scene, blueprint: Blueprint, cfg: MissionConfig, seed: int, pile_model=None):
        if scene.marker is None:
            raise ValueError("mission scene needs a marker")
        blueprint.validate()
        self.cfg = cfg
        self.seed = seed
        self.bp = blueprint
        self.rack = StorageRack()
        self.rng = np.random.default_rng([seed, 1])
        self.prior_rng = np.random.default_rng([seed, 2])
        self.scan_count = 0
        self.retries = 0
        self.log = MissionLog()
        self.snaps: list[tuple[str, bytes]] = []
        self.placement_errors: dict[int, float] = {}

        pile_bricks = [b for b in scene.bricks if b.frame == "pile"]
        self.pile_model = list(pile_model) if pile_model is not None else nominal_pile(scene)
        if sorted((b.id, b.type.value) for b in self.pile_model) != sorted((b.id, b.type.value) for b in pile_bricks):
            raise ValueError("pile model must list the same brick ids and types as the scene pile")
        need = blueprint.counts()
        have: dict[BrickType, int] = {}
        for b in pile_bricks:
            have[b.type] = have.get(b.type, 0) + 1
        for t, n in need.items():
            if have.get(t, 0) < n:
                raise ValueError(f"pile holds {have.get(t, 0)} {t.value} bricks, blueprint needs {n}")

        self.plan = plan_optimal(blueprint, cfg.planner)
        self.deps = support_dependencies(blueprint)
        self.slots = {(k, i): (x, t) for k, i, x, t in blueprint_brick_centers(blueprint)}
        self.slot_ids = {key: n for n, key in enumerate(sorted(self.slots))}

        # prior knowledge of the arena: roughly where the pile and marker are
        e = cfg.pile_prior_error
        pf = scene.pile_frame
        self.pile_prior = RigidTransform.from_xyz_yaw(
            pf.translation[0] + self.prior_rng.uniform(-e, e), pf.translation[1] + self.prior_rng.uniform(-e, e),
            0.0, pf.yaw + self.prior_rng.uniform(-0.1, 0.1))
        m = scene.marker.pose
        e = cfg.marker_prior_error
        self.marker_prior = PlanarPose(m.x + self.prior_rng.uniform(-e, e), m.y + self.prior_rng.uniform(-e, e),
                                       m.yaw + self.prior_rng.uniform(-0.15, 0.15))
        self.marker_est: PlanarPose | None = None
        self.wall_b: RigidTransform | None = None  # wall frame as the robot believes it
        self.anchor: RigidTransform | None = None  # true frame the wall was started in

        start = self._pile_view_pose(self.pile_prior)
        self.state = WorldState(
            scene=scene,
            status={b.id: ON_PILE for b in pile_bricks},
            bins={},
            robot=start,
            believed=start,
            rack={},
            placed_slots={},
        )
        self.pile_frame_est: RigidTransform | None = None
        self.estimates: dict[int, object] = {}

    # ---- bookkeeping

    def enter(self, name: str, **payload) -> None:
        self.state.fsm = name
        self.log.append(self.state.clock, name, "enter", **payload)
        self._check_invariants()
        if self.cfg.snapshots:
            self.snaps.append((name, snapshot(self.state)))

    def event(self, name: str, **payload) -> None:
        self.log.append(self.state.clock, self.state.fsm, name, **payload)

    def tick(self, dt: float) -> None:
        self.state.clock += float(dt)

    def _check_invariants(self) -> None:
        counts = self.state.counts()
        assert sum(counts.values()) == len(self.state.status)
        assert rack_within_limits(self.state.rack, self.state.brick_types(), self.rack)

    # ---- motion

    def odom(self) -> RigidTransform:
        """Maps the robot's believed world frame to the true world frame."""
        return _tf(self.state.robot) @ _tf(self.state.believed).inverse()

    def to_believed(self) -> RigidTransform:
        return self.odom().inverse()

    def drive(self, target: PlanarPose, why: str) -> None:
        cur = self.state.believed
        rel = cur.inverse().compose(target)
        dist = math.hypot(rel.x, rel.y)
        c = self.cfg
        noisy = PlanarPose(
            rel.x + self.rng.normal(0.0, c.odometry_drift * dist) if c.odometry_drift > 0 else rel.x,
            rel.y + self.rng.normal(0.0, c.odometry_drift * dist) if c.odometry_drift > 0 else rel.y,
            rel.yaw + self.rng.normal(0.0, c.heading_drift * dist) if c.heading_drift > 0 else rel.yaw,
        )
        self.state.robot = self.state.robot.compose(noisy)
        self.state.believed = target
        self.tick(dist / c.drive_speed + abs(rel.yaw) * 2.0)
        self.event("drive", to=target.to_list(), distance=dist, purpose=why)

    # ---- pile side

    def _pile_view_pose(self, pile_frame: RigidTransform) -> PlanarPose:
        eye = pile_frame.apply([-1.5, -1.5, 0.0])
        c = pile_frame.apply([1.5, 0.8, 0.0])
        return PlanarPose(float(eye[0]), float(eye[1]), math.atan2(c[1] - eye[1], c[0] - eye[0]))

    def _physical_scene(self) -> Scene:
        keep = [b for b in self.state.scene.bricks if self.state.status.get(b.id) in (ON_PILE, LOST, PLACED)]
        return self.state.scene.replace(bricks=tuple(keep))

    def scan_pile(self) -> tuple[PointCloud, LidarModel]:
        """LiDAR sweep over the pile; cloud and sensor model in the believed frame."""
        ref = self.pile_frame_est or self.pile_prior
        sensor_b = pile_sweep(ref, self.pile_model, sigma=self.cfg.lidar_sigma, height=self.cfg.lidar_height)
        odom = self.odom()
        sensor_t = dataclasses.replace(sensor_b, trajectory=tuple(odom @ p for p in sensor_b.trajectory))
        self.scan_count += 1
        pts = simulate_lidar_scan(self._physical_scene(), sensor_t, seed=int(self.rng.integers(2**31)))
        self.tick(self.cfg.scan_time)
        return pts.transformed(odom.inverse()), sensor_b

    def locate_pile(self, scan: PointCloud, sensor: LidarModel) -> RigidTransform:
        remaining = [b for b in self.pile_model if self.state.status[b.id] == ON_PILE]
        model_scene = Scene(tuple(remaining), pile_frame=RigidTransform())
        fence_c = self.pile_prior.apply([1.5, 0.8, 0.0])
        fence = Geofence(fence_c[0] - 4.0, fence_c[0] + 4.0, fence_c[1] - 4.0, fence_c[1] + 4.0)
        hyp = detect_pile(scan, fence, seed=self.seed)
        self.event("pile_detected", origin=hyp.frame.translation, yaw=hyp.frame.yaw, score=hyp.score)
        # the model's own PCA frame maps the detection onto the pile frame
        local = render_target(model_scene, "pile", RigidTransform(), _sensor_local(sensor, self.pile_prior),
                              self.cfg.registration)
        mf = footprint_frame(local.points)
        mf = RigidTransform(mf.rotation, [mf.translation[0], mf.translation[1], 0.0])
        inits = []
        for flip in (0.0, math.pi):
            hf = RigidTransform(hyp.frame.rotation @ RigidTransform.from_xyz_yaw(0, 0, 0, flip).rotation,
                                hyp.frame.translation)
            inits.append((flip, hf @ mf.inverse()))
        # clutter next to the pile skews its footprint, so the prior is a seed too
        inits.append((None, self.pile_prior))
        best = None
        for flip, init in inits:
            try:
                est = register_target(model_scene, scan, init, "pile", self.cfg.registration,
                                      seed=self.seed, sensor=sensor)
            except BrickyardError as e:
                self.event("pile_registration_failed", flip=flip, error=str(e))
                continue
            if best is None or est.cost < best.cost:
                best = est
        if best is None:
            raise MissionFailed("PileNotFound", "pile registration failed for both orientations")
        self.event("pile_registered", pose=best.pose.to_json(), cost=best.cost, converged=best.converged)
        return best.pose

    def estimate(self) -> dict:
        scan, sensor = self.scan_pile()
        if self.pile_frame_est is None:
            self.enter("detect_pile")
            self.pile_frame_est = self.locate_pile(scan, sensor)
        self.enter("estimate_bricks")
        remaining = [b for b in self.pile_model if self.state.status[b.id] in (ON_PILE, LOST)]
        model_scene = Scene(tuple(remaining), pile_frame=self.pile_frame_est)
        res = estimate_bricks_full(model_scene, self.pile_frame_est, scan, cfg=self.cfg.bricks, sensor=sensor)
        self.estimates = {e.id: e for e in res.estimates}
        self.event("bricks_estimated", confidences={e.id: round(e.confidence, 4) for e in res.estimates})
        return self.estimates

    def try_pick(self, bid: int) -> bool:
        est = self.estimates.get(bid)
        truth = self.state.scene.brick(bid)
        conf = 0.0 if est is None else est.confidence
        ok = False
        dt = da = float("inf")
        if est is not None:
            believed = self.pile_frame_est @ _tf(est.pose)
            true = self.state.scene.frame(truth.frame) @ _tf(truth.pose)
            # the gripper acts in the robot frame
            rb = _tf(self.state.believed).inverse() @ believed
            rt = _tf(self.state.robot).inverse() @ true
            dt = float(np.linalg.norm(rb.translation[:2] - rt.translation[:2]))
            da = _yaw_error(rb.yaw, rt.yaw)
            ok = conf >= self.cfg.pick_confidence and dt <= self.cfg.grip_tolerance \
                and da <= self.cfg.grip_yaw_tolerance
        self.tick(self.cfg.pick_time)
        self.event("pick", brick=bid, success=ok, confidence=conf, error=[dt if math.isfinite(dt) else -1.0,
                                                                          da if math.isfinite(da) else -1.0])
        return ok

    def store(self, bid: int) -> None:
        self.enter("store", brick=bid)
        t = self.state.scene.brick(bid).type
        slot = assign_storage([self.state.scene.brick(bid)], self.rack, self.state.rack).slots[bid]
        self.state.rack.setdefault(slot.label, []).append(bid)
        self.state.status[bid] = STORED
        self.state.bins[bid] = slot.label
        self.tick(self.cfg.store_time)
        self.event("stored", brick=bid, type=t.value, bin=slot.label, level=slot.level)
        self._check_invariants()

    def load(self, needed: dict[BrickType, int]) -> None:
        """Pick bricks until ``needed`` is met or no candidate is left.

        The pile is rescanned before every pick. A failed pick is retried
        once after a fresh scan; a second failure marks the brick lost.
        """
        need = dict(needed)
        target = self._pile_view_pose(self.pile_frame_est or self.pile_prior)
        if self.state.believed != target:
            self.enter("drive_to_pile")
            self.drive(target, "pile")
        pending = None
        cycles = 0
        while any(v > 0 for v in need.values()):
            cycles += 1
            if cycles > self.cfg.max_cycles:
                raise MissionFailed("Timeout", "too many perception cycles at the pile")
            est = self.estimate()
            if pending is None:
                cands = [e for e in est.values() if self.state.status[e.id] == ON_PILE
                         and need.get(self.state.scene.brick(e.id).type, 0) > 0]
                if not cands:
                    break
                bid = min(cands, key=lambda e: (-e.confidence, e.id)).id
            else:
                bid = pending
            self.enter("pick", brick=bid, retry=pending is not None)
            t = self.state.scene.brick(bid).type
            if self.try_pick(bid):
                self.store(bid)
                need[t] -= 1
                pending = None
            elif pending is None:
                pending = bid
                self.retries += 1
                self.event("retry_scheduled", brick=bid)
            else:
                self.state.status[bid] = LOST
                self.event("lost", brick=bid)
                pending = None
        if any(v > 0 for v in need.values()):
            self.event("load_incomplete", missing={t.value: v for t, v in need.items() if v > 0})

    # ---- wall side

    def wall_frame(self, marker: PlanarPose) -> RigidTransform:
        return _tf(marker.compose(WALL_OFFSET))

    def station_pose(self, wall: RigidTransform, p: float) -> PlanarPose:
        pos = wall.apply([p, -self.cfg.station_standoff, 0.0])
        return PlanarPose(float(pos[0]), float(pos[1]), wall.yaw)

    def marker_view_pose(self, guess: PlanarPose) -> PlanarPose:
        m = _tf(guess)
        eye = m.apply([0.75, -self.cfg.marker_standoff, 0.0])
        c = m.apply([0.75, 0.5, 0.0])
        return PlanarPose(float(eye[0]), float(eye[1]), math.atan2(c[1] - eye[1], c[0] - eye[0]))

    def localize_marker(self) -> PlanarPose:
        """Marker pose in the believed frame from a short camera sweep."""
        self.enter("localize_marker")
        c = self.cfg
        guess = self.marker_est or self.marker_prior
        look = _tf(guess).apply([0.75, 0.5, 0.0])
        eye_b = _tf(self.state.believed).apply([0.0, 0.0, c.camera_height])
        odom = self.odom()
        acc = MarkerAccumulator(cfg=c.marker)
        w, h = c.camera_size
        frames = 0
        for k in range(c.marker_frames):
            off = (k - (c.marker_frames - 1) / 2) * 0.15
            tgt = look + np.array([-math.sin(guess.yaw) * off, math.cos(guess.yaw) * off, 0.0])
            cam_b = Camera.simple(c.camera_f, w, h, look_at(eye_b, tgt))
            img = synth_marker_image(self.state.scene, cam_b.with_pose(odom @ cam_b.pose))
            frames += acc.process(self.state.clock, img, cam_b)
            self.tick(c.frame_period)
        try:
            det: MarkerDetection = acc.fit(self.state.clock)
        except NoCandidate as e:
            raise MissionFailed("MarkerNotFound", str(e)) from e
        self.event("marker", intersection=det.intersection, yaw=det.yaw, valid=det.valid, frames=frames,
                   sides=[det.long_side, det.short_side])
        if not det.valid:
            raise MissionFailed("MarkerNotFound", "marker side lengths out of tolerance")
        return PlanarPose(float(det.intersection[0]), float(det.intersection[1]), det.yaw)

    def relocalize_wall(self, p: float) -> None:
        """Register the bricks built so far against a LiDAR sweep from the station."""
        self.enter("register_wall", station=p)
        built = [b for b in self.state.scene.bricks if self.state.status.get(b.id) == PLACED]
        model = Scene(tuple(Brick(b.id, b.type, PlanarPose(self.slots[tuple(self.state.placed_slots[b.id])][0], 0.0, 0.0),
                                  "wall", self.state.placed_slots[b.id][0] * BRICK_SECTION) for b in built),
                      wall_frame=self.wall_b)
        eye = self.wall_b.apply([p, -self.cfg.station_standoff, self.cfg.wall_scan_height])
        sensor_b = LidarModel(sweep_trajectory(eye, self.wall_b.apply([p, 0.0, 0.2])), sigma=self.cfg.lidar_sigma)
        odom = self.odom()
        sensor_t = dataclasses.replace(sensor_b, trajectory=tuple(odom @ q for q in sensor_b.trajectory))
        self.scan_count += 1
        scan = simulate_lidar_scan(self._physical_scene(), sensor_t, seed=int(self.rng.integers(2**31)))
        self.tick(self.cfg.scan_time)
        try:
            est = register_target(model, scan.transformed(odom.inverse()), self.wall_b, "wall",
                                  self.cfg.registration, seed=self.seed, sensor=sensor_b)
        except BrickyardError as e:
            self.event("wall_registration_failed", error=str(e))
            return
        dt, da = pose_error(est.pose, self.wall_b)
        if not est.converged or dt > self.cfg.max_wall_correction:
            self.event("wall_registration_rejected", shift=dt, rotation=da, converged=est.converged)
            return
        self.wall_b = est.pose
        self.event("wall_registered", shift=dt, rotation=da, cost=est.cost)

    def place_load(self) -> None:
        built = {tuple(v) for v in self.state.placed_slots.values()}
        for p, group in zip(self.plan.stations, self.plan.bricks):
            todo = [key for key in group if key not in built and self._stock(self.slots[key][1])]
            if not todo:
                continue
            if self.wall_b is None:
                self.enter("drive_to_marker")
                self.drive(self.marker_view_pose(self.marker_prior), "marker")
                self.marker_est = self.localize_marker()
                self.wall_b = self.wall_frame(self.marker_est)
                self.enter("drive_to_station", station=p)
                self.drive(self.station_pose(self.wall_b, p), "station")
            else:
                self.enter("drive_to_station", station=p)
                self.drive(self.station_pose(self.wall_b, p), "station")
                self.relocalize_wall(p)
            for key in group:
                if key in built:
                    continue
                t = self.slots[key][1]
                if not self._stock(t):
                    continue
                if not is_placeable(self.deps, built, key):
                    self.event("skip_unsupported", slot=list(key))
                    continue
                self.place(key)
                built.add(key)

    def _stock(self, t: BrickType):
        for label in sorted(self.state.rack):
            ids = self.state.rack[label]
            if ids and self.state.scene.brick(ids[-1]).type is t:
                return label
        return None

    def place(self, key) -> None:
        x, t = self.slots[key]
        label = self._stock(t)
        bid = self.state.rack[label].pop()
        if not self.state.rack[label]:
            del self.state.rack[label]
        self.enter("place", brick=bid, slot=list(key))
        if self.anchor is None:
            # the first brick fixes where the wall really stands
            self.anchor = self.odom() @ self.wall_b
            self.event("wall_anchored", pose=self.anchor.to_json())
        intended = self.wall_b @ RigidTransform.from_xyz_yaw(x, 0.0, 0.0, 0.0)
        p = (self.odom() @ intended).planar()
        if self.cfg.place_sigma > 0:
            p = PlanarPose(p.x + self.rng.normal(0, self.cfg.place_sigma),
                           p.y + self.rng.normal(0, self.cfg.place_sigma), p.yaw)
        b = self.state.scene.brick(bid)
        placed = b.moved(pose=p, frame="world", z=key[0] * BRICK_SECTION)
        self.state.scene = self.state.scene.replace(
            bricks=tuple(placed if q.id == bid else q for q in self.state.scene.bricks))
        self.state.status[bid] = PLACED
        self.state.bins.pop(bid, None)
        self.state.placed_slots[bid] = list(key)
        self.tick(self.cfg.place_time)
        self.verify(bid, key)

    def verify(self, bid: int, key) -> None:
        """Placement error against the blueprint slot in the anchored wall frame."""
        self.enter("verify", brick=bid)
        x, _ = self.slots[key]
        goal = self.anchor @ RigidTransform.from_xyz_yaw(x, 0.0, 0.0, 0.0)
        b = self.state.scene.brick(bid)
        err = math.hypot(b.pose.x - goal.translation[0], b.pose.y - goal.translation[1])
        yerr = _yaw_error(b.pose.yaw, goal.yaw)
        marker_goal = self.wall_frame(self.state.scene.marker.pose).apply([x, 0.0, 0.0])
        self.placement_errors[bid] = err
        self.event("placement", brick=bid, slot=list(key), error=err, yaw_error=yerr,
                   marker_offset=math.hypot(b.pose.x - marker_goal[0], b.pose.y - marker_goal[1]),
                   within=err <= self.cfg.place_tolerance)

    # ---- top level

    def loads(self) -> list[dict[BrickType, int]]:
        need = self.bp.counts()
        if self.cfg.orange_first and need.get(BrickType.ORANGE, 0):
            rest = {t: n for t, n in need.items() if t is not BrickType.ORANGE}
            out = [{BrickType.ORANGE: need[BrickType.ORANGE]}]
            return out + ([rest] if rest else [])
        if need.get(BrickType.ORANGE, 0):
            rest = {t: n for t, n in need.items() if t is not BrickType.ORANGE}
            return ([rest] if rest else []) + [{BrickType.ORANGE: need[BrickType.ORANGE]}]
        return [need]

    def run(self) -> MissionResult:
        self.enter("init", seed=self.seed, config=self.cfg.to_json(), plan=self.plan.to_json())
        for need in self.loads():
            assign_storage([t for t, n in need.items() for _ in range(n)], self.rack)
            self.load(need)
            if self.state.rack:
                self.place_load()
            leftover = sorted(i for ids in self.state.rack.values() for i in ids)
            if leftover:
                self.event("unplaced_in_rack", bricks=leftover)
        missing = len(self.slots) - len(self.state.placed_slots)
        bad = {b: e for b, e in self.placement_errors.items() if e > self.cfg.place_tolerance}
        if missing:
            lost = sorted(b for b, s in self.state.status.items() if s == LOST)
            self.enter("failed", reason="IncompleteWall", missing=missing, lost=lost)
            raise MissionFailed("IncompleteWall", f"{missing} blueprint bricks not placed; lost {lost}")
        if bad:
            self.enter("failed", reason="PlacementError", bricks=sorted(bad))
            raise MissionFailed("PlacementError", f"bricks {sorted(bad)} off by more than "
                                                  f"{self.cfg.place_tolerance} m")
        self.enter("done", retries=self.retries, placed=len(self.state.placed_slots))
        return MissionResult(self.log, self.state, self.snaps, self.placement_errors, self.retries)


def _sensor_local(sensor: LidarModel, frame: RigidTransform) -> LidarModel:
    inv = frame.inverse()
    return dataclasses.replace(sensor, trajectory=tuple(inv @ p for p in sensor.trajectory))


def run_mission(scene: Scene, blueprint: Blueprint, cfg: MissionConfig | None = None, seed: int = 0,
                pile_model=None) -> MissionResult:
    """Simulate the whole mission. On failure raises MissionFailed carrying
    ``result`` (log, final state) so callers can still inspect and save them."""
    m = _Mission(scene, blueprint, cfg or MissionConfig(), seed, pile_model)
    try:
        return m.run()
    except MissionFailed as e:
        if m.state.fsm != "failed":
            m.enter("failed", reason=e.reason, detail=e.detail)
        e.result = MissionResult(m.log, m.state, m.snaps, m.placement_errors, m.retries)
        raise


def replay_mission(log: MissionLog, scene: Scene, blueprint: Blueprint, cfg: MissionConfig | None = None) -> MissionResult:
    """Re-run a logged mission from its recorded seed."""
    start = log.entries[0]
    if start.event != "enter" or "seed" not in start.payload:
        raise ValueError("log does not start with a seeded init entry")
    try:
        return run_mission(copy.deepcopy(scene), blueprint, cfg, int(start.payload["seed"]))
    except MissionFailed as e:
        return e.result
