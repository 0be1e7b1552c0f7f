"""Individual brick refinement after the rough pile/wall alignment.

Every brick gets its own yaw and translation delta, applied in the world
frame about the brick's initial center. Data terms are per-brick
point-to-plane residuals weighted by 1/M(j); bricks that touch each other
(or the ground) are tied to their initial relative poses.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cloud import Plane, PointCloud, estimate_normals, voxel_downsample
from .errors import EmptyAfterCrop
from .geometry import PlanarPose, RigidTransform, wrap_angle
from .model import Brick
from .nls import ResidualProblem, SolveReport, SolverConfig, solve
from .residuals import brick_point_to_plane, ground_contact, pairwise_terms, rz
from .synth import LidarModel, Scene, render_lidar_model_cloud, render_model_cloud

log = logging.getLogger(__name__)

GROUND = -1


@dataclass
class BrickDelta:
    id: int
    yaw: float = 0.0
    t: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frozen: bool = False

    def __post_init__(self):
        if abs(self.yaw) > math.pi:
            raise ValueError("|yaw| must be <= pi")


@dataclass
class MultiBrickConfig:
    lambda_dot: float = 0.8
    lambda_dist: float = 0.05
    lambda_r: float = 1.0
    lambda_t: float = 10.0
    contact_tol: float = 0.01
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_iterations=20))
    coarse_distance: float = 0.15
    rounds: int = 8
    free_z: bool = False
    voxel: float = 0.02
    normal_k: int = 16
    crop_margin: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lambda_dot <= 1.0:
            raise ValueError("lambda_dot must lie in [0, 1]")
        if self.lambda_dist <= 0:
            raise ValueError("lambda_dist must be positive")

    def to_json(self) -> dict:
        return {
            "lambda_dot": self.lambda_dot, "lambda_dist": self.lambda_dist,
            "lambda_r": self.lambda_r, "lambda_t": self.lambda_t, "contact_tol": self.contact_tol,
            "coarse_distance": self.coarse_distance, "rounds": self.rounds, "free_z": self.free_z,
            "voxel": self.voxel, "max_iterations": self.solver.max_iterations,
        }


@dataclass
class BrickEstimate:
    id: int
    pose: PlanarPose
    confidence: float
    pairs: int
    expected: int
    z: float = 0.0

    def to_json(self) -> dict:
        return {"id": self.id, "pose": self.pose.to_list(), "z": self.z,
                "confidence": self.confidence, "pairs": self.pairs, "expected": self.expected}

    @classmethod
    def from_json(cls, d) -> BrickEstimate:
        return cls(d["id"], PlanarPose.from_list(d["pose"]), d["confidence"], d["pairs"], d["expected"],
                   d.get("z", 0.0))


@dataclass
class EstimateResult:
    estimates: list[BrickEstimate]
    reports: list[SolveReport]
    edges: set
    initial_cost: float
    final_cost: float


# ---------------------------------------------------------------- contacts


def _box(tf: RigidTransform, b: Brick):
    return tf.translation, tf.rotation, np.array(b.size) / 2


def boxes_within(a, b, tol: float) -> bool:
    """Separating-axis test on the two boxes inflated by tol/2 each."""
    ca, ra, ha = a
    cb, rb, hb = b
    ha = ha + tol / 2
    hb = hb + tol / 2
    d = cb - ca
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    for i in range(3):
        for j in range(3):
            c = np.cross(ra[:, i], rb[:, j])
            n = np.linalg.norm(c)
            if n > 1e-9:
                axes.append(c / n)
    for ax in axes:
        pa = np.sum(ha * np.abs(ra.T @ ax))
        pb = np.sum(hb * np.abs(rb.T @ ax))
        if abs(d @ ax) > pa + pb:
            return False
    return True


def contact_graph(bricks, ground: Plane, tol: float = 0.01, frame=None) -> set[tuple[int, int]]:
    """Contact edges among bricks plus edges (GROUND, id) for grounded bricks.

    ``frame`` maps a brick's frame name (or the single given transform) to
    world; by default brick poses are taken as world poses.
    """
    bricks = list(bricks)
    tfs = []
    for b in bricks:
        if abs(wrap_angle(2 * b.pose.yaw) - 0.0) > 0.2 and abs(abs(wrap_angle(2 * b.pose.yaw)) - math.pi) > 0.2:
            log.debug("brick %d is not axis-aligned within 0.1 rad", b.id)
        base = _frame_tf(frame, b.frame)
        tfs.append(base @ RigidTransform(rz(b.pose.yaw), [b.pose.x, b.pose.y, b.center_z]))
    edges = set()
    for (i, bi), (j, bj) in itertools.combinations(enumerate(bricks), 2):
        if boxes_within(_box(tfs[i], bi), _box(tfs[j], bj), tol):
            edges.add((min(bi.id, bj.id), max(bi.id, bj.id)))
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    for b, tf in zip(bricks, tfs):
        corners = tf.apply(signs * (np.array(b.size) / 2))
        if ground.distance(corners).min() <= tol:
            edges.add((GROUND, b.id))
    return edges


def _frame_tf(frame, name: str) -> RigidTransform:
    if frame is None:
        return RigidTransform()
    if isinstance(frame, RigidTransform):
        return frame
    if isinstance(frame, Scene):
        return frame.frame(name)
    return frame[name]


# ---------------------------------------------------------------- estimation


def prepare_scan(scan: PointCloud, center, radius: float, cfg: MultiBrickConfig, viewpoint) -> PointCloud:
    """Crop a sphere around the pile, downsample and attach normals."""
    keep = np.linalg.norm(scan.points - np.asarray(center), axis=1) <= radius
    if keep.sum() <= cfg.normal_k:
        raise EmptyAfterCrop("too few scan points near the target")
    pc = voxel_downsample(PointCloud(scan.points[keep], frame=scan.frame), cfg.voxel)
    return estimate_normals(pc, cfg.normal_k, viewpoint)


def _render(scene: Scene, sensor, voxel: float) -> PointCloud:
    if isinstance(sensor, LidarModel):
        return render_lidar_model_cloud(scene, sensor, voxel, include_ground=True)
    poses = [sensor] if isinstance(sensor, RigidTransform) else list(sensor)
    clouds = [render_model_cloud(scene, s, include_ground=True, voxel=voxel) for s in poses]
    return clouds[0] if len(clouds) == 1 else voxel_downsample(PointCloud.concat(clouds), voxel)


def _viewpoint(sensor) -> np.ndarray:
    if isinstance(sensor, LidarModel):
        return sensor.viewpoint
    if isinstance(sensor, RigidTransform):
        return sensor.translation
    return np.mean([s.translation for s in sensor], axis=0)


def estimate_bricks(scene_model: Scene, rough_pose, scan: PointCloud, include=None,
                    cfg: MultiBrickConfig | None = None, sensor=None, which: str = "pile",
                    scan_prepared: bool = False) -> list[BrickEstimate]:
    return estimate_bricks_full(scene_model, rough_pose, scan, include, cfg, sensor, which, scan_prepared).estimates


def estimate_bricks_full(scene_model: Scene, rough_pose, scan: PointCloud, include=None,
                         cfg: MultiBrickConfig | None = None, sensor=None, which: str = "pile",
                         scan_prepared: bool = False) -> EstimateResult:
    """Per-brick yaw/translation refinement against the scan.

    ``rough_pose`` (a FrameEstimate or RigidTransform) places the ``which``
    frame. ``sensor`` is the scanner pose(s) or LidarModel used to re-render
    the model with the ground. Returns estimates in the bricks' own frame.
    """
    cfg = cfg or MultiBrickConfig()
    frame_tf = getattr(rough_pose, "pose", rough_pose)
    kw = {"pile_frame": frame_tf} if which == "pile" else {"wall_frame": frame_tf}
    bricks = [b for b in scene_model.bricks if b.frame == which and (include is None or b.id in include)]
    if not bricks:
        raise ValueError("no bricks to estimate")
    scene = scene_model.replace(bricks=tuple(bricks), distractors=(), **kw)
    if sensor is None:
        c = np.mean([scene.brick_world(b).translation for b in bricks], axis=0)
        sensor = RigidTransform.from_xyz_yaw(c[0] - 2.5, c[1], c[2] + 1.5, 0.0)
    model = _render(scene, sensor, cfg.voxel)
    world = {b.id: scene.brick_world(b) for b in bricks}
    centers = {bid: tf.translation for bid, tf in world.items()}
    allc = np.array(list(centers.values()))
    radius = max(np.linalg.norm(allc - allc.mean(axis=0), axis=1).max() + 1.0 + cfg.crop_margin, 1.0)
    pc = scan if scan_prepared else prepare_scan(scan, allc.mean(axis=0), radius, cfg, _viewpoint(sensor))
    tree = cKDTree(pc.points)

    per = {}
    for b in bricks:
        sel = np.flatnonzero(model.labels == b.id)
        per[b.id] = (model.points[sel], model.normals[sel])
    expected = {bid: len(v[0]) for bid, v in per.items()}
    edges = contact_graph(bricks, scene.ground, cfg.contact_tol, scene)

    state = {b.id: np.zeros(4) for b in bricks}  # yaw, tx, ty, tz

    def moved(bid):
        s = state[bid]
        p, n = per[bid]
        r = rz(s[0])
        c = centers[bid]
        return (p - c) @ r.T + c + s[1:4], n @ r.T

    def associate(bid, gate):
        p, n = per[bid]
        if len(p) == 0:
            return np.zeros(0, int), np.zeros(0, int)
        mp, mn = moved(bid)
        d, j = tree.query(mp, distance_upper_bound=gate)
        ok = np.isfinite(d)
        jj = np.where(ok, j, 0)
        ok &= np.einsum("ij,ij->i", mn, pc.normals[jj]) >= cfg.lambda_dot
        return np.flatnonzero(ok), j[ok]

    def build(gate):
        prob = ResidualProblem()
        counts = {}
        for b in bricks:
            s = state[b.id]
            prob.add_parameter(f"yaw{b.id}", s[:1])
            prob.add_parameter(f"txy{b.id}", s[1:3])
            prob.add_parameter(f"tz{b.id}", s[3:4], frozen=not cfg.free_z)
        for b in bricks:
            mi, sj = associate(b.id, gate)
            counts[b.id] = len(mi)
            names = [f"yaw{b.id}", f"txy{b.id}", f"tz{b.id}"]
            if len(mi) == 0:
                for nme in names:
                    prob.set_frozen(nme)
                continue
            p, _ = per[b.id]
            fn, jac = brick_point_to_plane(p[mi], pc.points[sj], pc.normals[sj], centers[b.id], 1.0 / len(mi))
            prob.add_residual(names, fn, jac, kind="data")
        for a, c in sorted(edges):
            if a == GROUND:
                fn, jac = ground_contact(scene.ground.n, cfg.lambda_t)
                prob.add_residual([f"txy{c}", f"tz{c}"], fn, jac, kind="ground")
                continue
            (fr, jr), (ft, jt) = pairwise_terms(world[a].matrix(), world[c].matrix(), centers[a], centers[c],
                                                cfg.lambda_r, cfg.lambda_t)
            names = [f"yaw{a}", f"txy{a}", f"tz{a}", f"yaw{c}", f"txy{c}", f"tz{c}"]
            prob.add_residual(names, fr, jr, kind="rot")
            prob.add_residual(names, ft, jt, kind="trans")
        return prob, counts

    def pull(prob):
        for b in bricks:
            state[b.id] = np.concatenate([prob.value(f"yaw{b.id}"), prob.value(f"txy{b.id}"),
                                          prob.value(f"tz{b.id}")])

    reports = []
    initial_cost = None
    gate = max(cfg.coarse_distance, cfg.lambda_dist)
    for k in range(cfg.rounds):
        prob, counts = build(gate)
        if initial_cost is None:
            initial_cost = build(cfg.lambda_dist)[0].cost()
        if not prob.free_blocks():
            break
        before = {bid: s.copy() for bid, s in state.items()}
        reports.append(solve(prob, cfg.solver))
        pull(prob)
        change = max(float(np.abs(state[bid] - before[bid]).max()) for bid in state)
        log.debug("brick round %d gate %.3f change %.2e", k, gate, change)
        if gate <= cfg.lambda_dist and change < 1e-6:
            break
        gate = max(cfg.lambda_dist, gate / 2)

    final_prob, counts = build(cfg.lambda_dist)
    final_cost = final_prob.cost()
    ref = frame_tf.inverse()
    out = []
    for b in bricks:
        m = counts[b.id]
        exp = expected[b.id]
        if m == 0 or exp == 0:
            out.append(BrickEstimate(b.id, b.pose, 0.0, 0, exp, b.z))
            continue
        s = state[b.id]
        c = centers[b.id]
        r = rz(s[0])
        delta = RigidTransform(r, c + s[1:4] - r @ c)
        local = ref @ delta @ world[b.id]
        pose = PlanarPose(float(local.translation[0]), float(local.translation[1]),
                          wrap_angle(b.pose.yaw + s[0]))
        z = float(local.translation[2] - b.size[2] / 2)
        out.append(BrickEstimate(b.id, pose, min(1.0, m / exp), m, exp, z))
    return EstimateResult(out, reports, edges, float(initial_cost or 0.0), float(final_cost))


def pickable_bricks(estimates, min_confidence: float) -> list[int]:
    ok = [e for e in estimates if e.confidence >= min_confidence]
    ok.sort(key=lambda e: (-e.confidence, e.id))
    return [e.id for e in ok]
