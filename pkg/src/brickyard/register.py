"""Rough pile/wall pose refinement against a rendered model cloud.

Two ICP stages share one 6-DoF delta ``G`` acting on the model about its
centroid: point-to-plane with a wide correspondence gate, then
point-to-point with a tight one. Each association round freezes the pairs
and runs LM to termination. The final pose is ``G @ init``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, estimate_normals, ransac_plane, voxel_downsample
from .errors import EmptyAfterCrop, NoCorrespondences, NoPlaneFound
from .geometry import RigidTransform, pose_error
from .nls import ResidualProblem, SolveReport, SolverConfig, solve
from .residuals import (apply_delta6, direction_residual, euler_rotation, point_to_plane_6dof,
                        point_to_point_6dof)
from .synth import LidarModel, Scene, render_lidar_model_cloud, render_model_cloud

log = logging.getLogger(__name__)

MIN_PAIRS = 10


@dataclass
class RegistrationConfig:
    crop_half_extent: float | None = None
    crop_margin: float = 1.0
    voxel: float = 0.02
    rough_distance: float = 0.50
    fine_distance: float = 0.05
    solver: SolverConfig = field(default_factory=SolverConfig)
    marker_direction: tuple[float, float] | None = None
    w_dir: float | None = None
    rounds: int = 10
    rough_start_factor: float = 4.0
    ground_clearance: float = 0.04
    normal_k: int = 16
    max_curvature: float | None = None
    converged_ratio: float = 0.25
    symmetric: bool = True
    normal_dot: float | None = 0.8
    passes: int = 2
    rerender_shift: float = 0.02
    rerender_angle: float = math.radians(1.0)

    def __post_init__(self):
        if not (self.rough_distance > self.fine_distance > self.voxel):
            raise ValueError("need rough distance > fine distance > voxel size")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    def to_json(self) -> dict:
        return {
            "crop_half_extent": self.crop_half_extent, "crop_margin": self.crop_margin,
            "voxel": self.voxel, "rough_distance": self.rough_distance,
            "fine_distance": self.fine_distance, "rounds": self.rounds,
            "marker_direction": None if self.marker_direction is None else list(self.marker_direction),
            "w_dir": self.w_dir, "rough_start_factor": self.rough_start_factor,
            "ground_clearance": self.ground_clearance,
            "solver": {"param_tol": self.solver.param_tol, "cost_tol": self.solver.cost_tol,
                       "max_iterations": self.solver.max_iterations},
        }


@dataclass
class FrameEstimate:
    pose: RigidTransform
    cost: float
    pairs: int
    converged: bool
    rounds: tuple[int, int] = (0, 0)
    iterations: int = 0
    reports: list[SolveReport] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "pose": self.pose.to_json(),
            "cost": self.cost,
            "pairs": self.pairs,
            "converged": self.converged,
            "rounds": list(self.rounds),
            "iterations": self.iterations,
        }

    @classmethod
    def from_json(cls, d) -> FrameEstimate:
        return cls(RigidTransform.from_json(d["pose"]), d["cost"], d["pairs"], d["converged"],
                   tuple(d.get("rounds", (0, 0))), d.get("iterations", 0))


def preprocess_scan(scan: PointCloud, center: RigidTransform, cfg: RegistrationConfig,
                    seed: int = 0, viewpoint=(0.0, 0.0, 0.0), half_extent: float | None = None) -> PointCloud:
    """Crop a cube around ``center``, downsample, drop the ground, add normals."""
    half = half_extent if half_extent is not None else cfg.crop_half_extent
    if half is None:
        raise ValueError("crop half-extent unknown")
    if len(scan) == 0:
        raise EmptyAfterCrop("empty scan")
    local = center.inverse().apply(scan.points)
    keep = np.all(np.abs(local) <= half, axis=1)
    if not keep.any():
        raise EmptyAfterCrop("no scan point inside the crop cube")
    pc = voxel_downsample(PointCloud(scan.points[keep], frame=scan.frame), cfg.voxel)
    try:
        plane, _ = ransac_plane(pc, inlier_dist=0.02, seed=seed, normal_hint=(0, 0, 1),
                                max_angle=math.radians(20))
        above = plane.distance(pc.points) > cfg.ground_clearance
        pc = pc.select(np.flatnonzero(above))
    except NoPlaneFound:
        pass
    if len(pc) < MIN_PAIRS:
        raise EmptyAfterCrop("too few points left after ground removal")
    return estimate_normals(pc, cfg.normal_k, viewpoint, cfg.max_curvature)


def _delta_transform(x, pivot) -> RigidTransform:
    r = euler_rotation(x)
    return RigidTransform(r, pivot + np.asarray(x[3:6]) - r @ pivot)


def _associate(tree: cKDTree, pts: np.ndarray, gate: float):
    d, j = tree.query(pts, distance_upper_bound=gate)
    ok = np.isfinite(d)
    return np.flatnonzero(ok), j[ok], d[ok]


def rough_align(model: PointCloud, scan: PointCloud, init: RigidTransform,
                cfg: RegistrationConfig | None = None) -> FrameEstimate:
    """Refine ``init`` given model points rendered at ``init`` (world frame)."""
    cfg = cfg or RegistrationConfig()
    if len(model) == 0 or len(scan) == 0:
        raise NoCorrespondences("empty input cloud")
    if scan.normals is None:
        raise ValueError("scan needs normals")
    p = model.points
    pivot = p.mean(axis=0)
    tree = cKDTree(scan.points)
    q_all = scan.points
    n_all = scan.normals
    x = np.zeros(6)
    reports: list[SolveReport] = []
    axis_init = init.rotation[:, 0]

    def pairs(gate: float):
        cur = apply_delta6(x, p, pivot)
        mi, sj, _ = _associate(tree, cur, gate)
        if cfg.symmetric:
            si, mj, _ = _associate(cKDTree(cur), q_all, gate)
            mi = np.concatenate([mi, mj])
            sj = np.concatenate([sj, si])
        if cfg.normal_dot is not None and model.normals is not None:
            nm = model.normals[mi] @ euler_rotation(x).T
            ok = np.einsum("ij,ij->i", nm, n_all[sj]) >= cfg.normal_dot
            mi, sj = mi[ok], sj[ok]
        if len(mi) < MIN_PAIRS:
            raise NoCorrespondences(f"{len(mi)} pairs within {gate:.3f} m")
        return mi, sj

    def run_round(gate: float, point_to_plane: bool) -> float:
        nonlocal x
        mi, sj = pairs(gate)
        prob = ResidualProblem()
        prob.add_parameter("g", x)
        w = 1.0 / len(mi)
        if point_to_plane:
            fn, jac = point_to_plane_6dof(p[mi], q_all[sj], n_all[sj], pivot, w)
            prob.add_residual(["g"], fn, jac, kind="plane")
        else:
            fn, jac = point_to_point_6dof(p[mi], q_all[sj], pivot, w)
            prob.add_residual(["g"], fn, jac, kind="point")
        if cfg.marker_direction is not None:
            fn, jac = direction_residual(axis_init, cfg.marker_direction,
                                          cfg.w_dir if cfg.w_dir is not None else 10.0 * w)
            prob.add_residual(["g"], fn, jac, kind="dir")
        reports.append(solve(prob, cfg.solver))
        x_new = prob.value("g")
        change = float(np.abs(x_new - x).max())
        x = x_new
        return change

    stage_rounds = []
    for point_to_plane in (True, False):
        n = 0
        for k in range(cfg.rounds):
            if point_to_plane:
                gate = max(cfg.rough_distance, cfg.rough_distance * cfg.rough_start_factor * 0.5**k)
            else:
                gate = cfg.fine_distance
            change = run_round(gate, point_to_plane)
            log.debug("round %d gate %.3f x %s", k, gate, np.round(x, 4))
            n += 1
            if change < 1e-6 and (not point_to_plane or gate <= cfg.rough_distance):
                break
        stage_rounds.append(n)

    g = _delta_transform(x, pivot)
    cur = g.apply(p)
    d, j = tree.query(cur)
    r_plane = np.einsum("ij,ij->i", cur - q_all[j], n_all[j])
    r_plane[d > cfg.rough_distance] = np.inf
    trunc = np.minimum(r_plane**2, cfg.fine_distance**2)
    cost = float(trunc.mean())
    n_pairs = int(np.count_nonzero(d <= cfg.fine_distance))
    converged = cost <= cfg.converged_ratio * cfg.fine_distance**2
    pose = g @ init
    pose = RigidTransform.from_matrix(_orthonormalize(pose.matrix()))
    return FrameEstimate(pose, cost, n_pairs, bool(converged), tuple(stage_rounds),
                         sum(r.iterations for r in reports), reports)


def _orthonormalize(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m[:3, :3])
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    out = m.copy()
    out[:3, :3] = r
    return out


def target_scene(scene: Scene, which: str, pose: RigidTransform) -> Scene:
    """Scene holding only the bricks of ``which`` with that frame set to ``pose``."""
    if which not in ("pile", "wall"):
        raise ValueError(f"unknown target {which!r}")
    bricks = [b for b in scene.bricks if b.frame == which]
    kw = {"wall_frame": pose} if which == "wall" else {"pile_frame": pose}
    return scene.replace(bricks=tuple(bricks), distractors=(), **kw)


def default_sensor(model_scene: Scene, which: str, pose: RigidTransform, standoff: float = 3.0,
                   height: float = 1.0) -> RigidTransform:
    """A viewpoint in front of the target (negative local Y), facing it."""
    bricks = [b for b in model_scene.bricks if b.frame == which]
    xs = [b.pose.x for b in bricks] or [0.0]
    cx = 0.5 * (min(xs) + max(xs))
    eye = pose.apply([cx, -standoff, height])
    tgt = pose.apply([cx, 0.0, 0.0])
    yaw = math.atan2(tgt[1] - eye[1], tgt[0] - eye[0])
    return RigidTransform.from_xyz_yaw(eye[0], eye[1], eye[2], yaw)


def _poses(sensor) -> list[RigidTransform]:
    return [sensor] if isinstance(sensor, RigidTransform) else list(sensor)


def render_views(scene: Scene, sensor, voxel: float, include_ground: bool = False) -> PointCloud:
    """Model cloud seen from one or several sensor poses, merged on the voxel grid."""
    clouds = [render_model_cloud(scene, s, include_ground=include_ground, voxel=voxel) for s in _poses(sensor)]
    if len(clouds) == 1:
        return clouds[0]
    return voxel_downsample(PointCloud.concat(clouds), voxel)


def model_radius(model: PointCloud) -> float:
    c = model.points.mean(axis=0)
    return float(np.linalg.norm(model.points - c, axis=1).max())


def render_target(scene_model: Scene, which: str, pose: RigidTransform, sensor, cfg: RegistrationConfig) -> PointCloud:
    """Model cloud of the target placed at ``pose``, ground strip removed."""
    sub = target_scene(scene_model, which, pose)
    if isinstance(sensor, LidarModel):
        model = render_lidar_model_cloud(sub, sensor, cfg.voxel)
    else:
        model = render_views(sub, sensor, cfg.voxel)
    return model.select(np.flatnonzero(scene_model.ground.distance(model.points) > cfg.ground_clearance))


def register_target(scene_model: Scene, scan: PointCloud, init: RigidTransform, which: str = "wall",
                    cfg: RegistrationConfig | None = None, seed: int = 0,
                    sensor=None) -> FrameEstimate:
    """Render the target at ``init`` and align it to the scan.

    ``sensor`` is the scanner pose, a sequence of poses, or a ``LidarModel``.
    With a ``LidarModel`` the model is sampled with the scanner's own ray
    pattern so both clouds share the same per-face density; otherwise it is
    rendered densely from each pose and merged. When the first alignment
    moves the pose noticeably, the model is re-rendered at the refined pose
    (its visible faces change) and aligned again.
    """
    cfg = cfg or RegistrationConfig()
    if sensor is None:
        sensor = default_sensor(target_scene(scene_model, which, init), which, init)
    poses = list(sensor.trajectory) if isinstance(sensor, LidarModel) else _poses(sensor)
    viewpoint = np.mean([s.translation for s in poses], axis=0)
    model = render_target(scene_model, which, init, sensor, cfg)
    center = RigidTransform(init.rotation, model.points.mean(axis=0))
    half = cfg.crop_half_extent if cfg.crop_half_extent is not None else model_radius(model) + cfg.crop_margin
    pre = preprocess_scan(scan, center, cfg, seed, viewpoint=viewpoint, half_extent=half)
    est = rough_align(model, pre, init, cfg)
    reports = list(est.reports)
    for _ in range(cfg.passes - 1):
        dt, da = pose_error(est.pose, init)
        if dt < cfg.rerender_shift and da < cfg.rerender_angle:
            break
        init = est.pose
        model = render_target(scene_model, which, init, sensor, cfg)
        est = rough_align(model, pre, init, cfg)
        reports += est.reports
    est.reports = reports
    log.info("registered %s: cost %.2e pairs %d converged %s", which, est.cost, est.pairs, est.converged)
    return est
