"""Seeded synthetic scenes shared by tests, scripts and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .geometry import PlanarPose, RigidTransform
from .model import Blueprint, Brick, BrickType, blueprint_bricks
from .planner import generate_blueprint
from .synth import (
    Box,
    LidarModel,
    MarkerSpec,
    Scene,
    compact_pile,
    perturb_bricks,
    simulate_lidar_scan,
    sweep_trajectory,
)

ESTIMATION_TYPES = ("red",) * 10 + ("green",) * 6 + ("blue",) * 4
LAB_TASK_COUNTS = {"blue": 3, "green": 4, "red": 4}


@dataclass
class RegistrationCase:
    scene: Scene
    scan: PointCloud
    init: RigidTransform
    truth: RigidTransform
    sensor: LidarModel


def perturb_pose(pose: RigidTransform, rng: np.random.Generator, max_shift: float, max_yaw: float) -> RigidTransform:
    """Planar offset uniform in a disk plus a yaw about the frame origin."""
    ang = rng.uniform(0, 2 * math.pi)
    r = max_shift * math.sqrt(rng.uniform())
    dy = rng.uniform(-1, 1) * max_yaw
    shifted = RigidTransform.from_xyz_yaw(r * math.cos(ang), r * math.sin(ang), 0, 0) @ pose
    return RigidTransform(RigidTransform.from_xyz_yaw(0, 0, 0, dy).rotation @ shifted.rotation, shifted.translation)


def wall_registration_case(seed: int, sigma: float = 0.01, max_shift: float = 1.0,
                           max_yaw: float = math.radians(15.0), partial: bool = False) -> RegistrationCase:
    """A built two-layer 3.6 m wall scanned obliquely from 3 m, with a perturbed initial guess."""
    rng = np.random.default_rng([3, seed])
    bp = generate_blueprint({"red": 8, "green": 4, "blue": 2}, 2, 3.6, seed=[5, seed])
    bricks = blueprint_bricks(bp)
    if partial:
        upper = [b for b in bricks if b.z > 0]
        bricks = [b for b in bricks if b.z == 0] + upper[:int(rng.integers(1, 4))]
    wf = RigidTransform.from_xyz_yaw(4.0 + rng.uniform(-0.5, 0.5), 1.0 + rng.uniform(-0.5, 0.5), 0,
                                     rng.uniform(-0.3, 0.3))
    scene = Scene(tuple(bricks), wall_frame=wf)
    ex = rng.uniform(0.5, 1.5)
    ex = -ex if rng.uniform() < 0.5 else 3.6 + ex
    lidar = LidarModel(sweep_trajectory(wf.apply([ex, -3.0, 1.8]), wf.apply([1.8, 0, 0.2])), sigma=sigma)
    scan = simulate_lidar_scan(scene, lidar, seed=seed)
    init = perturb_pose(wf, rng, max_shift, max_yaw)
    return RegistrationCase(scene, scan, init, wf, lidar)


def pile_sweep(pile_frame: RigidTransform, bricks, sigma: float = 0.01, height: float = 3.0,
               standoff: float = 1.5) -> LidarModel:
    """Elevated sweep from behind the pile's first corner, aimed at its near and far halves."""
    xs = [b.pose.x for b in bricks]
    ys = [b.pose.y for b in bricks]
    cx, cy = (min(xs) + max(xs)) / 2, (min(ys) + max(ys)) / 2
    eye = pile_frame.apply([-standoff, -standoff, height])
    near = pile_frame.apply([0.6 * cx, 0.6 * cy, 0.0])
    far = pile_frame.apply([1.4 * cx, 1.4 * cy, 0.0])
    return LidarModel(sweep_trajectory(eye, near) + sweep_trajectory(eye, far), sigma=sigma)


@dataclass
class PileCase:
    truth: Scene
    model: Scene
    scan: PointCloud
    sensor: LidarModel
    occluded: int | None


def pile_estimation_case(seed: int, types=ESTIMATION_TYPES, max_shift: float = 0.05,
                         max_yaw: float = math.radians(10.0), sigma: float = 0.01,
                         occlude: bool = True) -> PileCase:
    """Compact pile with per-brick perturbations; optionally one back-row brick
    hidden under a cover box."""
    rng = np.random.default_rng([11, seed])
    nominal = compact_pile(types)
    pf = RigidTransform.from_xyz_yaw(5.0, 0.5, 0.0, rng.uniform(-0.5, 0.5))
    truth = perturb_bricks(nominal, rng, max_shift, max_yaw)
    distractors: tuple[Box, ...] = ()
    occluded = None
    if occlude:
        back_y = max(b.pose.y for b in nominal)
        back = [b for b in truth if abs(nominal[b.id].pose.y - back_y) < 0.1]
        ob = back[int(rng.integers(len(back)))]
        occluded = ob.id
        c = pf.apply([ob.pose.x, ob.pose.y, 0.0])
        distractors = (Box((c[0], c[1]), (ob.type.length + 0.7, 0.8, 0.5), pf.yaw + ob.pose.yaw, (40, 40, 40)),)
    sensor = pile_sweep(pf, nominal, sigma)
    scene_true = Scene(tuple(truth), pile_frame=pf, distractors=distractors)
    scene_model = Scene(tuple(nominal), pile_frame=pf)
    scan = simulate_lidar_scan(scene_true, sensor, seed=seed)
    return PileCase(scene_true, scene_model, scan, sensor, occluded)


def lab_task_blueprint(seed: int = 0) -> Blueprint:
    """Eleven bricks (3 blue, 4 green, 4 red) in two 3.6 m layers."""
    return generate_blueprint(LAB_TASK_COUNTS, 2, 3.6, seed=[17, seed])


def lab_task_scene(seed: int = 0, max_shift: float = 0.03, max_yaw: float = math.radians(5.0),
                   marker_distance: float = 4.0) -> Scene:
    """Pile of the eleven task bricks plus an L marker ``marker_distance`` meters
    beyond the far edge of the pile. Pile bricks carry small placement errors."""
    rng = np.random.default_rng([19, seed])
    types = [t for t, n in LAB_TASK_COUNTS.items() for _ in range(n)]
    nominal = compact_pile(types)
    pf = RigidTransform.from_xyz_yaw(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0.0, rng.uniform(-0.2, 0.2))
    bricks = perturb_bricks(nominal, rng, max_shift, max_yaw)
    depth = max(b.pose.y for b in nominal)
    mx = pf.apply([0.5, depth + marker_distance, 0.0])
    marker = MarkerSpec(PlanarPose(float(mx[0]), float(mx[1]), rng.uniform(-0.3, 0.3)))
    return Scene(tuple(bricks), pile_frame=pf, marker=marker)


def nominal_pile(scene: Scene) -> list[Brick]:
    """The ideal layout the scene's pile was generated from (same ids and types)."""
    types = [b.type for b in sorted(scene.bricks, key=lambda b: b.id) if b.frame == "pile"]
    return compact_pile(types)


def counts_of(bricks) -> dict[BrickType, int]:
    out: dict[BrickType, int] = {}
    for b in bricks:
        out[b.type] = out.get(b.type, 0) + 1
    return out


def occluded_lab_scene(seed: int = 0, **kw) -> tuple[Scene, int]:
    """Lab task scene with the last back-row brick under a cover box; returns
    the scene and the hidden brick's id."""
    scene = lab_task_scene(seed, **kw)
    nominal = nominal_pile(scene)
    back_y = max(b.pose.y for b in nominal)
    hidden = [b for b in nominal if abs(b.pose.y - back_y) < 0.1][-1]
    c = scene.pile_frame.apply([hidden.pose.x, hidden.pose.y, 0.0])
    cover = Box((c[0], c[1]), (hidden.type.length + 0.3, 0.6, 0.5), scene.pile_frame.yaw, (40, 40, 40))
    return scene.replace(distractors=(cover,)), hidden.id
