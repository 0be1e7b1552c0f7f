import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brickyard.bricks import (GROUND, BrickEstimate, MultiBrickConfig, contact_graph, estimate_bricks,
                              estimate_bricks_full, pickable_bricks)
from brickyard.cloud import Plane
from brickyard.geometry import PlanarPose, RigidTransform
from brickyard.model import BRICK_SECTION, blueprint_bricks
from brickyard.planner import generate_blueprint
from brickyard.residuals import brick_point_to_plane, pairwise_terms
from brickyard.scenarios import pile_sweep
from brickyard.synth import Box, Scene, compact_pile, pile_bricks, simulate_lidar_scan

GROUND_PLANE = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
PF = RigidTransform.from_xyz_yaw(5.0, 0.5, 0.0, 0.3)
TEN = ["red"] * 5 + ["green"] * 3 + ["blue"] * 2


def _pose_err(est: BrickEstimate, truth):
    dt = math.hypot(est.pose.x - truth.pose.x, est.pose.y - truth.pose.y)
    da = abs(math.remainder(est.pose.yaw - truth.pose.yaw, 2 * math.pi))
    return dt, da


def test_contact_stacked():
    bricks = pile_bricks([("red", 0, 0, 0), ("red", 0, 0, 0, BRICK_SECTION)], frame="world")
    assert contact_graph(bricks, GROUND_PLANE) == {(0, 1), (GROUND, 0)}


def test_contact_apart():
    bricks = pile_bricks([("red", 0, 0, 0), ("red", 0.8, 0, 0)], frame="world")
    assert contact_graph(bricks, GROUND_PLANE) == {(GROUND, 0), (GROUND, 1)}


@pytest.mark.parametrize("seed", range(5))
def test_contact_blueprint_wall(seed):
    bp = generate_blueprint({"red": 8, "green": 4, "blue": 2}, 2, 3.6, seed=seed)
    bricks = blueprint_bricks(bp)
    expected = set()
    for i, a in enumerate(bricks):
        if a.z == 0:
            expected.add((GROUND, a.id))
        for b in bricks[i + 1:]:
            ax = (a.pose.x - a.type.length / 2, a.pose.x + a.type.length / 2)
            bx = (b.pose.x - b.type.length / 2, b.pose.x + b.type.length / 2)
            gap = max(ax[0], bx[0]) - min(ax[1], bx[1])
            # boxes closer than the 1 cm tolerance, edge-to-edge diagonals included
            same = a.z == b.z and gap <= 0.01
            stacked = abs(a.z - b.z) == pytest.approx(BRICK_SECTION) and gap <= 0.01
            if same or stacked:
                expected.add((min(a.id, b.id), max(a.id, b.id)))
    assert contact_graph(bricks, GROUND_PLANE, frame=RigidTransform()) == expected


def test_pairwise_terms_vanish_at_zero():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pi = RigidTransform.from_xyz_yaw(*rng.uniform(-2, 2, 3), rng.uniform(-3, 3))
        pj = RigidTransform.from_xyz_yaw(*rng.uniform(-2, 2, 3), rng.uniform(-3, 3))
        (fr, _), (ft, _) = pairwise_terms(pi.matrix(), pj.matrix(), pi.translation, pj.translation, 1.0, 10.0)
        args = (np.zeros(1), np.zeros(2), np.zeros(1)) * 2
        assert np.all(fr(*args) == 0) and np.all(ft(*args) == 0)


@settings(max_examples=30)
@given(st.integers(5, 60), st.integers(0, 10_000), st.floats(-0.3, 0.3))
def test_data_term_weight_normalization(m, seed, yaw):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(m, 3))
    q = p + rng.normal(scale=0.02, size=(m, 3))
    n = rng.normal(size=(m, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    c = p.mean(axis=0)
    args = (np.array([yaw]), np.array([0.01, -0.02]), np.zeros(1))
    fn1, _ = brick_point_to_plane(p, q, n, c, 1.0 / m)
    fn2, _ = brick_point_to_plane(np.vstack([p, p]), np.vstack([q, q]), np.vstack([n, n]), c, 1.0 / (2 * m))
    assert np.sum(fn1(*args) ** 2) == pytest.approx(np.sum(fn2(*args) ** 2), abs=1e-9)


def _pile(truth_bricks, nominal, sigma=0.0, distractors=()):
    scene = Scene(tuple(truth_bricks), pile_frame=PF, distractors=tuple(distractors))
    sensor = pile_sweep(PF, nominal, sigma)
    scan = simulate_lidar_scan(scene, sensor, seed=0)
    return Scene(tuple(nominal), pile_frame=PF), scan, sensor


def test_zero_perturbation_is_fixed_point():
    nominal = compact_pile(TEN)
    model, scan, sensor = _pile(nominal, nominal)
    res = estimate_bricks_full(model, PF, scan, sensor=sensor)
    for e, b in zip(res.estimates, nominal):
        dt, da = _pose_err(e, b)
        assert dt < 1e-4 and da < 1e-4
        assert e.z == pytest.approx(b.z, abs=1e-12)  # vertical frozen by default
    assert res.final_cost <= res.initial_cost + 1e-12


def test_single_brick_recovered():
    nominal = compact_pile(TEN)
    k = 3
    b = nominal[k]
    moved = b.moved(pose=PlanarPose(b.pose.x + 0.03, b.pose.y + 0.04, b.pose.yaw + math.radians(10)))
    truth = nominal[:k] + [moved] + nominal[k + 1:]
    model, scan, sensor = _pile(truth, nominal)
    res = estimate_bricks_full(model, PF, scan, sensor=sensor)
    for e, t in zip(res.estimates, truth):
        dt, da = _pose_err(e, t)
        if e.id == moved.id:
            assert dt <= 0.01 and math.degrees(da) <= 2.0
        else:
            assert dt <= 0.005 and math.degrees(da) <= 0.5
    assert res.final_cost <= res.initial_cost


def test_visible_ranked_above_half_occluded():
    nominal = pile_bricks([("red", 0.0, 0.0, 0.0), ("red", 0.0, 0.8, 0.0)])
    # a low box across half of the second brick
    c = PF.apply([0.9, 0.8, 0.0])
    cover = Box((c[0], c[1]), (1.0, 0.5, 0.4), PF.yaw, (40, 40, 40))
    model, scan, sensor = _pile(nominal, nominal, 0.005, [cover])
    est = estimate_bricks(model, PF, scan, sensor=sensor)
    conf = {e.id: e.confidence for e in est}
    assert conf[0] > conf[1]
    assert pickable_bricks(est, 0.0)[0] == 0


def test_pickable_examples():
    a = BrickEstimate(1, PlanarPose(), 0.9, 10, 10)
    b = BrickEstimate(2, PlanarPose(), 0.4, 4, 10)
    assert pickable_bricks([a, b], 0.5) == [1]
    zero = [BrickEstimate(i, PlanarPose(), 0.0, 0, 10) for i in range(3)]
    assert pickable_bricks(zero, 0.5) == []
    tie = [BrickEstimate(5, PlanarPose(), 0.7, 7, 10), BrickEstimate(3, PlanarPose(), 0.7, 7, 10)]
    assert pickable_bricks(tie, 0.1) == [3, 5]


def test_config_validation():
    with pytest.raises(ValueError):
        MultiBrickConfig(lambda_dot=1.5)
    with pytest.raises(ValueError):
        MultiBrickConfig(lambda_dist=0.0)


def test_estimate_json_roundtrip():
    e = BrickEstimate(4, PlanarPose(1.0, 2.0, 0.3), 0.75, 30, 40, 0.2)
    assert BrickEstimate.from_json(e.to_json()) == e
