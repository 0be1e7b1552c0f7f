import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brickyard.errors import MalformedBlueprint, NonAxisAligned
from brickyard.geometry import PlanarPose, RigidTransform, compose, inverse, pose_error, wrap_angle
from brickyard.model import (
    Blueprint,
    Brick,
    BrickType,
    StorageRack,
    blueprint_brick_centers,
    blueprint_bricks,
    brick_footprint,
)

coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)
poses = st.builds(PlanarPose, coord, coord, angle)


def close(a: PlanarPose, b: PlanarPose, tol=1e-9):
    return abs(a.x - b.x) < tol and abs(a.y - b.y) < tol and abs(wrap_angle(a.yaw - b.yaw)) < tol


def test_compose_examples():
    p = PlanarPose(1.0, 2.0, 0.3)
    assert close(compose(PlanarPose(), p), p)
    assert close(compose(p, inverse(p)), PlanarPose())
    assert close(compose(PlanarPose(1, 0, math.pi / 2), PlanarPose(1, 0, 0)), PlanarPose(1, 1, math.pi / 2))


@given(angle)
def test_yaw_normalized(a):
    y = PlanarPose(0, 0, a).yaw
    assert -math.pi < y <= math.pi


@given(poses, poses, poses)
def test_compose_associative(a, b, c):
    assert close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-7)


@given(poses)
def test_inverse_cancels(p):
    assert close(compose(p, inverse(p)), PlanarPose(), 1e-9)
    assert close(compose(inverse(p), p), PlanarPose(), 1e-9)


@given(poses, poses)
def test_rigid_transform_matches_planar(a, b):
    ta, tb = RigidTransform.from_planar(a), RigidTransform.from_planar(b)
    assert close((ta @ tb).planar(), compose(a, b), 1e-7)
    assert (ta @ tb).is_orthonormal()


def test_rigid_transform_invariants():
    t = RigidTransform.from_euler(0.1, -0.2, 0.3, (1, 2, 3))
    r = t.rotation
    assert np.allclose(r.T @ r, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(r) - 1) < 1e-9
    dt, da = pose_error(t @ t.inverse(), RigidTransform())
    assert dt < 1e-12 and da < 1e-9


def test_brick_types():
    assert {t.value: t.length for t in BrickType} == {"red": 0.30, "green": 0.60, "blue": 1.20, "orange": 1.80}
    assert [BrickType(v).mass for v in ("red", "green", "blue", "orange")] == [1.0, 1.5, 1.5, 2.0]
    assert BrickType.RED.cross_section == (0.20, 0.20)


def test_blueprint_centers():
    r, g, b, o = BrickType.RED, BrickType.GREEN, BrickType.BLUE, BrickType.ORANGE
    assert [c[2] for c in blueprint_brick_centers(Blueprint(((r, r),)))] == pytest.approx([0.15, 0.45])
    assert blueprint_brick_centers(Blueprint(((o,),)))[0][2] == pytest.approx(0.90)
    out = blueprint_brick_centers(Blueprint(((b,), (g, g))))
    assert [(k, i) for k, i, _, _ in out] == [(0, 0), (1, 0), (1, 1)]
    assert [c[2] for c in out] == pytest.approx([0.60, 0.30, 0.90])


def test_blueprint_mismatch_raises():
    with pytest.raises(MalformedBlueprint):
        blueprint_brick_centers(Blueprint(((BrickType.RED,), (BrickType.GREEN,))))


def test_blueprint_json_round_trip():
    bp = Blueprint.from_json({"layers": [["red", "red", "green"], ["blue"]]})
    assert Blueprint.from_json(bp.to_json()) == bp
    assert bp.to_json() == {"layers": [["red", "red", "green"], ["blue"]]}


def test_blueprint_bricks_heights():
    bp = Blueprint.from_json({"layers": [["blue"], ["green", "green"]]})
    bricks = blueprint_bricks(bp)
    assert [b.z for b in bricks] == pytest.approx([0.0, 0.2, 0.2])
    assert all(b.frame == "wall" for b in bricks)


def test_footprint():
    assert brick_footprint(Brick(0, BrickType.RED, PlanarPose(0.15, 0, 0))) == pytest.approx((0.0, 0.30))
    assert brick_footprint(Brick(0, BrickType.ORANGE, PlanarPose(0.90, 0, 0))) == pytest.approx((0.0, 1.80))
    assert brick_footprint(Brick(0, BrickType.GREEN, PlanarPose(1.0, 0, 0))) == pytest.approx((0.70, 1.30))
    with pytest.raises(NonAxisAligned):
        brick_footprint(Brick(0, BrickType.GREEN, PlanarPose(1.0, 0, 0.01)))


def test_storage_rack_loadouts():
    rack = StorageRack()
    assert rack.admits({"orange": 10})
    assert rack.admits({"red": 20, "green": 10, "blue": 5})
    assert not rack.admits({"red": 21})
    assert not rack.admits({"orange": 11})
    assert not rack.admits({"orange": 1, "red": 1})
    assert rack.capacity(BrickType.RED) == 20 and rack.capacity(BrickType.BLUE) == 5


def test_brick_json_round_trip():
    b = Brick(3, BrickType.BLUE, PlanarPose(1, 2, 0.5), "pile", 0.2)
    assert Brick.from_json(b.to_json()) == b
