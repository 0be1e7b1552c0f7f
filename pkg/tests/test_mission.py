import math

import pytest

from brickyard.errors import CorruptSnapshot, MissionFailed, OverCapacity
from brickyard.mission import (LOST, PLACED, MissionConfig, MissionLog, WorldState, assign_storage,
                               rack_within_limits, replay_mission, restore, run_mission, snapshot)
from brickyard.model import BrickType
from brickyard.planner import support_dependencies
from brickyard.scenarios import lab_task_blueprint, lab_task_scene, occluded_lab_scene


def test_storage_oranges():
    plan = assign_storage(["orange"] * 10)
    assert sorted(s.label for s in plan.slots.values()) == sorted(f"orange{n}" for n in range(1, 11))
    with pytest.raises(OverCapacity):
        assign_storage(["orange"] * 11)


def test_storage_full_small_load():
    plan = assign_storage(["red"] * 20 + ["green"] * 10 + ["blue"] * 5)
    assert len(plan.bins_used()) == 15
    per_bin = {}
    for s in plan.slots.values():
        per_bin[s.label] = per_bin.get(s.label, 0) + 1
    assert sorted(per_bin.values()) == [1] * 5 + [2] * 5 + [4] * 5


def test_storage_overflow():
    with pytest.raises(OverCapacity):
        assign_storage(["red"] * 21)
    with pytest.raises(OverCapacity):
        assign_storage(["orange", "red"])


def test_storage_deterministic_first_fit():
    a = assign_storage(["red", "green", "red", "blue"])
    assert a.slots == assign_storage(["red", "green", "red", "blue"]).slots
    assert [a.slots[i].label for i in range(4)] == ["c0b0", "c1b0", "c0b0", "c2b0"]
    assert [a.slots[i].level for i in range(4)] == [0, 0, 1, 0]


def test_rack_limits():
    types = {1: BrickType.RED, 2: BrickType.GREEN}
    assert rack_within_limits({"c0b0": [1]}, types)
    assert not rack_within_limits({"c0b0": [1, 2]}, types)
    assert not rack_within_limits({"c1b0": [1]}, types)


def test_log_monotone():
    log = MissionLog()
    log.append(1.0, "a", "enter")
    with pytest.raises(ValueError):
        log.append(0.5, "a", "enter")
    log.append(2.0, "b", "x", value=3)
    assert MissionLog.from_jsonl(log.to_jsonl()).to_jsonl() == log.to_jsonl()


@pytest.fixture(scope="module")
def clean_run():
    s = 0
    scene = lab_task_scene(s, max_shift=0.0, max_yaw=0.0)
    bp = lab_task_blueprint(s)
    return scene, bp, run_mission(scene, bp, MissionConfig(), seed=s)


def test_zero_noise_success(clean_run):
    _, bp, res = clean_run
    assert res.retries == 0
    assert res.state.counts()[PLACED] == bp.n_bricks
    assert max(res.placement_errors.values()) <= 0.05
    assert res.log.entries[-1].state == "done"


def test_snapshots_conserve_and_respect_rack(clean_run):
    scene, _, res = clean_run
    n = len([b for b in scene.bricks if b.frame == "pile"])
    assert res.snapshots
    for _, blob in res.snapshots:
        st = restore(blob)
        assert sum(st.counts().values()) == n
        assert rack_within_limits(st.rack, st.brick_types())


def test_snapshot_roundtrip(clean_run):
    _, _, res = clean_run
    fresh = restore(res.snapshots[0][1])
    assert restore(snapshot(fresh)) == fresh
    mid = restore(res.snapshots[len(res.snapshots) // 2][1])
    back = restore(snapshot(mid))
    assert back == mid and back.rack == mid.rack
    assert restore(snapshot(res.state)) == res.state


def test_snapshot_corrupt(clean_run):
    _, _, res = clean_run
    blob = snapshot(res.state)
    with pytest.raises(CorruptSnapshot):
        restore(blob[:-10])
    with pytest.raises(CorruptSnapshot):
        restore(b"garbage")
    flipped = bytearray(blob)
    flipped[-5] ^= 1
    with pytest.raises(CorruptSnapshot):
        restore(bytes(flipped))


def test_placements_respect_support(clean_run):
    _, bp, res = clean_run
    deps = support_dependencies(bp)
    built = set()
    for e in res.log.events("enter"):
        if e.state == "place":
            key = tuple(e.payload["slot"])
            assert all(d in built for d in deps[key])
            built.add(key)
    assert len(built) == bp.n_bricks


def test_replay_identical(clean_run):
    scene, bp, res = clean_run
    again = replay_mission(res.log, scene, bp, MissionConfig())
    assert again.log.to_jsonl() == res.log.to_jsonl()
    assert again.state == res.state


def test_state_json_roundtrip(clean_run):
    _, _, res = clean_run
    assert WorldState.from_json(res.state.to_json()) == res.state


def test_occluded_brick_lost():
    scene, hidden = occluded_lab_scene(0)
    with pytest.raises(MissionFailed) as info:
        run_mission(scene, lab_task_blueprint(0), MissionConfig(), seed=0)
    assert info.value.reason == "IncompleteWall"
    st = info.value.result.state
    assert st.status[hidden] == LOST
    assert [b for b, s in st.status.items() if s == LOST] == [hidden]


def test_noisy_config():
    cfg = MissionConfig.noisy()
    assert cfg.odometry_drift == pytest.approx(0.01) and cfg.lidar_sigma == pytest.approx(0.01)
    assert math.isfinite(cfg.to_json()["place_tolerance"])
