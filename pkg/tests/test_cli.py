import json
import math

import numpy as np
import pytest

from brickyard.cli import dispatch
from brickyard.io import read_json
from brickyard.model import Blueprint
from brickyard.planner import plan_optimal
from brickyard.synth import Camera, MarkerSpec, Scene, look_at


def run(*argv):
    return dispatch([str(a) for a in argv])


def test_plan_happy_path(tmp_path):
    bp = tmp_path / "bp.json"
    out = tmp_path / "plan.json"
    assert run("gen-blueprint", "--seed", 3, "--counts", "red=8,green=4,blue=2", "--layers", 2,
               "--length", 3.6, "--out", bp) == 0
    assert run("plan", "--blueprint", bp, "--mode", "optimal", "--out", out) == 0
    got = read_json(out)
    want = plan_optimal(Blueprint.from_json(read_json(bp))).to_json()
    assert got["stations"] == pytest.approx(want["stations"])
    man = read_json(tmp_path / "plan.json.manifest.json")
    assert man["command"] == "plan" and "runtime_s" in man and "version" in man


def test_bench_outputs(tmp_path):
    out, summ = tmp_path / "b.csv", tmp_path / "s.csv"
    assert run("bench", "--n", 4, "--seed", 7, "--out", out, "--summary", summ) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "method,instance,stations,distance,runtime_s"
    head = summ.read_text().splitlines()[0]
    assert head == "method,stations_mean,stations_stddev,distance_mean,distance_stddev,runtime_mean,runtime_stddev"
    again = tmp_path / "b2.csv"
    assert run("bench", "--n", 4, "--seed", 7, "--out", again) == 0
    assert again.read_bytes() == out.read_bytes()


def test_unknown_flag_usage_error(tmp_path, capsys):
    out = tmp_path / "plan.json"
    assert run("plan", "--blueprint", "x.json", "--bogus", "--out", out) == 2
    assert list(tmp_path.iterdir()) == []


def test_seed_required(tmp_path):
    assert run("gen-scene", "--kind", "lab", "--out", tmp_path / "s.json") == 2
    assert list(tmp_path.iterdir()) == []


def test_generation_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("gen-scene", "--kind", "pile", "--seed", 4, "--out", tmp_path / f"{name}.json") == 0
        assert run("scan", "--scene", tmp_path / f"{name}.json", "--sensor", "pile", "--seed", 4,
                   "--out", tmp_path / f"{name}.ply") == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_domain_error_exit_1(tmp_path):
    scene, cloud = tmp_path / "s.json", tmp_path / "c.ply"
    run("gen-scene", "--kind", "pile", "--seed", 1, "--out", scene)
    run("scan", "--scene", scene, "--sensor", "pile", "--seed", 1, "--out", cloud)
    assert run("detect-pile", "--cloud", cloud, "--fence", 50, 60, 50, 60, "--out", tmp_path / "p.json") == 1
    assert not (tmp_path / "p.json").exists()


def test_pile_detect_and_estimate(tmp_path):
    scene, cloud = tmp_path / "s.json", tmp_path / "c.ply"
    assert run("gen-scene", "--kind", "pile", "--seed", 2, "--out", scene) == 0
    assert run("scan", "--scene", scene, "--sensor", "pile", "--seed", 2, "--out", cloud) == 0
    assert run("detect-pile", "--cloud", cloud, "--fence", 2, 10, -3, 5, "--out", tmp_path / "p.json") == 0
    assert read_json(tmp_path / "p.json")["score"] > 0
    assert run("estimate-bricks", "--scene", scene, "--cloud", cloud, "--out", tmp_path / "e.json") == 0
    est = read_json(tmp_path / "e.json")
    confs = [e["confidence"] for e in est["bricks"]] if isinstance(est, dict) else [e["confidence"] for e in est]
    assert np.mean(confs) > 0.3


def test_register_wall(tmp_path):
    scene, cloud = tmp_path / "s.json", tmp_path / "c.ply"
    assert run("gen-scene", "--kind", "wall", "--seed", 5, "--out", scene) == 0
    assert run("scan", "--scene", scene, "--sensor", "wall", "--seed", 5, "--out", cloud) == 0
    wf = Scene.from_json(read_json(scene)).wall_frame
    init = (wf.translation[0] + 0.3, wf.translation[1] - 0.2, math.degrees(wf.yaw) + 5)
    assert run("register", "--scene", scene, "--cloud", cloud, "--target", "wall", "--init", *init,
               "--out", tmp_path / "r.json") == 0
    got = read_json(tmp_path / "r.json")
    assert np.linalg.norm(np.array(got["pose"]["origin"][:2]) - wf.translation[:2]) < 0.02


def test_detect_heat(tmp_path):
    scene, img = tmp_path / "t.json", tmp_path / "t.pgm"
    assert run("gen-scene", "--kind", "thermal", "--seed", 1, "--out", scene) == 0
    assert run("scan", "--scene", scene, "--sensor", "thermal", "--seed", 1, "--out", img) == 0
    assert run("detect-heat", "--image", img, "--camera", tmp_path / "t.pgm.camera.json",
               "--threshold", 8000, "--out", tmp_path / "h.json") == 0
    det = read_json(tmp_path / "h.json")["detection"]
    truth = Scene.from_json(read_json(scene)).heat_sources[0].position[2]
    assert abs(det["distance"] - truth) <= 0.15 * truth


def test_detect_marker_dir(tmp_path):
    spec = MarkerSpec()
    scene = tmp_path / "m.json"
    (tmp_path / "frames").mkdir()
    scene.write_text(json.dumps(Scene(marker=spec).to_json()))
    poses = []
    for i, d in enumerate((5.0, 4.5, 4.0)):
        c = np.array([0.75, 0.5, 0.0])
        eye = c + [-d * 0.3, -d, 1.5]
        cam = Camera.simple(525.0, 640, 480, look_at(eye, c))
        camf = tmp_path / f"cam{i}.json"
        camf.write_text(json.dumps(cam.to_json()))
        assert run("scan", "--scene", scene, "--sensor", "camera", "--camera", camf, "--seed", 0,
                   "--out", tmp_path / "frames" / f"f{i}.ppm") == 0
        poses.append(cam.to_json() | {"stamp": float(i)})
    (tmp_path / "poses.json").write_text(json.dumps(poses))
    assert run("detect-marker", "--images", tmp_path / "frames", "--poses", tmp_path / "poses.json",
               "--out", tmp_path / "marker.json") == 0
    det = read_json(tmp_path / "marker.json")
    assert det["valid"] and np.linalg.norm(det["intersection"]) < 0.1


@pytest.mark.slow
def test_run_mission(tmp_path):
    scene, bp = tmp_path / "s.json", tmp_path / "bp.json"
    assert run("gen-scene", "--kind", "lab", "--seed", 0, "--out", scene) == 0
    assert run("gen-blueprint", "--seed", 0, "--counts", "red=4,green=4,blue=3", "--layers", 2,
               "--length", 3.6, "--out", bp) == 0
    out = tmp_path / "mission"
    assert run("run-mission", "--scene", scene, "--blueprint", bp, "--seed", 0, "--out", out) == 0
    lines = (out / "mission.log.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["state"] == "done"
    assert (out / "final_state.json").exists() and any((out / "snapshots").iterdir())
    assert read_json(out / "manifest.json")["seed"] == 0
