import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from brickyard.cloud import PointCloud
from brickyard.io import atomic_write, read_json, read_pgm16, read_ply, read_ppm, write_json, write_pgm16, write_ply, write_ppm
from brickyard.scenarios import lab_task_scene
from brickyard.synth import Scene

finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=20)
@given(arrays(np.float64, st.tuples(st.integers(0, 30), st.just(3)), elements=finite))
def test_ply_roundtrip(tmp_path_factory, pts):
    path = tmp_path_factory.mktemp("ply") / "c.ply"
    n = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
    pc = PointCloud(pts, n, np.arange(len(pts)), "pile")
    write_ply(path, pc)
    back = read_ply(path)
    assert np.array_equal(back.points, pc.points) and np.array_equal(back.normals, pc.normals)
    assert np.array_equal(back.labels, pc.labels) and back.frame == "pile"


def test_ply_plain(tmp_path):
    pc = PointCloud(np.arange(12.0).reshape(4, 3))
    write_ply(tmp_path / "p.ply", pc)
    back = read_ply(tmp_path / "p.ply")
    assert back.normals is None and back.labels is None
    with pytest.raises(ValueError):
        (tmp_path / "bad.ply").write_text("not a ply\n")
        read_ply(tmp_path / "bad.ply")


def test_images_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, (7, 9, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", rgb)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), rgb)
    th = rng.integers(0, 65536, (5, 6), dtype=np.uint16)
    write_pgm16(tmp_path / "a.pgm", th)
    assert np.array_equal(read_pgm16(tmp_path / "a.pgm"), th)
    with pytest.raises(ValueError):
        write_ppm(tmp_path / "b.ppm", th)


def test_json_and_atomic(tmp_path):
    scene = lab_task_scene(1)
    write_json(tmp_path / "s.json", scene.to_json())
    assert Scene.from_json(read_json(tmp_path / "s.json")).to_json() == scene.to_json()
    atomic_write(tmp_path / "sub" / "x.txt", "hello")
    assert (tmp_path / "sub" / "x.txt").read_text() == "hello"
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["x.txt"]
