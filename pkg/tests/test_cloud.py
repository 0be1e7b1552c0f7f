import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from brickyard.cloud import (
    PointCloud,
    estimate_normals,
    euclidean_cluster,
    pca_frame,
    ransac_plane,
    voxel_downsample,
    voxel_keys,
)
from brickyard.errors import DegenerateCluster, NoPlaneFound

pts_strategy = arrays(np.float64, st.tuples(st.integers(1, 200), st.just(3)),
                      elements=st.floats(-2, 2, allow_nan=False))


def test_voxel_examples():
    assert len(voxel_downsample(PointCloud.empty(), 0.02)) == 0
    one = voxel_downsample(PointCloud(np.tile([1.0, 1.0, 1.0], (100, 1))), 0.02)
    assert np.allclose(one.points, [[1, 1, 1]])
    g = np.stack(np.meshgrid(*[np.arange(5) * 0.05 + 0.011] * 3), -1).reshape(-1, 3)
    assert len(voxel_downsample(PointCloud(g), 0.02)) == len(g)


@given(pts_strategy)
def test_voxel_one_point_per_voxel(p):
    out = voxel_downsample(PointCloud(p), 0.1)
    keys = voxel_keys(out.points, 0.1)
    assert len(np.unique(keys, axis=0)) == len(out) <= len(p)


def _plane(n=400, seed=0):
    r = np.random.default_rng(seed)
    return np.column_stack([r.uniform(-1, 1, n), r.uniform(-1, 1, n), np.zeros(n)])


def test_normals_plane_and_flip():
    pc = PointCloud(_plane())
    up = estimate_normals(pc, 16, (0, 0, 5))
    assert np.allclose(up.normals, [0, 0, 1], atol=1e-3)
    down = estimate_normals(pc, 16, (0, 0, -5))
    assert np.allclose(down.normals, [0, 0, -1], atol=1e-3)


def test_normals_sphere_radial():
    r = np.random.default_rng(1)
    v = r.normal(size=(3000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    vp = np.array([0.0, 0.0, 10.0])
    pc = estimate_normals(PointCloud(v), 16, vp)
    vis = v[:, 2] > 0.2
    cos = np.sum(pc.normals[vis] * v[vis], axis=1)
    assert np.all(cos > np.cos(np.radians(5)))


@given(st.integers(0, 10_000))
def test_normals_face_viewpoint(seed):
    r = np.random.default_rng(seed)
    p = r.normal(size=(60, 3))
    vp = r.normal(size=3) * 5
    pc = estimate_normals(PointCloud(p), 8, vp)
    ok = np.isfinite(pc.normals).all(axis=1)
    assert np.all(np.sum(pc.normals[ok] * (vp - p[ok]), axis=1) >= -1e-12)


def test_ransac_examples():
    r = np.random.default_rng(2)
    ground = _plane(1000, 3)
    outl = np.column_stack([r.uniform(-1, 1, 50), r.uniform(-1, 1, 50), r.uniform(0.5, 1.0, 50)])
    plane, inl = ransac_plane(PointCloud(np.vstack([ground, outl])), 0.02, 200, seed=4)
    assert abs(abs(plane.n[2]) - 1) < 1e-6 and abs(plane.offset) < 1e-6
    assert len(inl) >= 1000
    tri = np.array([[0, 0, 1.0], [1, 0, 1.0], [0, 1, 1.0]])
    plane, inl = ransac_plane(PointCloud(tri), 0.01, 10, seed=0)
    assert np.allclose(plane.distance(tri), 0, atol=1e-9)
    with pytest.raises(NoPlaneFound):
        ransac_plane(PointCloud(r.uniform(-1, 1, (500, 3))), 1e-6, 50, seed=0)


def test_ransac_deterministic():
    p = PointCloud(np.vstack([_plane(300), np.random.default_rng(5).uniform(-1, 1, (100, 3))]))
    a = ransac_plane(p, 0.02, 100, seed=9)
    b = ransac_plane(p, 0.02, 100, seed=9)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_cluster_examples():
    r = np.random.default_rng(6)
    a = r.normal(0, 0.02, (50, 3))
    b = a + [1.0, 0, 0]
    assert len(euclidean_cluster(PointCloud(np.vstack([a, b])), 0.1)) == 2
    assert len(euclidean_cluster(PointCloud(a), 0.1)) == 1
    assert euclidean_cluster(PointCloud(a[:3]), 0.1, min_size=5) == []


@given(pts_strategy, st.floats(0.05, 1.0))
def test_cluster_partitions(p, d):
    cl = euclidean_cluster(PointCloud(p), d)
    allidx = np.concatenate(cl)
    assert sorted(allidx.tolist()) == list(range(len(p)))
    assert [len(c) for c in cl] == sorted((len(c) for c in cl), reverse=True)


def test_pca_examples():
    t = np.linspace(-1, 1, 20)[:, None]
    f = pca_frame(t * [1.0, 0, 0])
    assert np.allclose(f.rotation[:, 0], [1, 0, 0])
    f = pca_frame(t * [-1.0, -1.0, 0] / np.sqrt(2))
    assert np.allclose(f.rotation[:, 0], np.array([1, 1, 0]) / np.sqrt(2))
    with pytest.raises(DegenerateCluster):
        pca_frame(t * [0, 0, 1.0])


@given(arrays(np.float64, (30, 3), elements=st.floats(-3, 3, allow_nan=False)))
def test_pca_frame_orthonormal(p):
    try:
        f = pca_frame(p)
    except DegenerateCluster:
        return
    r = f.rotation
    assert np.allclose(r.T @ r, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(r) - 1) < 1e-9
    assert np.allclose(r[:, 2], [0, 0, 1])


def test_pointcloud_rejects_bad_normals():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), normals=np.zeros((2, 3)))
