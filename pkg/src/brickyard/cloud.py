"""Point-cloud primitives: voxel grid, normals, RANSAC planes, clustering, PCA frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DegenerateCluster, NoPlaneFound
from .geometry import RigidTransform


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None
    labels: np.ndarray | None = None
    frame: str = "world"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(n) != len(pts):
                raise ValueError("normals and points differ in length")
            object.__setattr__(self, "normals", n)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(lab) != len(pts):
                raise ValueError("labels and points differ in length")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.points)

    def select(self, idx) -> PointCloud:
        idx = np.asarray(idx)
        return PointCloud(
            self.points[idx],
            None if self.normals is None else self.normals[idx],
            None if self.labels is None else self.labels[idx],
            self.frame,
        )

    def transformed(self, tf: RigidTransform) -> PointCloud:
        return PointCloud(
            tf.apply(self.points),
            None if self.normals is None else tf.apply_dir(self.normals),
            self.labels,
            self.frame,
        )

    @classmethod
    def empty(cls) -> PointCloud:
        return cls(np.zeros((0, 3)))

    @classmethod
    def concat(cls, clouds) -> PointCloud:
        clouds = [c for c in clouds if len(c)]
        if not clouds:
            return cls.empty()
        pts = np.vstack([c.points for c in clouds])
        nrm = np.vstack([c.normals for c in clouds]) if all(c.normals is not None for c in clouds) else None
        lab = np.concatenate([c.labels for c in clouds]) if all(c.labels is not None for c in clouds) else None
        return cls(pts, nrm, lab, clouds[0].frame)


@dataclass(frozen=True)
class Plane:
    """n . x = d with |n| = 1."""

    normal: tuple[float, float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "normal", tuple((n / norm).tolist()))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)

    def distance(self, pts) -> np.ndarray:
        """Signed distance of each point."""
        return np.asarray(pts, dtype=float) @ self.n - self.offset

    @classmethod
    def ground(cls) -> Plane:
        return cls((0.0, 0.0, 1.0), 0.0)


def voxel_keys(points: np.ndarray, d: float) -> np.ndarray:
    return np.floor(points / d).astype(np.int64)


def voxel_downsample(pc: PointCloud, d: float) -> PointCloud:
    """Replace each occupied voxel by the centroid of its points.

    Normals are averaged and renormalized; a voxel takes the most frequent
    label among its members (lowest label on ties). Output is ordered by
    voxel key so results do not depend on input order.
    """
    if d <= 0:
        raise ValueError("voxel size must be positive")
    if len(pc) == 0:
        return pc
    keys = voxel_keys(pc.points, d)
    uniq, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    m = len(uniq)
    pts = np.zeros((m, 3))
    np.add.at(pts, inv, pc.points)
    pts /= counts[:, None]
    normals = None
    if pc.normals is not None:
        normals = np.zeros((m, 3))
        np.add.at(normals, inv, pc.normals)
        norm = np.linalg.norm(normals, axis=1)
        bad = norm < 1e-12
        # opposing normals cancel; fall back to the first member's normal
        if bad.any():
            first = np.full(m, -1)
            first[inv[::-1]] = np.arange(len(inv))[::-1]
            normals[bad] = pc.normals[first[bad]]
            norm[bad] = np.linalg.norm(normals[bad], axis=1)
        normals /= norm[:, None]
    labels = None
    if pc.labels is not None:
        labels = _majority_labels(inv, pc.labels, m)
    return PointCloud(pts, normals, labels, pc.frame)


def _majority_labels(inv: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    pairs, pc = np.unique(np.stack([inv, labels], axis=1), axis=0, return_counts=True)
    # sort by voxel, count desc, label asc; first row per voxel wins
    order = np.lexsort((pairs[:, 1], -pc, pairs[:, 0]))
    pairs = pairs[order]
    first = np.ones(len(pairs), dtype=bool)
    first[1:] = pairs[1:, 0] != pairs[:-1, 0]
    out = np.empty(m, dtype=np.int64)
    out[pairs[first, 0]] = pairs[first, 1]
    return out


def normals_and_mask(points: np.ndarray, k: int, viewpoint,
                     max_curvature: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """k-NN PCA normals oriented toward ``viewpoint`` plus a validity mask.

    A neighborhood whose covariance has rank < 2 gets a zero normal and a
    False mask entry, as does one whose surface variation
    ``l0 / (l0 + l1 + l2)`` exceeds ``max_curvature`` (edges, corners).
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    n = len(points)
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, got {n}")
    tree = cKDTree(points)
    _, nn = tree.query(points, k=k + 1)
    nb = points[nn]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0].copy()
    scale = np.maximum(w[:, 2], 1e-300)
    valid = w[:, 1] > 1e-10 * scale
    valid &= w[:, 2] > 1e-18
    if max_curvature is not None:
        valid &= w[:, 0] <= max_curvature * np.maximum(w.sum(axis=1), 1e-300)
    view = np.asarray(viewpoint, dtype=float) - points
    flip = np.einsum("ij,ij->i", normals, view) < 0
    normals[flip] *= -1
    normals[~valid] = 0.0
    return normals, valid


def estimate_normals(pc: PointCloud, k: int = 16, viewpoint=(0.0, 0.0, 0.0),
                     max_curvature: float | None = None) -> PointCloud:
    """Points with a usable normal, normals flipped toward ``viewpoint``.

    Points with degenerate (or, given ``max_curvature``, non-planar)
    neighborhoods are dropped.
    """
    normals, valid = normals_and_mask(pc.points, k, viewpoint, max_curvature)
    out = PointCloud(pc.points, normals, pc.labels, pc.frame)
    return out if valid.all() else out.select(np.flatnonzero(valid))


def _plane_from_points(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, float(n @ p0)


def fit_plane_lsq(points: np.ndarray) -> Plane:
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = vt[-1]
    return Plane(tuple(n), float(n @ c))


def ransac_plane(
    pc: PointCloud,
    inlier_dist: float = 0.02,
    iterations: int = 200,
    seed: int = 0,
    normal_hint=None,
    max_angle: float | None = None,
    min_ratio: float = 0.10,
) -> tuple[Plane, np.ndarray]:
    """Best-supported plane among random 3-point hypotheses, refit on its inliers.

    ``normal_hint``/``max_angle`` restrict hypotheses to planes whose normal is
    within ``max_angle`` radians of the hint (either sign).
    Returns the plane and the sorted indices of points within ``inlier_dist``.
    """
    pts = pc.points
    n = len(pts)
    if n < 3:
        raise NoPlaneFound("need at least 3 points")
    rng = np.random.default_rng(seed)
    hint = None if normal_hint is None else np.asarray(normal_hint, float) / np.linalg.norm(normal_hint)
    cos_lim = None if max_angle is None else np.cos(max_angle)
    best = None
    best_count = -1
    for _ in range(iterations):
        idx = rng.choice(n, 3, replace=False) if n > 3 else np.arange(3)
        hyp = _plane_from_points(*pts[idx])
        if hyp is None:
            continue
        normal, off = hyp
        if hint is not None and cos_lim is not None and abs(normal @ hint) < cos_lim:
            continue
        count = int(np.count_nonzero(np.abs(pts @ normal - off) <= inlier_dist))
        if count > best_count:
            best, best_count = (normal, off), count
        if n == 3:
            break
    if best is None or best_count < min_ratio * n:
        raise NoPlaneFound(f"best inlier ratio {max(best_count, 0) / n:.3f}")
    normal, off = best
    inl = np.flatnonzero(np.abs(pts @ normal - off) <= inlier_dist)
    plane = Plane(tuple(normal), off)
    if len(inl) >= 3:
        refit = fit_plane_lsq(pts[inl])
        refit_inl = np.flatnonzero(np.abs(refit.distance(pts)) <= inlier_dist)
        if len(refit_inl) >= len(inl):
            plane, inl = refit, refit_inl
    if hint is not None and plane.n @ hint < 0:
        plane = Plane(tuple(-plane.n), -plane.offset)
    return plane, inl


def euclidean_cluster(pc: PointCloud, link_dist: float = 0.10, min_size: int = 1) -> list[np.ndarray]:
    """Connected components under a ``link_dist`` radius graph, largest first."""
    if link_dist <= 0:
        raise ValueError("link_dist must be positive")
    return cluster_points(pc.points, link_dist, min_size)


def cluster_points(points: np.ndarray, link_dist: float, min_size: int = 1) -> list[np.ndarray]:
    n = len(points)
    if n == 0:
        return []
    pairs = cKDTree(points).query_pairs(link_dist, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, lab = connected_components(graph, directed=False)
    order = np.argsort(lab, kind="stable")
    splits = np.flatnonzero(np.diff(lab[order])) + 1
    clusters = [c for c in np.split(order, splits) if len(c) >= min_size]
    clusters.sort(key=lambda c: (-len(c), int(c[0])))
    return clusters


def pca_frame(points: np.ndarray, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Frame at the centroid; X = principal axis projected orthogonal to ``up``."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegenerateCluster("need at least 3 points")
    z = np.asarray(up, dtype=float)
    z = z / np.linalg.norm(z)
    c = pts.mean(axis=0)
    cov = np.cov((pts - c).T, bias=True)
    w, v = np.linalg.eigh(cov)
    if w[-1] <= 0:
        raise DegenerateCluster("all points coincide")
    ax = v[:, -1]
    x = ax - (ax @ z) * z
    norm = np.linalg.norm(x)
    if norm < 1e-6:
        raise DegenerateCluster("principal axis parallel to up")
    x /= norm
    if x[0] < -1e-12 or (abs(x[0]) <= 1e-12 and x[1] < 0):
        x = -x
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), c)
