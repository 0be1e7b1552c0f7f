"""Rough pile detection: geofence, ground removal, clustering, PCA frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, cluster_points, pca_frame, ransac_plane
from .errors import DegenerateCluster, NoGround, NoPile, NoPlaneFound
from .geometry import RigidTransform

GROUND_CLEARANCE = 0.05


@dataclass(frozen=True)
class Geofence:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("empty geofence")

    def contains(self, pts) -> np.ndarray:
        p = np.asarray(pts, float)
        return (p[:, 0] >= self.x_min) & (p[:, 0] <= self.x_max) & (p[:, 1] >= self.y_min) & (p[:, 1] <= self.y_max)

    def shrink(self, m: float) -> Geofence:
        return Geofence(self.x_min + m, self.x_max - m, self.y_min + m, self.y_max - m)

    def to_json(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "y_min": self.y_min, "y_max": self.y_max}

    @classmethod
    def from_json(cls, d) -> Geofence:
        return cls(d["x_min"], d["x_max"], d["y_min"], d["y_max"])


@dataclass(frozen=True)
class PileHypothesis:
    frame: RigidTransform
    inliers: np.ndarray
    extent: tuple[float, float, float]
    score: int

    def to_json(self) -> dict:
        d = self.frame.to_json()
        d["extent"] = [float(v) for v in self.extent]
        d["score"] = int(self.score)
        return d


@dataclass
class PileConfig:
    inlier_dist: float = 0.02
    clearance: float = GROUND_CLEARANCE
    link_dist: float = 0.10
    min_cluster: int = 20
    extent_tol: float = 0.30
    max_ground_angle: float = np.deg2rad(20.0)


def _extent(pts: np.ndarray, frame: RigidTransform, height: np.ndarray) -> tuple[float, float, float]:
    local = frame.inverse().apply(pts)
    ext = local.max(axis=0) - local.min(axis=0)
    return float(ext[0]), float(ext[1]), float(height.max())


def _fits(ext, expected, tol) -> bool:
    if expected is None:
        return True
    return all(e * (1 - tol) <= v <= e * (1 + tol) for v, e in zip(ext, expected))


def footprint_frame(points: np.ndarray, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """PCA axes with the origin at the center of the horizontal extent box.

    Unlike the centroid, the box center does not drift toward the faces
    the scanner happens to see.
    """
    frame = pca_frame(points, up)
    local = frame.inverse().apply(points)
    mid = 0.5 * (local.min(axis=0) + local.max(axis=0))
    mid[2] = 0.0
    return RigidTransform(frame.rotation, frame.apply(mid))


def detect_pile(scan: PointCloud, fence: Geofence, expected_extent=None, seed: int = 0,
                cfg: PileConfig | None = None) -> PileHypothesis:
    """Single best pile hypothesis inside ``fence``.

    The frame origin is the center of the cluster's horizontal extent box
    dropped onto the ground plane, Z is the ground normal, X the horizontal
    principal axis. Inlier indices
    refer to the input scan.
    """
    cfg = cfg or PileConfig()
    if len(scan) == 0:
        raise NoPile("empty scan")
    idx = np.flatnonzero(fence.contains(scan.points))
    if len(idx) == 0:
        raise NoPile("no points inside the geofence")
    fenced = scan.select(idx)
    try:
        plane, _ = ransac_plane(fenced, cfg.inlier_dist, seed=seed, normal_hint=(0, 0, 1),
                                max_angle=cfg.max_ground_angle)
    except NoPlaneFound as e:
        raise NoGround(str(e)) from e
    height = plane.distance(fenced.points)
    above = height >= cfg.clearance
    cand = idx[above]
    pts = scan.points[cand]
    h = height[above]
    best = None
    for cl in cluster_points(pts, cfg.link_dist, cfg.min_cluster):
        try:
            frame = footprint_frame(pts[cl], up=plane.n)
        except DegenerateCluster:
            continue
        ext = _extent(pts[cl], frame, h[cl])
        if not _fits(ext, expected_extent, cfg.extent_tol):
            continue
        if best is None or len(cl) > len(best[0]):
            best = (cl, frame, ext)
    if best is None:
        raise NoPile("no cluster matches the expected pile size")
    cl, frame, ext = best
    c = frame.translation
    origin = c - plane.distance(c[None])[0] * plane.n
    frame = RigidTransform(frame.rotation, origin)
    return PileHypothesis(frame, np.sort(cand[cl]), ext, int(len(cl)))
