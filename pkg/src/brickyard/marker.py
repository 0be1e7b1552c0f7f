"""L-marker detection: HSV masks, corner voting, ground projection and a
minimum-area rectangle fit over a sliding time window."""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .cloud import Plane, cluster_points
from .errors import NoCandidate, ValidationFailed
from .synth import Camera, MarkerSpec


@dataclass(frozen=True)
class ColorMaskConfig:
    """HSV volumes (hue in degrees, saturation/value in [0, 1])."""

    yellow_hue: tuple[float, float] = (40.0, 70.0)
    magenta_hue: tuple[float, float] = (290.0, 330.0)
    yellow_sv: tuple[float, float] = (0.5, 0.4)
    magenta_sv: tuple[float, float] = (0.5, 0.4)
    radius: int = 2

    def __post_init__(self):
        for lo, hi in (self.yellow_hue, self.magenta_hue):
            if not lo < hi:
                raise ValueError("hue intervals must be non-empty")
        for s, v in (self.yellow_sv, self.magenta_sv):
            if not (0.0 <= s < 1.0 and 0.0 <= v < 1.0):
                raise ValueError("saturation/value floors must lie in [0, 1)")
        if self.radius < 1:
            raise ValueError("proximity radius must be >= 1")

    def swapped(self) -> ColorMaskConfig:
        return ColorMaskConfig(self.magenta_hue, self.yellow_hue, self.magenta_sv, self.yellow_sv, self.radius)


@dataclass(frozen=True)
class MarkerConfig:
    colors: ColorMaskConfig = field(default_factory=ColorMaskConfig)
    corner_window: int = 5
    nms_radius: int = 5
    corner_quality: float = 0.05
    corner_sigma: float = 1.0
    match_px: float = 3.0
    min_votes: int = 4
    window: float = 10.0
    link_dist: float = 0.3
    voxel: float = 0.02
    length_tol: float = 0.20


@dataclass
class PixelCluster:
    """Winning pixel cluster of one frame, (N, 2) integer (u, v) pixels."""

    pixels: np.ndarray
    votes: int
    corners: np.ndarray


@dataclass
class MarkerDetection:
    intersection: np.ndarray
    long_dir: np.ndarray
    short_dir: np.ndarray
    long_side: float
    short_side: float
    valid: bool
    points: int = 0

    def to_json(self) -> dict:
        return {
            "intersection": [float(v) for v in self.intersection],
            "leg_directions": [[float(v) for v in self.long_dir], [float(v) for v in self.short_dir]],
            "side_lengths": [float(self.long_side), float(self.short_side)],
            "valid": bool(self.valid),
            "points": int(self.points),
        }

    @classmethod
    def from_json(cls, d) -> MarkerDetection:
        ld, sd = d["leg_directions"]
        return cls(np.array(d["intersection"]), np.array(ld), np.array(sd), d["side_lengths"][0],
                   d["side_lengths"][1], d["valid"], d.get("points", 0))

    @property
    def yaw(self) -> float:
        return math.atan2(self.long_dir[1], self.long_dir[0])


# ---------------------------------------------------------------- masks


def rgb_to_hsv(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = np.asarray(img, dtype=float) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    c = mx - mn
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(mx > 0, c / mx, 0.0)
        h = np.zeros_like(mx)
        nz = c > 0
        rm = nz & (mx == r)
        gm = nz & (mx == g) & ~rm
        bm = nz & ~rm & ~gm
        h[rm] = ((g - b)[rm] / c[rm]) % 6.0
        h[gm] = (b - r)[gm] / c[gm] + 2.0
        h[bm] = (r - g)[bm] / c[bm] + 4.0
    return h * 60.0, s, mx


def _classify(h, s, v, hue, sv) -> np.ndarray:
    return (h >= hue[0]) & (h <= hue[1]) & (s >= sv[0]) & (v >= sv[1])


def _disk(r: int) -> np.ndarray:
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def color_classes(img: np.ndarray, cfg: ColorMaskConfig) -> tuple[np.ndarray, np.ndarray]:
    h, s, v = rgb_to_hsv(img)
    return _classify(h, s, v, cfg.yellow_hue, cfg.yellow_sv), _classify(h, s, v, cfg.magenta_hue, cfg.magenta_sv)


def color_masks(img: np.ndarray, cfg: ColorMaskConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Yellow pixels near magenta ones and magenta pixels near yellow ones."""
    cfg = cfg or ColorMaskConfig()
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) RGB image")
    y, m = color_classes(img, cfg)
    k = _disk(cfg.radius)
    near_m = ndimage.binary_dilation(m, k) if m.any() else m
    near_y = ndimage.binary_dilation(y, k) if y.any() else y
    return y & near_m, m & near_y


# ---------------------------------------------------------------- corners


def corner_response(mask: np.ndarray, window: int = 5, sigma: float = 1.0) -> np.ndarray:
    """Smaller eigenvalue of the windowed structure tensor.

    The mask is blurred first so aliasing steps along slanted edges do not
    outscore real corners.
    """
    f = mask.astype(float)
    if sigma > 0:
        f = ndimage.gaussian_filter(f, sigma, mode="constant")
    gx = ndimage.sobel(f, axis=1, mode="constant")
    gy = ndimage.sobel(f, axis=0, mode="constant")
    a = ndimage.uniform_filter(gx * gx, window, mode="constant")
    b = ndimage.uniform_filter(gx * gy, window, mode="constant")
    c = ndimage.uniform_filter(gy * gy, window, mode="constant")
    return 0.5 * (a + c) - np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))


def extract_corners(mask: np.ndarray, window: int = 5, nms_radius: int = 5, quality: float = 0.05,
                    sigma: float = 1.0) -> np.ndarray:
    """(K, 2) array of (u, v) corner pixels after thresholding and NMS."""
    return _corners(corner_response(mask, window, sigma), nms_radius, quality)[0]


def _corners(r: np.ndarray, nms_radius: int, quality: float) -> tuple[np.ndarray, np.ndarray]:
    """Corner pixels and the boolean map of above-threshold response."""
    top = r.max() if r.size else 0.0
    if top <= 1e-9:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(r.shape, dtype=bool)
    strong = r >= quality * top
    peak = ndimage.maximum_filter(r, footprint=_disk(nms_radius), mode="constant")
    v, u = np.nonzero(strong & (r >= peak))
    return np.column_stack([u, v]).astype(np.int64), strong


def shared_corners(cy: np.ndarray, cm: np.ndarray, radius: float = 3.0) -> np.ndarray:
    """Corners of either mask that have a corner of the other mask within ``radius`` px."""
    if len(cy) == 0 or len(cm) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    dy, _ = cKDTree(cm).query(cy, distance_upper_bound=radius + 1e-9)
    dm, _ = cKDTree(cy).query(cm, distance_upper_bound=radius + 1e-9)
    return np.vstack([cy[np.isfinite(dy)], cm[np.isfinite(dm)]])


def _near(strong: np.ndarray, pts: np.ndarray, radius: float) -> np.ndarray:
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    grown = ndimage.binary_dilation(strong, _disk(max(1, int(math.floor(radius)))))
    return grown[pts[:, 1], pts[:, 0]]


def marker_corners(my: np.ndarray, mm: np.ndarray, cfg: MarkerConfig) -> np.ndarray:
    """Corners of either mask where the other mask also has a corner within ``cfg.match_px``.

    Presence in the other mask is judged on its thresholded response, not on
    its NMS survivors: on thin stripes NMS keeps a different corner of the
    same junction in each mask.
    """
    ry = corner_response(my, cfg.corner_window, cfg.corner_sigma)
    rm = corner_response(mm, cfg.corner_window, cfg.corner_sigma)
    cy, sy = _corners(ry, cfg.nms_radius, cfg.corner_quality)
    cm, sm = _corners(rm, cfg.nms_radius, cfg.corner_quality)
    keep_y = cy[_near(sm, cy, cfg.match_px)]
    keep_m = cm[_near(sy, cm, cfg.match_px)]
    return np.vstack([keep_y, keep_m]) if len(keep_y) + len(keep_m) else np.zeros((0, 2), dtype=np.int64)


def detect_marker_frame(img: np.ndarray, cfg: MarkerConfig | None = None) -> PixelCluster:
    """Pixel cluster of the most likely marker in one RGB frame.

    Clusters are connected components of marker-colored pixels that touch
    the cross-proximity masks; each corner found in both masks votes for the
    component it lies in (or next to).
    """
    cfg = cfg or MarkerConfig()
    my, mm = color_masks(img, cfg.colors)
    if not (my.any() and mm.any()):
        raise NoCandidate("color masks are empty")
    corners = marker_corners(my, mm, cfg)
    ycls, mcls = color_classes(img, cfg.colors)
    colored = ycls | mcls
    # components of the slightly dilated union keep thin, aliased legs together
    grown, n = ndimage.label(ndimage.binary_dilation(colored, _disk(2)), structure=np.ones((3, 3), bool))
    labels = np.where(colored, grown, 0)
    fused = my | mm
    touched = np.unique(labels[fused])
    votes = np.zeros(n + 1, dtype=np.int64)
    for u, v in corners:
        lab = labels[v, u] or grown[v, u]
        if lab:
            votes[lab] += 1
    votes[0] = 0
    votes[np.setdiff1d(np.arange(n + 1), touched)] = 0
    best = int(np.argmax(votes))
    if votes[best] < cfg.min_votes:
        raise NoCandidate(f"best cluster has {int(votes[best])} votes (< {cfg.min_votes})")
    v, u = np.nonzero(labels == best)
    inside = np.array([labels[q, p] == best or grown[q, p] == best for p, q in corners], dtype=bool)
    return PixelCluster(np.column_stack([u, v]).astype(np.int64), int(votes[best]),
                        corners[inside] if len(corners) else corners)


# ---------------------------------------------------------------- ground fit


def project_to_ground(pixels: np.ndarray, camera: Camera, ground: Plane | None = None) -> np.ndarray:
    """(N, 2) ground-plane xy of the given pixels; rays missing the ground are dropped."""
    if len(pixels) == 0:
        return np.zeros((0, 2))
    xy, ok = _ray_ground(np.asarray(pixels, dtype=float), camera, ground)
    return xy[ok]


_PIXEL_CORNERS = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


def _project_pixels(pixels: np.ndarray, camera: Camera, ground: Plane | None):
    """Ground xy of pixel centers (N, 2) and of their four corners (N, 4, 2),
    keeping only pixels whose center and corners all hit the ground."""
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    pts = np.concatenate([px[:, None, :], px[:, None, :] + _PIXEL_CORNERS[None]], axis=1).reshape(-1, 2)
    xy, ok = _ray_ground(pts, camera, ground)
    ok = ok.reshape(-1, 5).all(axis=1)
    xy = xy.reshape(-1, 5, 2)[ok]
    return xy[:, 0], xy[:, 1:]


def _ray_ground(pixels: np.ndarray, camera: Camera, ground: Plane | None):
    ground = ground or Plane.ground()
    rays = camera.pixel_to_ray(pixels)
    o = camera.pose.translation
    denom = rays @ ground.n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground.offset - o @ ground.n) / denom
    ok = np.isfinite(t) & (t > 0)
    pts = o + np.where(ok, t, 0.0)[:, None] * rays
    return pts[:, :2], ok


def min_area_rectangle(xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smallest enclosing oriented rectangle: corners (4, 2) in order, unit axes (2, 2), side lengths (2,)."""
    pts = np.asarray(xy, dtype=float)
    if len(pts) < 3:
        raise NoCandidate("too few ground points for a rectangle")
    try:
        hull = pts[ConvexHull(pts).vertices]
    except QhullError as e:
        raise NoCandidate("degenerate ground point set") from e
    edges = np.roll(hull, -1, axis=0) - hull
    ang = np.unique(np.round(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2), 12))
    best = None
    for a in ang:
        ax = np.array([[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]])
        proj = hull @ ax.T
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        area = float(np.prod(hi - lo))
        if best is None or area < best[0] - 1e-12:
            best = (area, ax, lo, hi)
    _, ax, lo, hi = best
    loc = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    return loc @ ax, ax, hi - lo


def fit_l_marker(xy: np.ndarray, spec: MarkerSpec | None = None, tol: float = 0.20,
                 outline: np.ndarray | None = None) -> MarkerDetection:
    """L intersection from the rectangle corner opposite the emptiest one.

    ``outline`` (default ``xy``) are the points the rectangle must enclose,
    e.g. projected pixel corners; the emptiest corner is judged from ``xy``.
    """
    spec = spec or MarkerSpec()
    corners, _, _ = min_area_rectangle(xy if outline is None else outline)
    far = int(np.argmax([np.linalg.norm(xy - c, axis=1).sum() for c in corners]))
    k = (far + 2) % 4
    origin = corners[k]
    e1 = corners[(k + 1) % 4] - origin
    e2 = corners[(k - 1) % 4] - origin
    l1, l2 = float(np.linalg.norm(e1)), float(np.linalg.norm(e2))
    if l1 < l2:
        e1, e2, l1, l2 = e2, e1, l2, l1
    valid = abs(l1 - spec.long_leg) <= tol * spec.long_leg and abs(l2 - spec.short_leg) <= tol * spec.short_leg
    d1 = e1 / max(l1, 1e-12)
    d2 = e2 / max(l2, 1e-12)
    return MarkerDetection(origin, d1, d2, l1, l2, bool(valid), len(xy))


def _grid_reduce(xy: np.ndarray, d: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell centroids on a grid anchored at the point set's minimum corner
    (translation-equivariant) and the cell index of every input point."""
    keys = np.floor((xy - xy.min(axis=0)) / d).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    reps = np.zeros((len(counts), 2))
    np.add.at(reps, inv, xy)
    return reps / counts[:, None], inv


def accumulate_and_fit(observations, now: float | None = None, spec: MarkerSpec | None = None,
                       cfg: MarkerConfig | None = None, ground: Plane | None = None,
                       strict: bool = False) -> MarkerDetection:
    """Fit the marker to ground-projected clusters from the last ``cfg.window`` seconds.

    ``observations`` holds (stamp, PixelCluster or (N, 2) pixels, Camera)
    triples. ``now`` defaults to the newest stamp. With ``strict`` a failed
    side-length check raises ValidationFailed carrying the detection.
    """
    cfg = cfg or MarkerConfig()
    obs = list(observations)
    if now is None:
        now = max((o[0] for o in obs), default=0.0)
    centers, outlines = [], []
    for stamp, cl, cam in obs:
        if stamp > now or now - stamp > cfg.window:
            continue
        px = cl.pixels if isinstance(cl, PixelCluster) else np.asarray(cl)
        c, o = _project_pixels(px, cam, ground)
        centers.append(c)
        outlines.append(o)
    xy = np.vstack(centers) if centers else np.zeros((0, 2))
    if len(xy) < 3:
        raise NoCandidate("no marker pixels in the time window")
    corners = np.concatenate(outlines)
    reps, inv = _grid_reduce(xy, cfg.voxel)
    clusters = cluster_points(np.column_stack([reps, np.zeros(len(reps))]), cfg.link_dist)
    members = np.isin(inv, clusters[0])
    det = fit_l_marker(xy[members], spec, cfg.length_tol, corners[members].reshape(-1, 2))
    if strict and not det.valid:
        raise ValidationFailed(det)
    return det


class MarkerAccumulator:
    """Ring buffer of time-stamped frame clusters; single writer."""

    def __init__(self, spec: MarkerSpec | None = None, cfg: MarkerConfig | None = None, ground: Plane | None = None):
        self.spec = spec or MarkerSpec()
        self.cfg = cfg or MarkerConfig()
        self.ground = ground
        self._buf: collections.deque = collections.deque()

    def __len__(self) -> int:
        return len(self._buf)

    def submit(self, stamp: float, cluster, camera: Camera) -> None:
        if self._buf and stamp < self._buf[-1][0]:
            raise ValueError("frames must be submitted in time order")
        self._buf.append((stamp, cluster, camera))
        while self._buf and stamp - self._buf[0][0] > self.cfg.window:
            self._buf.popleft()

    def process(self, stamp: float, img: np.ndarray, camera: Camera) -> bool:
        """Run frame detection and keep the cluster; False if the frame had none."""
        try:
            cl = detect_marker_frame(img, self.cfg)
        except NoCandidate:
            return False
        self.submit(stamp, cl, camera)
        return True

    def fit(self, now: float | None = None, strict: bool = False) -> MarkerDetection:
        return accumulate_and_fit(self._buf, now, self.spec, self.cfg, self.ground, strict)
