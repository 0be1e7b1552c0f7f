"""Synthetic sensing: scene model, ray-cast model clouds and LiDAR sweeps,
marker and thermal images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import Plane, PointCloud, voxel_downsample
from .errors import EmptyView, MarkerNotVisible
from .geometry import PlanarPose, RigidTransform, rot_z
from .model import BRICK_SECTION, Brick, BrickType

GROUND_LABEL = -1
DISTRACTOR_LABEL = -2

YELLOW = (255, 255, 0)
MAGENTA = (255, 0, 255)
GROUND_RGB = (128, 128, 128)
SKY_RGB = (135, 206, 235)


@dataclass(frozen=True)
class MarkerSpec:
    """L-shaped ground marker. Frame origin at the outer L corner, the long
    leg along +X and the short leg along +Y."""

    pose: PlanarPose = field(default_factory=PlanarPose)
    long_leg: float = 1.5
    short_leg: float = 1.0
    leg_width: float = 0.2
    stripe_width: float = 0.1

    @property
    def stripe_count(self) -> int:
        return math.ceil(self.long_leg / self.stripe_width - 1e-9)

    def to_json(self) -> dict:
        return {
            "pose": self.pose.to_list(),
            "long_leg": self.long_leg,
            "short_leg": self.short_leg,
            "leg_width": self.leg_width,
            "stripe_width": self.stripe_width,
        }

    @classmethod
    def from_json(cls, d) -> MarkerSpec:
        return cls(PlanarPose.from_list(d["pose"]), d["long_leg"], d["short_leg"],
                   d.get("leg_width", 0.2), d.get("stripe_width", 0.1))


@dataclass(frozen=True)
class Box:
    """Distractor box standing on the ground; ``color`` is used in images."""

    center: tuple[float, float] = (0.0, 0.0)
    size: tuple[float, float, float] = (0.5, 0.5, 0.5)
    yaw: float = 0.0
    color: tuple[int, int, int] = (200, 200, 0)

    def to_json(self) -> dict:
        return {"center": list(self.center), "size": list(self.size), "yaw": self.yaw, "color": list(self.color)}

    @classmethod
    def from_json(cls, d) -> Box:
        return cls(tuple(d["center"]), tuple(d["size"]), d.get("yaw", 0.0), tuple(d.get("color", (200, 200, 0))))


@dataclass(frozen=True)
class HeatSource:
    position: tuple[float, float, float]
    radius: float = 0.075
    temperature: float = 150.0

    def to_json(self) -> dict:
        return {"position": list(self.position), "radius": self.radius, "temperature": self.temperature}

    @classmethod
    def from_json(cls, d) -> HeatSource:
        return cls(tuple(d["position"]), d.get("radius", 0.075), d.get("temperature", 150.0))


@dataclass(frozen=True)
class Scene:
    bricks: tuple[Brick, ...] = ()
    wall_frame: RigidTransform = field(default_factory=RigidTransform)
    pile_frame: RigidTransform = field(default_factory=RigidTransform)
    ground: Plane = field(default_factory=Plane.ground)
    marker: MarkerSpec | None = None
    distractors: tuple[Box, ...] = ()
    heat_sources: tuple[HeatSource, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bricks", tuple(self.bricks))
        object.__setattr__(self, "distractors", tuple(self.distractors))
        object.__setattr__(self, "heat_sources", tuple(self.heat_sources))
        ids = [b.id for b in self.bricks]
        if len(set(ids)) != len(ids):
            raise ValueError("brick ids must be unique")
        if self.ground.n[2] <= 0:
            raise ValueError("ground normal must point up")

    def frame(self, name: str) -> RigidTransform:
        if name == "wall":
            return self.wall_frame
        if name == "pile":
            return self.pile_frame
        if name == "world":
            return RigidTransform()
        raise KeyError(f"unknown frame {name!r}")

    def brick(self, bid: int) -> Brick:
        for b in self.bricks:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def brick_world(self, b: Brick) -> RigidTransform:
        """World transform of the brick's center (box frame)."""
        local = RigidTransform(rot_z(b.pose.yaw), [b.pose.x, b.pose.y, b.center_z])
        return self.frame(b.frame) @ local

    def replace(self, **kw) -> Scene:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return Scene(**d)

    def with_bricks(self, bricks) -> Scene:
        return self.replace(bricks=tuple(bricks))

    def to_json(self) -> dict:
        return {
            "bricks": [b.to_json() for b in self.bricks],
            "wall_frame": self.wall_frame.to_json(),
            "pile_frame": self.pile_frame.to_json(),
            "ground": {"normal": list(self.ground.normal), "offset": self.ground.offset},
            "marker": None if self.marker is None else self.marker.to_json(),
            "distractors": [d.to_json() for d in self.distractors],
            "heat_sources": [h.to_json() for h in self.heat_sources],
        }

    @classmethod
    def from_json(cls, d) -> Scene:
        g = d.get("ground") or {"normal": [0, 0, 1], "offset": 0.0}
        return cls(
            tuple(Brick.from_json(b) for b in d.get("bricks", [])),
            RigidTransform.from_json(d["wall_frame"]) if d.get("wall_frame") else RigidTransform(),
            RigidTransform.from_json(d["pile_frame"]) if d.get("pile_frame") else RigidTransform(),
            Plane(tuple(g["normal"]), g["offset"]),
            MarkerSpec.from_json(d["marker"]) if d.get("marker") else None,
            tuple(Box.from_json(b) for b in d.get("distractors", [])),
            tuple(HeatSource.from_json(h) for h in d.get("heat_sources", [])),
        )


# ---------------------------------------------------------------- ray casting


@dataclass
class BoxSet:
    centers: np.ndarray  # (B, 3)
    rotations: np.ndarray  # (B, 3, 3) world from box
    half: np.ndarray  # (B, 3)
    labels: np.ndarray  # (B,)

    def __len__(self):
        return len(self.labels)


def scene_boxes(scene: Scene, brick_ids=None, distractors: bool = False) -> BoxSet:
    cs, rs, hs, ls = [], [], [], []
    for b in scene.bricks:
        if brick_ids is not None and b.id not in brick_ids:
            continue
        tf = scene.brick_world(b)
        cs.append(tf.translation)
        rs.append(tf.rotation)
        hs.append(np.array(b.size) / 2)
        ls.append(b.id)
    if distractors:
        for d in scene.distractors:
            cs.append([d.center[0], d.center[1], d.size[2] / 2])
            rs.append(rot_z(d.yaw))
            hs.append(np.array(d.size) / 2)
            ls.append(DISTRACTOR_LABEL)
    if not cs:
        return BoxSet(np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    return BoxSet(np.array(cs, float), np.array(rs, float), np.array(hs, float), np.array(ls, dtype=np.int64))


def cast_rays(origin, dirs: np.ndarray, boxes: BoxSet, ground: Plane | None = None,
              ground_region=None, max_range: float = np.inf):
    """First hit of each unit ray. Returns (t, normal, label); t = inf on miss.

    ``ground_region`` = (xmin, xmax, ymin, ymax) limits where the ground plane
    returns hits.
    """
    o = np.asarray(origin, dtype=float)
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_n = np.zeros((n, 3))
    best_l = np.full(n, np.iinfo(np.int64).min, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in range(len(boxes)):
            r = boxes.rotations[b]
            h = boxes.half[b]
            ol = r.T @ (o - boxes.centers[b])
            dl = dirs @ r
            inv = 1.0 / dl
            t1 = (-h - ol) * inv
            t2 = (h - ol) * inv
            tlo = np.minimum(t1, t2)
            thi = np.maximum(t1, t2)
            tlo = np.where(np.isnan(tlo), -np.inf, tlo)
            thi = np.where(np.isnan(thi), np.inf, thi)
            axis = np.argmax(tlo, axis=1)
            tmin = tlo[np.arange(n), axis]
            tmax = thi.min(axis=1)
            hit = (tmax >= tmin) & (tmin > 1e-9) & (tmin < best_t)
            if not hit.any():
                continue
            idx = np.flatnonzero(hit)
            ax = axis[idx]
            nl = np.zeros((len(idx), 3))
            nl[np.arange(len(idx)), ax] = -np.sign(dl[idx, ax])
            best_t[idx] = tmin[idx]
            best_n[idx] = nl @ r.T
            best_l[idx] = boxes.labels[b]
        if ground is not None:
            gn = ground.n
            denom = dirs @ gn
            tg = (ground.offset - o @ gn) / denom
            ok = (tg > 1e-9) & (tg < best_t)
            if ground_region is not None:
                p = o + tg[:, None] * dirs
                x0, x1, y0, y1 = ground_region
                ok &= (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)
            ok &= np.isfinite(tg)
            best_t[ok] = tg[ok]
            side = np.where(o @ gn - ground.offset >= 0, 1.0, -1.0)
            best_n[ok] = side * gn
            best_l[ok] = GROUND_LABEL
    best_t[best_t > max_range] = np.inf
    return best_t, best_n, best_l


def _sph_dirs(az: np.ndarray, el: np.ndarray) -> np.ndarray:
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def render_model_cloud(
    scene: Scene,
    sensor: RigidTransform,
    include_ground: bool = False,
    voxel: float = 0.02,
    brick_ids=None,
    ground_margin: float = 0.3,
    max_rays: int = 1_500_000,
) -> PointCloud:
    """Visible-surface samples of the scene's bricks seen from ``sensor``.

    Rays cover the angular window spanned by the bricks (and the surrounding
    ground patch when ``include_ground``) with a step fine enough for at least
    two samples per voxel at the farthest corner. Each point carries the id
    of the brick it hit (ground = -1) and the outward face normal.
    """
    boxes = scene_boxes(scene)
    if len(boxes) == 0:
        raise EmptyView("scene has no bricks")
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], float)
    corners = np.concatenate(
        [boxes.centers[b] + (signs * boxes.half[b]) @ boxes.rotations[b].T for b in range(len(boxes))]
    )
    region = None
    if include_ground:
        x0, y0 = corners[:, :2].min(axis=0) - ground_margin
        x1, y1 = corners[:, :2].max(axis=0) + ground_margin
        region = (x0, x1, y0, y1)
        gz = np.array([[x, y] for x in (x0, x1) for y in (y0, y1)])
        gpts = np.column_stack([gz, (scene.ground.offset - gz @ scene.ground.n[:2]) / scene.ground.n[2]])
        corners = np.vstack([corners, gpts])
    local = sensor.inverse().apply(corners)
    fwd = local.mean(axis=0)
    base_az = math.atan2(fwd[1], fwd[0])
    az = np.arctan2(local[:, 1], local[:, 0]) - base_az
    az = (az + np.pi) % (2 * np.pi) - np.pi
    el = np.arctan2(local[:, 2], np.hypot(local[:, 0], local[:, 1]))
    dist = np.linalg.norm(local, axis=1)
    step = 0.5 * voxel / max(dist.max(), 1e-6)
    pad = 2 * step
    a0, a1 = az.min() - pad, az.max() + pad
    e0, e1 = max(el.min() - pad, -np.pi / 2 + 1e-6), min(el.max() + pad, np.pi / 2 - 1e-6)
    na = int(np.ceil((a1 - a0) / step)) + 1
    ne = int(np.ceil((e1 - e0) / step)) + 1
    if na * ne > max_rays:
        scale = math.sqrt(na * ne / max_rays)
        na, ne = int(na / scale) + 1, int(ne / scale) + 1
    agrid, egrid = np.meshgrid(np.linspace(a0, a1, na) + base_az, np.linspace(e0, e1, ne), indexing="ij")
    dirs_l = _sph_dirs(agrid.ravel(), egrid.ravel())
    dirs = sensor.apply_dir(dirs_l)
    t, nrm, lab = cast_rays(sensor.translation, dirs, boxes,
                            scene.ground if include_ground else None, region)
    hit = np.isfinite(t)
    if brick_ids is not None:
        keep = np.isin(lab, list(brick_ids))
        if include_ground:
            keep |= lab == GROUND_LABEL
        hit &= keep
    if not hit.any():
        raise EmptyView("no ray hit the scene")
    pts = sensor.translation + t[hit, None] * dirs[hit]
    cloud = PointCloud(pts, nrm[hit], lab[hit])
    return voxel_downsample(cloud, voxel)


# ---------------------------------------------------------------- LiDAR


@dataclass(frozen=True)
class LidarModel:
    """Multi-ring spinning LiDAR moved along a trajectory of sensor poses.

    Sensor frame: X forward, Z along the spin axis.
    """

    trajectory: tuple[RigidTransform, ...] = (RigidTransform(),)
    rings: int = 16
    fov_up: float = math.radians(15.0)
    fov_down: float = math.radians(-15.0)
    azimuth_step: float = math.radians(0.2)
    azimuth_range: tuple[float, float] = (-math.pi, math.pi)
    sigma: float = 0.0
    max_range: float = 100.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.rings < 1:
            raise ValueError("rings must be >= 1")
        object.__setattr__(self, "trajectory", tuple(self.trajectory))

    def elevations(self) -> np.ndarray:
        if self.rings == 1:
            return np.array([0.5 * (self.fov_up + self.fov_down)])
        return np.linspace(self.fov_down, self.fov_up, self.rings)

    def azimuths(self) -> np.ndarray:
        a0, a1 = self.azimuth_range
        n = max(1, int(round((a1 - a0) / self.azimuth_step)))
        full = abs((a1 - a0) - 2 * math.pi) < 1e-9
        return a0 + self.azimuth_step * np.arange(n if full else n + 1)

    @property
    def viewpoint(self) -> np.ndarray:
        return np.mean([p.translation for p in self.trajectory], axis=0)


def sweep_trajectory(position, target, n_poses: int = 5, arc_length: float = 0.5,
                     ring_spacing: float = math.radians(2.0), tilt: float | None = None) -> tuple[RigidTransform, ...]:
    """Sensor poses along a horizontal arc, aimed at ``target``.

    The spin axis is tilted so the horizontal sweep plane points at the
    target; successive poses add a fraction of the ring spacing to the pitch
    so the rings interleave into a dense scan.
    """
    pos = np.asarray(position, dtype=float)
    tgt = np.asarray(target, dtype=float)
    d = tgt - pos
    yaw = math.atan2(d[1], d[0])
    pitch = -math.atan2(d[2], math.hypot(d[0], d[1])) if tilt is None else tilt
    side = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
    radius = math.hypot(d[0], d[1])
    poses = []
    for i in range(n_poses):
        f = (i / (n_poses - 1) - 0.5) if n_poses > 1 else 0.0
        ang = f * arc_length / max(radius, 1e-6)
        off = f * arc_length * side
        dp = (i - (n_poses - 1) / 2) * ring_spacing / max(n_poses, 1)
        r = RigidTransform.from_euler(0.0, pitch + dp, yaw + ang).rotation
        poses.append(RigidTransform(r, pos + off))
    return tuple(poses)


def simulate_lidar_scan(scene: Scene, model: LidarModel, seed: int = 0,
                        include_distractors: bool = True) -> PointCloud:
    """Union of ring scans from every trajectory pose, world frame, unlabeled."""
    rng = np.random.default_rng(seed)
    boxes = scene_boxes(scene, distractors=include_distractors)
    az = model.azimuths()
    el = model.elevations()
    agrid, egrid = np.meshgrid(az, el, indexing="ij")
    dirs_l = _sph_dirs(agrid.ravel(), egrid.ravel())
    chunks = []
    for pose in model.trajectory:
        dirs = pose.apply_dir(dirs_l)
        t, _, _ = cast_rays(pose.translation, dirs, boxes, scene.ground, None, model.max_range)
        noise = rng.standard_normal(len(t)) * model.sigma if model.sigma > 0 else np.zeros(len(t))
        hit = np.isfinite(t)
        r = t[hit] + noise[hit]
        chunks.append(pose.translation + r[:, None] * dirs[hit])
    pts = np.vstack(chunks) if chunks else np.zeros((0, 3))
    return PointCloud(pts)


def render_lidar_model_cloud(scene: Scene, model: LidarModel, voxel: float = 0.02,
                             include_ground: bool = False) -> PointCloud:
    """Noise-free model cloud sampled with the scanner's own ray pattern.

    Matches the scan's sampling density face by face, which point-to-point
    alignment needs. Points carry brick labels and face normals.
    """
    boxes = scene_boxes(scene)
    if len(boxes) == 0:
        raise EmptyView("scene has no bricks")
    az = model.azimuths()
    el = model.elevations()
    agrid, egrid = np.meshgrid(az, el, indexing="ij")
    dirs_l = _sph_dirs(agrid.ravel(), egrid.ravel())
    pts, nrm, lab = [], [], []
    for pose in model.trajectory:
        dirs = pose.apply_dir(dirs_l)
        t, n, l = cast_rays(pose.translation, dirs, boxes, scene.ground if include_ground else None,
                            None, model.max_range)
        hit = np.isfinite(t)
        pts.append(pose.translation + t[hit, None] * dirs[hit])
        nrm.append(n[hit])
        lab.append(l[hit])
    p = np.vstack(pts)
    if len(p) == 0:
        raise EmptyView("no ray hit the scene")
    return voxel_downsample(PointCloud(p, np.vstack(nrm), np.concatenate(lab)), voxel)


# ---------------------------------------------------------------- cameras


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. ``pose`` maps the optical frame (x right, y down,
    z forward) to world."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: RigidTransform = field(default_factory=RigidTransform)

    @classmethod
    def simple(cls, f: float, width: int, height: int, pose: RigidTransform | None = None) -> Camera:
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height, pose or RigidTransform())

    def with_pose(self, pose: RigidTransform) -> Camera:
        return Camera(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height, "pose": self.pose.to_json()}

    @classmethod
    def from_json(cls, d) -> Camera:
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), int(d["width"]),
                   int(d["height"]), RigidTransform.from_json(d["pose"]) if d.get("pose") else RigidTransform())

    def pixel_rays(self) -> np.ndarray:
        """World-frame unit ray per pixel, shape (H, W, 3)."""
        v, u = np.mgrid[0:self.height, 0:self.width].astype(float)
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ self.pose.rotation.T

    def pixel_to_ray(self, uv) -> np.ndarray:
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        d = np.column_stack([(uv[:, 0] - self.cx) / self.fx, (uv[:, 1] - self.cy) / self.fy, np.ones(len(uv))])
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d @ self.pose.rotation.T

    def project(self, pts_world) -> tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates (u, v) and depth z for world points."""
        pc = self.pose.inverse().apply(np.atleast_2d(pts_world))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = np.column_stack([self.fx * pc[:, 0] / z + self.cx, self.fy * pc[:, 1] / z + self.cy])
        return uv, z


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Optical-frame pose at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, float)
    z = np.asarray(target, float) - eye
    z /= np.linalg.norm(z)
    upv = np.asarray(up, float)
    x = np.cross(z, upv)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.cross(z, [0.0, 1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


def ground_hits(camera: Camera, ground: Plane) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ground intersection (H, W, 3) and validity mask."""
    rays = camera.pixel_rays()
    o = camera.pose.translation
    denom = rays @ ground.n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground.offset - o @ ground.n) / denom
    ok = np.isfinite(t) & (t > 0)
    pts = o + np.where(ok, t, 0.0)[..., None] * rays
    return pts, ok


def marker_pattern(marker: MarkerSpec, xy: np.ndarray) -> np.ndarray:
    """0 = outside, 1 = yellow, 2 = magenta for ground points (..., 2) in world."""
    inv = marker.pose.inverse()
    c, s = math.cos(inv.yaw), math.sin(inv.yaw)
    lx = inv.x + c * xy[..., 0] - s * xy[..., 1]
    ly = inv.y + s * xy[..., 0] + c * xy[..., 1]
    w = marker.leg_width
    leg1 = (lx >= 0) & (lx <= marker.long_leg) & (ly >= 0) & (ly <= w)
    leg2 = (lx >= 0) & (lx <= w) & (ly >= 0) & (ly <= marker.short_leg) & ~leg1
    sw = marker.stripe_width
    out = np.zeros(lx.shape, dtype=np.uint8)
    # clipped so far-horizon hits do not overflow the integer cast
    s1 = np.floor(np.clip(lx, -1e6, 1e6) / sw).astype(np.int64) % 2
    s2 = np.floor(np.clip(ly, -1e6, 1e6) / sw).astype(np.int64) % 2
    out[leg1] = np.where(s1[leg1] == 0, 1, 2)
    out[leg2] = np.where(s2[leg2] == 0, 1, 2)
    return out


def marker_corner_world(marker: MarkerSpec) -> np.ndarray:
    return np.array([marker.pose.x, marker.pose.y, 0.0])


def render_marker_labels(scene: Scene, camera: Camera) -> np.ndarray:
    """Per-pixel marker pattern code (0 outside, 1 yellow, 2 magenta)."""
    if scene.marker is None:
        raise MarkerNotVisible("scene has no marker")
    pts, ok = ground_hits(camera, scene.ground)
    lab = marker_pattern(scene.marker, pts[..., :2])
    lab[~ok] = 0
    return lab


def synth_marker_image(scene: Scene, camera: Camera) -> np.ndarray:
    """8-bit RGB image of the ground, distractor patches and the striped L marker."""
    if scene.marker is None:
        raise MarkerNotVisible("scene has no marker")
    pts, ok = ground_hits(camera, scene.ground)
    img = np.empty((camera.height, camera.width, 3), dtype=np.uint8)
    img[:] = SKY_RGB
    img[ok] = GROUND_RGB
    xy = pts[..., :2]
    for d in scene.distractors:
        c, s = math.cos(-d.yaw), math.sin(-d.yaw)
        dx, dy = xy[..., 0] - d.center[0], xy[..., 1] - d.center[1]
        lx, ly = c * dx - s * dy, s * dx + c * dy
        inside = ok & (np.abs(lx) <= d.size[0] / 2) & (np.abs(ly) <= d.size[1] / 2)
        img[inside] = d.color
    lab = marker_pattern(scene.marker, xy)
    lab[~ok] = 0
    if not lab.any():
        raise MarkerNotVisible("marker projects outside the image")
    img[lab == 1] = YELLOW
    img[lab == 2] = MAGENTA
    return img


def synth_thermal_image(scene: Scene, camera: Camera, ambient: float = 30.0) -> np.ndarray:
    """16-bit image in centi-degrees Celsius; each hot disk faces the camera."""
    img = np.full((camera.height, camera.width), int(round(ambient * 100)), dtype=np.uint16)
    if not scene.heat_sources:
        return img
    v, u = np.mgrid[0:camera.height, 0:camera.width].astype(float)
    order = sorted(scene.heat_sources, key=lambda h: -camera.project(h.position)[1][0])
    for h in order:
        uv, z = camera.project(h.position)
        if z[0] <= 0:
            continue
        r = camera.fx * h.radius / z[0]
        inside = (u - uv[0, 0]) ** 2 + (v - uv[0, 1]) ** 2 <= r * r
        img[inside] = min(65535, int(round(h.temperature * 100)))
    return img


# ---------------------------------------------------------------- generators


def pile_bricks(layout, frame: str = "pile", first_id: int = 0) -> list[Brick]:
    """Bricks from (type, x, y, yaw[, z]) tuples in the given frame."""
    out = []
    for i, row in enumerate(layout):
        t, x, y, yaw = row[:4]
        z = row[4] if len(row) > 4 else 0.0
        out.append(Brick(first_id + i, BrickType.parse(t), PlanarPose(x, y, yaw), frame, z))
    return out


def grid_pile(types, columns: int = 4, gap: float = 0.3, frame: str = "pile", first_id: int = 0) -> list[Brick]:
    """Bricks laid side by side in rows, long axis along pile X."""
    rows = [list(types[i:i + columns]) for i in range(0, len(types), columns)]
    col_w = max(BrickType.parse(t).length for t in types) + gap
    out = []
    n = first_id
    for r, row in enumerate(rows):
        for c, t in enumerate(row):
            out.append(Brick(n, BrickType.parse(t), PlanarPose(c * col_w, r * (BRICK_SECTION + gap), 0.0), frame))
            n += 1
    return out


def compact_pile(types, row_length: float = 3.6, gap: float = 0.4, frame: str = "pile",
                 first_id: int = 0) -> list[Brick]:
    """Bricks sorted longest first and packed into rows of at most ``row_length``."""
    ordered = sorted((BrickType.parse(t) for t in types), key=lambda t: (-t.length, t.value))
    rows: list[list[BrickType]] = []
    width = 0.0
    for t in ordered:
        if rows and rows[-1] and width + gap + t.length <= row_length + 1e-9:
            rows[-1].append(t)
            width += gap + t.length
        else:
            rows.append([t])
            width = t.length
    layout = []
    for r, row in enumerate(rows):
        x = 0.0
        for t in row:
            layout.append((t, x + t.length / 2, r * (BRICK_SECTION + gap), 0.0))
            x += t.length + gap
    return pile_bricks(layout, frame, first_id)


def perturb_bricks(bricks, rng: np.random.Generator, max_shift: float, max_yaw: float, ids=None) -> list[Brick]:
    out = []
    for b in bricks:
        if ids is not None and b.id not in ids:
            out.append(b)
            continue
        ang = rng.uniform(0, 2 * np.pi)
        r = max_shift * math.sqrt(rng.uniform(0, 1))
        dyaw = rng.uniform(-max_yaw, max_yaw)
        p = PlanarPose(b.pose.x + r * math.cos(ang), b.pose.y + r * math.sin(ang), b.pose.yaw + dyaw)
        out.append(b.moved(pose=p))
    return out
