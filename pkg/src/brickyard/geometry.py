"""Planar poses and 3D rigid transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class PlanarPose:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @classmethod
    def identity(cls) -> PlanarPose:
        return cls(0.0, 0.0, 0.0)

    def compose(self, other: PlanarPose) -> PlanarPose:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return PlanarPose(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )

    def inverse(self) -> PlanarPose:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return PlanarPose(-c * self.x - s * self.y, s * self.x - c * self.y, -self.yaw)

    def apply(self, pt) -> tuple[float, float]:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return (self.x + c * pt[0] - s * pt[1], self.y + s * pt[0] + c * pt[1])

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.yaw]

    @classmethod
    def from_list(cls, v) -> PlanarPose:
        return cls(*v)


def compose(a: PlanarPose, b: PlanarPose) -> PlanarPose:
    return a.compose(b)


def inverse(p: PlanarPose) -> PlanarPose:
    return p.inverse()


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


class RigidTransform:
    """Rotation + translation, x_parent = R @ x_child + t. Immutable."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None):
        r = np.eye(3) if rotation is None else rotation
        t = np.zeros(3) if translation is None else translation
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def __reduce__(self):
        return (RigidTransform, (np.array(self.rotation), np.array(self.translation)))

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self):
        return f"RigidTransform(t={self.translation.round(4).tolist()}, yaw={self.yaw:.4f})"

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float = 0.0, yaw: float = 0.0) -> RigidTransform:
        return cls(rot_z(yaw), [x, y, z])

    @classmethod
    def from_planar(cls, pose: PlanarPose, z: float = 0.0) -> RigidTransform:
        return cls.from_xyz_yaw(pose.x, pose.y, z, pose.yaw)

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float, translation=(0, 0, 0)) -> RigidTransform:
        r = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
        return cls(r, translation)

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: RigidTransform) -> RigidTransform:
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    __matmul__ = compose

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + self.translation

    def apply_dir(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def planar(self) -> PlanarPose:
        return PlanarPose(self.translation[0], self.translation[1], self.yaw)

    def quaternion(self) -> list[float]:
        """(x, y, z, w) order."""
        return Rotation.from_matrix(self.rotation).as_quat().tolist()

    def to_json(self) -> dict:
        return {"origin": self.translation.tolist(), "quaternion": self.quaternion()}

    @classmethod
    def from_json(cls, d) -> RigidTransform:
        if "matrix" in d:
            return cls.from_matrix(d["matrix"])
        r = Rotation.from_quat(d["quaternion"]).as_matrix()
        return cls(r, d["origin"])

    def is_orthonormal(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        return bool(
            np.abs(r.T @ r - np.eye(3)).max() <= tol and abs(np.linalg.det(r) - 1.0) <= tol
        )


def rotation_angle(r: np.ndarray) -> float:
    """Angle of a rotation matrix in radians."""
    c = (np.trace(r) - 1.0) / 2.0
    return float(math.acos(max(-1.0, min(1.0, c))))


def pose_error(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(translation distance, rotation angle) between two transforms."""
    dt = float(np.linalg.norm(a.translation - b.translation))
    return dt, rotation_angle(a.rotation.T @ b.rotation)
