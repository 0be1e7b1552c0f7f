"""Residual factories with analytic Jacobians.

Rigid deltas act in the world frame about a fixed pivot ``c``:
``p -> R (p - c) + c + t``. The 6-DoF delta uses Z-Y-X Euler angles
``x = [roll, pitch, yaw, tx, ty, tz]``; per-brick deltas use yaw about the
vertical axis plus a translation split into horizontal and vertical blocks.
"""

from __future__ import annotations

import math

import numpy as np


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], float)


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], float)


def rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], float)


def _drx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[0, 0, 0], [0, -s, -c], [0, c, -s]], float)


def _dry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, 0, c], [0, 0, 0], [-c, 0, -s]], float)


def drz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, -c, 0], [c, -s, 0], [0, 0, 0]], float)


def euler_rotation(x) -> np.ndarray:
    return rz(x[2]) @ _ry(x[1]) @ _rx(x[0])


def euler_rotation_derivs(x) -> list[np.ndarray]:
    """dR/droll, dR/dpitch, dR/dyaw."""
    a, b, g = x[0], x[1], x[2]
    rxa, ryb, rzg = _rx(a), _ry(b), rz(g)
    return [rzg @ ryb @ _drx(a), rzg @ _dry(b) @ rxa, drz(g) @ ryb @ rxa]


def apply_delta6(x, pts, pivot) -> np.ndarray:
    return (pts - pivot) @ euler_rotation(x).T + pivot + np.asarray(x[3:6])


# ---------------------------------------------------------------- 6-DoF terms


def point_to_plane_6dof(p, q, nq, pivot, weight=1.0):
    """r_i = w (G(x) p_i - q_i) . n_i"""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    nq = np.asarray(nq, float)
    pc = p - pivot
    sw = np.sqrt(np.broadcast_to(np.asarray(weight, float), (len(p),)))

    def fn(x):
        g = pc @ euler_rotation(x).T + pivot + x[3:6]
        return sw * np.einsum("ij,ij->i", g - q, nq)

    def jac(x):
        cols = [sw * np.einsum("ij,ij->i", pc @ d.T, nq) for d in euler_rotation_derivs(x)]
        return [np.column_stack(cols + [sw * nq[:, 0], sw * nq[:, 1], sw * nq[:, 2]])]

    return fn, jac


def point_to_point_6dof(p, q, pivot, weight=1.0):
    """r = w (G(x) p_i - q_i), 3 entries per pair, flattened row-major."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    pc = p - pivot
    sw = np.sqrt(np.broadcast_to(np.asarray(weight, float), (len(p),)))

    def fn(x):
        g = pc @ euler_rotation(x).T + pivot + x[3:6]
        return (sw[:, None] * (g - q)).reshape(-1)

    def jac(x):
        m = len(p)
        out = np.zeros((m, 3, 6))
        for k, d in enumerate(euler_rotation_derivs(x)):
            out[:, :, k] = sw[:, None] * (pc @ d.T)
        for k in range(3):
            out[:, k, 3 + k] = sw
        return [out.reshape(3 * m, 6)]

    return fn, jac


def direction_residual(axis_init, line_dir, weight=1.0):
    """sqrt(w) (1 - proj(R(x) a) . l) with proj = ground-plane projection,
    renormalized. Squared, this is the marker-direction cost."""
    a = np.asarray(axis_init, float)
    ln = np.asarray(line_dir, float)[:2]
    ln = ln / np.linalg.norm(ln)
    sw = math.sqrt(weight)

    def fn(x):
        e = euler_rotation(x) @ a
        u = e[:2]
        s = np.linalg.norm(u)
        return np.array([sw * (1.0 - (u @ ln) / s)])

    def jac(x):
        e = euler_rotation(x) @ a
        u = e[:2]
        s = np.linalg.norm(u)
        dfdu = ln / s - (u @ ln) * u / s**3
        row = [-sw * dfdu @ (d @ a)[:2] for d in euler_rotation_derivs(x)]
        return [np.array([row + [0.0, 0.0, 0.0]])]

    return fn, jac


def direction_cost(rotation, line_dir) -> float:
    """(1 - (R e_x)_proj . l)^2 for a full rotation matrix."""
    fn, _ = direction_residual(np.asarray(rotation)[:, 0], line_dir)
    return float(fn(np.zeros(6))[0] ** 2)


# ---------------------------------------------------------------- brick terms


def brick_delta(yaw, txy, tz, center) -> tuple[np.ndarray, np.ndarray]:
    """(R, tau) of the world-frame delta p -> R (p - c) + c + t."""
    r = rz(yaw)
    t = np.array([txy[0], txy[1], tz[0]])
    return r, center + t - r @ center


def brick_point_to_plane(p, q, nq, center, weight):
    """Data term of one brick, blocks (yaw[1], txy[2], tz[1])."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    nq = np.asarray(nq, float)
    pc = p - center
    sw = math.sqrt(weight)

    def fn(yaw, txy, tz):
        g = pc @ rz(yaw[0]).T + center
        g[:, 0] += txy[0]
        g[:, 1] += txy[1]
        g[:, 2] += tz[0]
        return sw * np.einsum("ij,ij->i", g - q, nq)

    def jac(yaw, txy, tz):
        dy = sw * np.einsum("ij,ij->i", pc @ drz(yaw[0]).T, nq)
        return [dy[:, None], sw * nq[:, :2], sw * nq[:, 2:3]]

    return fn, jac


def pairwise_terms(pose_i, pose_j, center_i, center_j, lam_r, lam_t):
    """Rotation and translation rigidity residuals for a contact edge.

    ``pose_*`` are the initial 4x4 world transforms of the two bricks. The
    residuals measure the change of brick j's pose relative to brick i,
    ``E = P_i^-1 D_i^-1 D_j P_i``; both vanish when the deltas agree.
    Blocks: (yaw_i, txy_i, tz_i, yaw_j, txy_j, tz_j).
    Returns ((fn_R, jac_R), (fn_T, jac_T)).
    """
    ri = np.asarray(pose_i, float)[:3, :3]
    ti = np.asarray(pose_i, float)[:3, 3]
    ci = np.asarray(center_i, float)
    cj = np.asarray(center_j, float)
    sr = math.sqrt(lam_r)
    st = math.sqrt(lam_t)

    def _rel(yi, txyi, tzi, yj, txyj, tzj):
        _, taui = brick_delta(yi[0], txyi, tzi, ci)
        _, tauj = brick_delta(yj[0], txyj, tzj, cj)
        phi = yj[0] - yi[0]
        kr = rz(phi)
        kt = rz(-yi[0]) @ (tauj - taui)
        return phi, kr, kt, taui, tauj

    def fn_r(yi, txyi, tzi, yj, txyj, tzj):
        phi = yj[0] - yi[0]
        return sr * (ri.T @ (rz(phi) - np.eye(3)) @ ri).reshape(-1)

    def jac_r(yi, txyi, tzi, yj, txyj, tzj):
        phi = yj[0] - yi[0]
        d = sr * (ri.T @ drz(phi) @ ri).reshape(-1, 1)
        z2 = np.zeros((9, 2))
        z1 = np.zeros((9, 1))
        return [-d, z2, z1, d, z2, z1]

    def fn_t(yi, txyi, tzi, yj, txyj, tzj):
        _, kr, kt, _, _ = _rel(yi, txyi, tzi, yj, txyj, tzj)
        return st * (ri.T @ (kr @ ti + kt - ti))

    def jac_t(yi, txyi, tzi, yj, txyj, tzj):
        phi, kr, kt, taui, tauj = _rel(yi, txyi, tzi, yj, txyj, tzj)
        rmi = rz(-yi[0])
        dkt_dyj = rmi @ (-drz(yj[0]) @ cj)
        dkt_dyi = -drz(-yi[0]) @ (tauj - taui) + rmi @ (drz(yi[0]) @ ci)
        d_yj = ri.T @ (drz(phi) @ ti + dkt_dyj)
        d_yi = ri.T @ (-drz(phi) @ ti + dkt_dyi)
        d_tj = ri.T @ rmi
        return [
            st * d_yi[:, None], -st * d_tj[:, :2], -st * d_tj[:, 2:3],
            st * d_yj[:, None], st * d_tj[:, :2], st * d_tj[:, 2:3],
        ]

    return (fn_r, jac_r), (fn_t, jac_t)


def ground_contact(normal, lam_t):
    """Sliding contact with the ground: only the delta's displacement along
    the ground normal is penalized. Blocks (txy[2], tz[1])."""
    n = np.asarray(normal, float)
    st = math.sqrt(lam_t)

    def fn(txy, tz):
        return np.array([st * (n[0] * txy[0] + n[1] * txy[1] + n[2] * tz[0])])

    def jac(txy, tz):
        return [st * n[None, :2], st * n[None, 2:3]]

    return fn, jac
