"""Unit-quaternion utilities shared by the planner, controller, and simulator.

Quaternions are stored as (w, x, y, z). Body-frame angular velocity is used
throughout, so the kinematic rule is dQ/dt = 0.5 * Q o (0, omega).
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / n


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def to_rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix mapping body-frame vectors to world frame."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return IDENTITY.copy()
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def exp_map(omega_dt: np.ndarray) -> np.ndarray:
    """Quaternion for a body-frame rotation vector (exact integration step)."""
    angle = np.linalg.norm(omega_dt)
    if angle < 1e-12:
        return normalize(np.concatenate([[1.0], 0.5 * omega_dt]))
    return from_axis_angle(omega_dt, angle)


def integrate(q: np.ndarray, omega_body: np.ndarray, dt: float) -> np.ndarray:
    """Exact single-step integration of dQ/dt = 0.5 * Q o omega."""
    return multiply(q, exp_map(np.asarray(omega_body) * dt))


def from_euler_zyx(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Quaternion from Z-Y-X (yaw-pitch-roll) Euler angles."""
    qz = from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    qy = from_axis_angle(np.array([0.0, 1.0, 0.0]), pitch)
    qx = from_axis_angle(np.array([1.0, 0.0, 0.0]), roll)
    return multiply(multiply(qz, qy), qx)


def to_euler_zyx(q: np.ndarray) -> np.ndarray:
    """(roll, pitch, yaw) for the Z-Y-X convention."""
    R = to_rotation_matrix(q)
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def omega_matrix(omega: np.ndarray) -> np.ndarray:
    """4x4 antisymmetric matrix so that dQ/dt = 0.5 * omega_matrix(w) @ Q.

    Standard body-frame quaternion kinematics; equals Q o (0, w) written as a
    linear map acting on Q.
    """
    wx, wy, wz = omega
    return np.array(
        [
            [0.0, -wx, -wy, -wz],
            [wx, 0.0, wz, -wy],
            [wy, -wz, 0.0, wx],
            [wz, wy, -wx, 0.0],
        ]
    )


def rate_matrix(q: np.ndarray) -> np.ndarray:
    """4x3 matrix T with dQ/dt = 0.5 * T(Q) @ omega_body.

    Columnwise rearrangement of omega_matrix(w) @ Q; both forms express
    Q o (0, w).
    """
    w, x, y, z = q
    return np.array(
        [
            [-x, -y, -z],
            [w, -z, y],
            [z, w, -x],
            [-y, x, w],
        ]
    )


def distance(q1: np.ndarray, q2: np.ndarray) -> float:
    """Sign-invariant Euclidean quaternion distance.

    min(||q1 - q2||, ||q1 + q2||), so the antipodal representations of the
    same rotation are at distance zero. Inputs must be unit quaternions.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    for q in (q1, q2):
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {np.linalg.norm(q):.9f} is not 1 within 1e-6")
    return float(min(np.linalg.norm(q1 - q2), np.linalg.norm(q1 + q2)))


def rotation_angle(q: np.ndarray) -> float:
    """Absolute rotation angle encoded by a unit quaternion, in [0, pi]."""
    return float(2.0 * np.arccos(np.clip(abs(q[0]), 0.0, 1.0)))
