"""Serial 3-DoF leg kinematics: hip roll, thigh pitch, calf pitch.

The leg plane hangs from the hip and is rolled about the body x-axis by the
hip joint. Thigh and calf rotate about the (rolled) y-axis; at zero angles
the leg points straight down, so the foot sits at hip_offset + (0, 0, -Lt-Lc).
"""

from __future__ import annotations

import numpy as np

from .robot import RobotModel


class WorkspaceError(ValueError):
    """Foot target outside the reachable annulus of the leg."""


def _roll_matrix(q1: float) -> np.ndarray:
    c, s = np.cos(q1), np.sin(q1)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def leg_forward_kinematics(
    model: RobotModel, q_leg: np.ndarray, leg: str
) -> np.ndarray:
    """Foot position in the body frame for one leg.

    Joint-limit violations are allowed here; callers that care check limits
    via ``joint_limit_violation``.
    """
    q1, q2, q3 = q_leg
    lt, lc = model.thigh_length, model.calf_length
    planar = np.array(
        [
            -lt * np.sin(q2) - lc * np.sin(q2 + q3),
            0.0,
            -(lt * np.cos(q2) + lc * np.cos(q2 + q3)),
        ]
    )
    return model.hip_offsets[leg] + _roll_matrix(q1) @ planar


def leg_jacobian(model: RobotModel, q_leg: np.ndarray, leg: str) -> np.ndarray:
    """3x3 Jacobian d(foot position)/d(q_leg) in the body frame.

    Singular configurations (straight leg) return a singular matrix.
    """
    q1, q2, q3 = q_leg
    lt, lc = model.thigh_length, model.calf_length
    s1, c1 = np.sin(q1), np.cos(q1)
    s2, c2 = np.sin(q2), np.cos(q2)
    s23, c23 = np.sin(q2 + q3), np.cos(q2 + q3)
    pz = -(lt * c2 + lc * c23)
    dpx = np.array([-lt * c2 - lc * c23, -lc * c23])
    dpz = np.array([lt * s2 + lc * s23, lc * s23])
    R = _roll_matrix(q1)
    J = np.zeros((3, 3))
    # hip roll spins the planar point (px, 0, pz) about the body x-axis
    J[:, 0] = np.array([0.0, -c1 * pz, -s1 * pz])
    for k in (1, 2):
        J[:, k] = R @ np.array([dpx[k - 1], 0.0, dpz[k - 1]])
    return J


def joint_limit_violation(model: RobotModel, q_leg: np.ndarray) -> np.ndarray:
    """Per-joint distance outside the limit box (0 inside)."""
    lo, hi = model.joint_limits_lower, model.joint_limits_upper
    return np.maximum(0.0, lo - q_leg) + np.maximum(0.0, q_leg - hi)


def leg_inverse_kinematics(
    model: RobotModel, foot_target: np.ndarray, leg: str
) -> np.ndarray:
    """Joint angles reaching a body-frame foot target.

    The knee-bend branch follows model.knee_backward for the leg. Raises
    WorkspaceError when the target lies outside the reachable annulus.
    """
    d = np.asarray(foot_target, dtype=float) - model.hip_offsets[leg]
    lt, lc = model.thigh_length, model.calf_length
    rho = np.linalg.norm(d)
    if rho > lt + lc + 1e-12 or rho < abs(lt - lc) - 1e-12:
        raise WorkspaceError(
            f"target at distance {rho:.4f} m outside reachable [{abs(lt - lc):.4f}, {lt + lc:.4f}]"
        )
    # hip roll aligns the leg plane with the target's y-z direction
    if abs(d[1]) < 1e-15 and abs(d[2]) < 1e-15:
        q1 = 0.0
    else:
        q1 = np.arctan2(d[1], -d[2])
    e = _roll_matrix(-q1) @ d  # now e[1] ~ 0
    ex, ez = e[0], e[2]
    cos_q3 = (rho**2 - lt**2 - lc**2) / (2.0 * lt * lc)
    cos_q3 = np.clip(cos_q3, -1.0, 1.0)
    knee_back = model.knee_backward.get(leg, True)
    q3 = -np.arccos(cos_q3) if knee_back else np.arccos(cos_q3)
    u = lt + lc * np.cos(q3)
    v = lc * np.sin(q3)
    q2 = np.arctan2(-ex, -ez) - np.arctan2(v, u)
    # wrap to (-pi, pi]
    q2 = np.arctan2(np.sin(q2), np.cos(q2))
    return np.array([q1, q2, q3])
