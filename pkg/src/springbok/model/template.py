"""Dual-leg compliant template model of the trunk with rotation.

The trunk is a lumped mass with massless legs; each template leg carries a
unidirectional spring plus a free actuation force. Stance dynamics:

    m * acc   = F1 + F2 + m * g
    I * alpha = (p1 - c) x F1 + (p2 - c) x F2,   I = R Ib R^T

In flight the trunk is ballistic with zero angular acceleration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import quaternion as quat
from .springs import template_spring_force

GRAVITY = np.array([0.0, 0.0, -9.81])


def world_inertia(R: np.ndarray, body_inertia: np.ndarray) -> np.ndarray:
    """Body inertia tensor expressed in the world frame: R Ib R^T."""
    R = np.asarray(R, dtype=float)
    if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
        raise ValueError("R must be a proper rotation matrix")
    return R @ np.asarray(body_inertia, dtype=float) @ R.T


@dataclass
class TemplateState:
    """Reduced-order trunk state plus per-leg template spring parameters."""

    com_position: np.ndarray
    com_velocity: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    angular_velocity: np.ndarray  # body frame
    rest_lengths: np.ndarray = field(default_factory=lambda: np.array([0.32, 0.32]))
    stiffness: np.ndarray = field(default_factory=lambda: np.zeros(2))
    foot_positions: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))

    def __post_init__(self):
        self.orientation = np.asarray(self.orientation, dtype=float)
        n = np.linalg.norm(self.orientation)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n:.12f} deviates from 1 beyond 1e-9")

    def rotation(self) -> np.ndarray:
        return quat.to_rotation_matrix(self.orientation)

    def leg_vector(self, leg_index: int) -> np.ndarray:
        return self.com_position - self.foot_positions[leg_index]

    def spring_force(self, leg_index: int) -> np.ndarray:
        return template_spring_force(
            self.leg_vector(leg_index),
            self.rest_lengths[leg_index],
            self.stiffness[leg_index],
        )


def template_stance_dynamics(
    state: TemplateState,
    actuation_forces: np.ndarray,
    body_inertia: np.ndarray,
    total_mass: float,
    contact: tuple[bool, bool] = (True, True),
) -> tuple[np.ndarray, np.ndarray]:
    """(linear acceleration, angular acceleration) in stance.

    ``actuation_forces`` is (2, 3); forces of legs not in contact are ignored
    (their total force is zero).
    """
    I = world_inertia(state.rotation(), body_inertia)
    if np.linalg.cond(I) > 1e12:
        raise ValueError("singular world inertia")
    total_force = np.zeros(3)
    torque = np.zeros(3)
    for i in range(2):
        if not contact[i]:
            continue
        F = state.spring_force(i) + np.asarray(actuation_forces[i], dtype=float)
        total_force += F
        torque += np.cross(state.foot_positions[i] - state.com_position, F)
    lin_acc = total_force / total_mass + GRAVITY
    ang_acc = np.linalg.solve(I, torque)
    return lin_acc, ang_acc


def template_flight_dynamics(
    state: TemplateState,
) -> tuple[np.ndarray, np.ndarray]:
    """Ballistic trunk motion: (gravity, zero angular acceleration)."""
    return GRAVITY.copy(), np.zeros(3)


def integrate_template_flight(
    state: TemplateState, dt: float, steps: int
) -> TemplateState:
    """Propagate a flight arc; angular velocity stays constant per the model."""
    c = state.com_position.copy()
    v = state.com_velocity.copy()
    q = state.orientation.copy()
    w = state.angular_velocity.copy()
    for _ in range(steps):
        c = c + v * dt + 0.5 * GRAVITY * dt**2
        v = v + GRAVITY * dt
        q = quat.integrate(q, w, dt)
    return TemplateState(
        com_position=c,
        com_velocity=v,
        orientation=q,
        angular_velocity=w,
        rest_lengths=state.rest_lengths.copy(),
        stiffness=state.stiffness.copy(),
        foot_positions=state.foot_positions.copy(),
    )
