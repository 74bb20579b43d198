"""Unidirectional spring models: template leg springs and joint springs.

Both engage only on the compression side of rest and are force/torque
continuous at the rest point.
"""

from __future__ import annotations

import numpy as np

from .robot import LEG_NAMES, RobotModel, SpringJointConfig


def template_spring_force(
    leg_vector: np.ndarray, rest_length: float, stiffness: float
) -> np.ndarray:
    """Spring force on the body along the leg, zero beyond the rest length.

    ``leg_vector`` points from the foot to the CoM; compression pushes the
    body away from the foot.
    """
    leg_vector = np.asarray(leg_vector, dtype=float)
    norm = np.linalg.norm(leg_vector)
    if norm < 1e-12:
        raise ValueError("zero-length leg vector has no direction")
    compression = max(rest_length - norm, 0.0)
    return stiffness * compression * leg_vector / norm


def joint_spring_torque(
    model: RobotModel, q: np.ndarray, spring: SpringJointConfig | None = None
) -> np.ndarray:
    """Torque applied by the parallel joint springs for all 12 joints.

    Each spring acts per joint: -k * (q - rest) on its engagement side
    (leg-compression deflections), zero otherwise.
    """
    spring = model.spring if spring is None else spring
    q = np.asarray(q, dtype=float).reshape(len(LEG_NAMES), 3)
    tau = np.zeros_like(q)
    for i in range(len(LEG_NAMES)):
        defl = q[i] - spring.rest_angles
        engaged = np.where(
            spring.unidirectional, spring.engagement_sign * defl > 0.0, True
        )
        tau[i] = np.where(engaged, -spring.stiffness * defl, 0.0)
    return tau.reshape(-1)


def joint_spring_energy(
    model: RobotModel, q: np.ndarray, spring: SpringJointConfig | None = None
) -> float:
    """Elastic potential energy stored in all engaged joint springs."""
    spring = model.spring if spring is None else spring
    q = np.asarray(q, dtype=float).reshape(len(LEG_NAMES), 3)
    total = 0.0
    for i in range(len(LEG_NAMES)):
        defl = q[i] - spring.rest_angles
        engaged = np.where(
            spring.unidirectional, spring.engagement_sign * defl > 0.0, True
        )
        total += 0.5 * np.sum(np.where(engaged, spring.stiffness * defl**2, 0.0))
    return float(total)
