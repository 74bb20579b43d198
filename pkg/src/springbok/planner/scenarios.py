"""Default task construction for the supported motion kinds."""

from __future__ import annotations

import numpy as np

from ..model import RobotModel
from ..stiffness import fit_stiffness_polynomial, sample_workspace
from .schedule import ContactSchedule, TaskSpec, froggy_schedule, pronk_schedule
from .slip import StiffnessSource

MOTION_KINDS = ("pronk", "froggy", "hopturn", "vertical")


def make_stiffness_source(
    model: RobotModel,
    mode: str,
    rest_length: float = 0.32,
    constant_value: float = 1000.0,
    n_samples: int = 2048,
    seed: int = 0,
) -> StiffnessSource:
    """Stiffness source for the planner: rigid, constant, or fitted-varying."""
    rest = np.array([rest_length, rest_length])
    if mode == "rigid":
        return StiffnessSource(mode="rigid", rest_lengths=rest)
    if mode == "constant":
        return StiffnessSource(mode="constant",
                               constants=np.array([constant_value, constant_value]),
                               rest_lengths=rest)
    if mode == "varying":
        sets = sample_workspace(model, n_samples=n_samples, seed=seed)
        polys = (fit_stiffness_polynomial(sets[1]), fit_stiffness_polynomial(sets[2]))
        return StiffnessSource(mode="varying", polynomials=polys, rest_lengths=rest)
    raise ValueError(f"unknown stiffness mode {mode!r}")


def configure_robot_springs(
    model: RobotModel,
    mode: str,
    rest_length: float = 0.32,
    constant_value: float = 1000.0,
) -> RobotModel:
    """Robot with joint springs matching the planner's stiffness source.

    Rigid zeroes the springs. Constant scales the default joint springs so
    the homing-pose template constant equals ``constant_value``; varying
    keeps the default joint springs (the polynomial fit describes them).
    The spring rest angles follow the template rest length: rest leg length
    maps to the symmetric-bend joint angles at that leg extension.
    """
    from ..stiffness import homing_template_stiffness

    if mode == "rigid":
        return model.with_spring(model.spring.scaled(0.0))
    reach = model.thigh_length + model.calf_length
    q2 = np.arccos(np.clip(rest_length / reach, -1.0, 1.0))
    rest_angles = np.array([0.0, q2, -2.0 * q2])
    spring = model.spring
    if mode == "constant":
        base = homing_template_stiffness(model)[1]
        spring = spring.scaled(constant_value / base)
    spring = type(spring)(
        stiffness=spring.stiffness,
        rest_angles=rest_angles,
        unidirectional=spring.unidirectional,
        engagement_sign=spring.engagement_sign,
    )
    return model.with_spring(spring)


def make_task(
    motion: str,
    model: RobotModel,
    distance: float = 0.4,
    yaw_deg: float = 90.0,
    overrides: dict | None = None,
) -> tuple[TaskSpec, ContactSchedule]:
    """Waypoints and contact schedule for one motion kind.

    Waypoint numbers are scenario defaults (the peak reference in
    particular is a free input); override any TaskSpec field via
    ``overrides``.
    """
    if motion not in MOTION_KINDS:
        raise ValueError(f"unknown motion kind {motion!r}")
    z0 = model.homing_height
    if motion in ("pronk", "vertical"):
        d = 0.0 if motion == "vertical" else distance
        x_to = min(0.10, 0.25 * d)
        task = TaskSpec(
            initial_pose=[0, 0, z0, 0, 0, 0],
            initial_velocity=np.zeros(6),
            takeoff_pose=[x_to, 0, 0.365, 0, 0, 0],
            landing_pose=[d, 0, 0.34, 0, 0, 0],
            peak_pose=[0.5 * (x_to + d), 0, 0.46, 0, 0, 0],
            takeoff_height=0.365,
            reference_durations=np.array([0.5, 0.3]),
        )
        schedule = pronk_schedule()
    elif motion == "hopturn":
        yaw = np.deg2rad(yaw_deg)
        task = TaskSpec(
            initial_pose=[0, 0, z0, 0, 0, 0],
            initial_velocity=np.zeros(6),
            takeoff_pose=[0, 0, 0.365, 0, 0, 0.35 * yaw],
            landing_pose=[0, 0, 0.34, 0, 0, yaw],
            peak_pose=[0, 0, 0.46, 0, 0, 0.7 * yaw],
            takeoff_height=0.365,
            reference_durations=np.array([0.5, 0.3]),
        )
        schedule = pronk_schedule()
    else:  # froggy
        z0 = min(z0, 0.25)
        d = distance
        task = TaskSpec(
            initial_pose=[0, 0, z0, 0, 0, 0],
            initial_velocity=np.zeros(6),
            takeoff_pose=[0.02, 0, 0.33, 0, -0.5, 0],
            landing_pose=[d, 0, 0.30, 0, 0, 0],
            peak_pose=[0.5 * d, 0, 0.42, 0, -0.25, 0],
            takeoff_height=0.36,
            reference_durations=np.array([0.4, 0.2, 0.3]),
        )
        schedule = froggy_schedule()
    if overrides:
        for key, value in overrides.items():
            if not hasattr(task, key):
                raise ValueError(f"unknown TaskSpec field {key!r}")
            setattr(task, key, np.asarray(value, dtype=float)
                    if isinstance(getattr(task, key), np.ndarray) else value)
    return task, schedule
