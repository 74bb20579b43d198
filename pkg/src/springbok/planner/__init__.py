"""Dual-layer trajectory optimization: coarse template layer, kinodynamic refinement."""

from .schedule import ContactSchedule, Phase, TaskSpec, froggy_schedule, pronk_schedule
from .scenarios import (
    MOTION_KINDS,
    configure_robot_springs,
    make_stiffness_source,
    make_task,
)
from .slip import (
    GimbalLockError,
    StiffnessSource,
    audit_coarse,
    build_slip_nlp,
    euler_rate_transform,
    solve_slip,
)
from .trajectory import CoarseTrajectory, PlannedTrajectory, read_planned_csv

__all__ = [
    "ContactSchedule",
    "Phase",
    "TaskSpec",
    "froggy_schedule",
    "pronk_schedule",
    "MOTION_KINDS",
    "configure_robot_springs",
    "make_stiffness_source",
    "make_task",
    "GimbalLockError",
    "StiffnessSource",
    "audit_coarse",
    "build_slip_nlp",
    "euler_rate_transform",
    "solve_slip",
    "CoarseTrajectory",
    "PlannedTrajectory",
    "read_planned_csv",
]
