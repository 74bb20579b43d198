"""Robot description, leg kinematics, spring models, and dynamics."""

from .robot import (
    LEG_NAMES,
    RobotModel,
    RobotModelError,
    SpringJointConfig,
    homing_joint_vector,
    homing_leg_angles,
    load_robot,
)
from .legs import (
    WorkspaceError,
    joint_limit_violation,
    leg_forward_kinematics,
    leg_inverse_kinematics,
    leg_jacobian,
)
from .springs import joint_spring_energy, joint_spring_torque, template_spring_force
from .template import (
    GRAVITY,
    TemplateState,
    integrate_template_flight,
    template_flight_dynamics,
    template_stance_dynamics,
    world_inertia,
)
from .floating_base import FloatingBaseDynamics, floating_base_dynamics

__all__ = [
    "LEG_NAMES",
    "RobotModel",
    "RobotModelError",
    "SpringJointConfig",
    "homing_joint_vector",
    "homing_leg_angles",
    "load_robot",
    "WorkspaceError",
    "joint_limit_violation",
    "leg_forward_kinematics",
    "leg_inverse_kinematics",
    "leg_jacobian",
    "joint_spring_energy",
    "joint_spring_torque",
    "template_spring_force",
    "GRAVITY",
    "TemplateState",
    "integrate_template_flight",
    "template_flight_dynamics",
    "template_stance_dynamics",
    "world_inertia",
    "FloatingBaseDynamics",
    "floating_base_dynamics",
]
