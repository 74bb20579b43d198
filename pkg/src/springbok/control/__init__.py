"""Motion tracking: quaternion MPC plus whole-body compliance QP."""

from .mpc import (
    MpcConfig,
    MpcSolution,
    QuaternionMpc,
    SrbState,
    discretize,
    feedforward_torque,
    input_matrix,
    linearize,
    momentum_l2,
    srb_continuous_dynamics,
)
from .wbc import (
    LandingReset,
    WbcConfig,
    WbcSolution,
    build_wbc_qp,
    hybrid_torque,
    solve_wbc,
    spring_generalized_torque,
)

__all__ = [
    "MpcConfig",
    "MpcSolution",
    "QuaternionMpc",
    "SrbState",
    "discretize",
    "feedforward_torque",
    "input_matrix",
    "linearize",
    "momentum_l2",
    "srb_continuous_dynamics",
    "LandingReset",
    "WbcConfig",
    "WbcSolution",
    "build_wbc_qp",
    "hybrid_torque",
    "solve_wbc",
    "spring_generalized_torque",
]
