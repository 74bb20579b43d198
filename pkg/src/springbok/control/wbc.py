"""Whole-body compliance controller.

A small strictly convex QP refines the MPC forces and the planned base
acceleration under the full floating-base dynamics with the parallel-spring
torque compensated explicitly. Decision variables are the GRF deviation
(3 per stance leg) and the base-acceleration deviation (6); the joint-torque
deviation is eliminated by substituting the joint rows of the dynamics into
the cost, keeping the QP small enough for a 1 kHz budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import FloatingBaseDynamics, RobotModel, joint_spring_torque
from ..optbackend import QpProblem, solve_qp

NV = 18


@dataclass
class WbcConfig:
    w_force: float = 1.0
    w_base_acc: float = 10.0
    w_torque: float = 0.05
    cbf_gain: float = 20.0  # lambda > 0
    min_base_height: float = 0.12
    cbf_dt: float = 0.001  # horizon over which delta_b acts on hdot
    friction: float = 0.6
    f_z_max: float = 250.0
    kp: np.ndarray = field(default_factory=lambda: np.full(12, 150.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(12, 3.0))

    def __post_init__(self):
        if self.cbf_gain <= 0:
            raise ValueError("CBF gain must be positive")
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)


@dataclass
class WbcSolution:
    grf: np.ndarray  # (3*nc,) refined stance-leg forces
    base_acc_correction: np.ndarray  # (6,)
    joint_torques: np.ndarray  # (12,)
    force_deviation: np.ndarray
    torque_deviation: np.ndarray
    status: str
    degraded: bool
    dynamics_residual: float = np.nan
    cbf_residual: float = np.nan
    contact_legs: list = field(default_factory=list)


def build_wbc_qp(
    M: np.ndarray,
    bias: np.ndarray,  # B + G
    spring_gen: np.ndarray,  # generalized applied spring torque (18,)
    J_c: np.ndarray,  # (3*nc, 18)
    qdd_cmd: np.ndarray,  # (18,)
    f_mpc: np.ndarray,  # (3*nc,)
    tau_mpc: np.ndarray,  # (12,)
    model: RobotModel,
    config: WbcConfig,
    base_height: float,
    base_height_rate: float,
) -> tuple[QpProblem, dict]:
    """QP in (delta_f, delta_b) plus the affine maps needed for recovery."""
    nc3 = J_c.shape[0]
    nv = nc3 + 6
    K = -spring_gen  # dynamics convention: M qdd + B + G + K = S^T tau + Jc^T f

    Sb = np.zeros((NV, 6))
    Sb[0:6, 0:6] = np.eye(6)
    base = M @ qdd_cmd + bias + K

    # tau_j(delta) = joint rows of (M qdd + B + G + K - Jc^T f_r)
    JcT = J_c.T
    tau0 = base[6:] - (JcT @ f_mpc)[6:] if nc3 else base[6:]
    G_f = -JcT[6:, :] if nc3 else np.zeros((12, 0))
    G_b = (M @ Sb)[6:, :]

    # cost: |df|_W1 + |db|_W2 + |tau_j - tau_mpc|_W3, tau_j affine in (df, db)
    W1 = config.w_force * np.eye(nc3)
    W2 = config.w_base_acc * np.eye(6)
    W3 = config.w_torque * np.eye(12)
    Gmat = np.hstack([G_f, G_b])  # (12, nv)
    r = tau0 - tau_mpc
    H = 2.0 * (np.block([
        [W1, np.zeros((nc3, 6))],
        [np.zeros((6, nc3)), W2],
    ]) + Gmat.T @ W3 @ Gmat)
    g = 2.0 * (Gmat.T @ W3 @ r)

    # floating-base equality rows
    A_eq = np.hstack([-JcT[0:6, :], (M @ Sb)[0:6, :]]) if nc3 else (M @ Sb)[0:6, :]
    b_eq = -(base[0:6] - (JcT[0:6] @ f_mpc if nc3 else 0.0))

    A_in = []
    b_in = []
    mu = config.friction
    for i in range(nc3 // 3):
        for rvec, b0 in (
            ([-1.0, 0.0, mu], 0.0), ([1.0, 0.0, mu], 0.0),
            ([0.0, -1.0, mu], 0.0), ([0.0, 1.0, mu], 0.0),
            ([0.0, 0.0, 1.0], 0.0), ([0.0, 0.0, -1.0], -config.f_z_max),
        ):
            row = np.zeros(nv)
            row[3 * i:3 * i + 3] = rvec
            A_in.append(row)
            b_in.append(b0 - np.dot(rvec, f_mpc[3 * i:3 * i + 3]))
    # torque box on tau_j = tau0 + Gmat @ delta
    lim = np.tile(model.torque_limits, 4)
    for j in range(12):
        A_in.append(Gmat[j])
        b_in.append(-lim[j] - tau0[j])
        A_in.append(-Gmat[j])
        b_in.append(tau0[j] - lim[j])
    # exponential CBF on base height: hdot(delta_b) + lambda * h >= 0
    h = base_height - config.min_base_height
    hdot0 = base_height_rate + qdd_cmd[2] * config.cbf_dt
    row = np.zeros(nv)
    row[nc3 + 2] = config.cbf_dt
    A_in.append(row)
    b_in.append(-(hdot0 + config.cbf_gain * h))

    problem = QpProblem(H=H, g=g, A_eq=A_eq if np.ndim(A_eq) == 2 else A_eq,
                        b_eq=b_eq, A_in=np.array(A_in), b_in=np.array(b_in))
    aux = {"tau0": tau0, "Gmat": Gmat, "nc3": nc3, "cbf_h": h,
           "cbf_hdot0": hdot0, "cbf_row": row,
           "base": base, "JcT": JcT, "f_mpc": f_mpc}
    return problem, aux


def solve_wbc(
    M, bias, spring_gen, J_c, qdd_cmd, f_mpc, tau_mpc, model,
    config: WbcConfig, base_height: float, base_height_rate: float,
    contact_legs: list | None = None,
) -> WbcSolution:
    problem, aux = build_wbc_qp(
        M, bias, spring_gen, J_c, qdd_cmd, f_mpc, tau_mpc, model, config,
        base_height, base_height_rate)
    qp = solve_qp(problem)
    nc3 = aux["nc3"]
    if not qp.ok:
        lim = np.tile(model.torque_limits, 4)
        return WbcSolution(
            grf=np.asarray(f_mpc, dtype=float).copy(),
            base_acc_correction=np.zeros(6),
            joint_torques=np.clip(tau_mpc, -lim, lim),
            force_deviation=np.zeros(nc3),
            torque_deviation=np.zeros(12),
            status=qp.status, degraded=True,
            contact_legs=list(contact_legs or []))
    delta = qp.x
    df = delta[:nc3]
    db = delta[nc3:]
    tau_j = aux["tau0"] + aux["Gmat"] @ delta
    f_r = f_mpc + df
    # residual of the floating-base rows at the solution
    res = (M @ np.concatenate([db, np.zeros(12)]) + aux["base"]
           - (aux["JcT"] @ f_r if nc3 else 0.0))[0:6]
    cbf_res = aux["cbf_hdot0"] + aux["cbf_row"][nc3 + 2] * db[2] \
        + config.cbf_gain * aux["cbf_h"]
    return WbcSolution(
        grf=f_r, base_acc_correction=db, joint_torques=tau_j,
        force_deviation=df, torque_deviation=tau_j - tau_mpc,
        status="optimal", degraded=False,
        dynamics_residual=float(np.abs(res).max()),
        cbf_residual=float(cbf_res),
        contact_legs=list(contact_legs or []))


def hybrid_torque(
    tau_j: np.ndarray,
    q_cmd: np.ndarray,
    qd_cmd: np.ndarray,
    q: np.ndarray,
    qd: np.ndarray,
    model: RobotModel,
    config: WbcConfig,
) -> np.ndarray:
    """Feedforward plus joint PD, clamped to the torque limits."""
    tau = (np.asarray(tau_j, dtype=float)
           + config.kp * (np.asarray(q_cmd) - np.asarray(q))
           + config.kd * (np.asarray(qd_cmd) - np.asarray(qd)))
    lim = np.tile(model.torque_limits, 4)
    return np.clip(tau, -lim, lim)


@dataclass
class LandingReset:
    """Post-touchdown reference stream.

    On touchdown the horizontal CoM reference snaps to the estimated landing
    position, the height reference becomes homing height plus the estimated
    foot landing height, the velocity reference is zeroed, and the measured
    body inclination decays exponentially to upright.
    """

    touchdown_time: float
    landing_com: np.ndarray  # measured CoM at touchdown
    foot_landing_height: float
    homing_height: float
    measured_inclination: np.ndarray  # (roll, pitch) at touchdown
    yaw_reference: float = 0.0
    time_constant: float = 0.15

    def reference(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(com_ref, com_vel_ref, euler_ref) at time t >= touchdown."""
        com = np.array([
            self.landing_com[0], self.landing_com[1],
            self.homing_height + self.foot_landing_height])
        vel = np.zeros(3)
        decay = np.exp(-(t - self.touchdown_time) / self.time_constant)
        euler = np.array([
            self.measured_inclination[0] * decay,
            self.measured_inclination[1] * decay,
            self.yaw_reference])
        return com, vel, euler


def spring_generalized_torque(model: RobotModel, q_joints: np.ndarray) -> np.ndarray:
    """Applied parallel-spring torque lifted to the 18-DoF generalized space."""
    out = np.zeros(NV)
    out[6:] = joint_spring_torque(model, q_joints)
    return out
