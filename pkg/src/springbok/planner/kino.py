"""Second-layer kinodynamic refinement with quaternion rotation states.

Takes the coarse template trajectory, adds joint variables (one
representative leg per template pair), switches the rotation state to a
unit quaternion, pins stance feet, and enforces torque limits. The
quaternion transition uses the normalized first-order step

    Q[k+1] * ||v_k|| = v_k,   v_k = Q[k] + 0.5 * (Q[k] o omega_k) * dt_k,

which realizes the Taylor step plus per-knot renormalization as one smooth
equality; combined with the pinned initial quaternion it keeps every knot
on the unit sphere to solver precision without duplicate norm rows.
"""

from __future__ import annotations

import numpy as np

import jax
import jax.numpy as jnp

from ..model import GRAVITY, RobotModel, homing_leg_angles, leg_inverse_kinematics
from .. import quaternion as quat
from ..optbackend import IpmOptions, NlpProblem, VariableLayout, solve_nlp
from ..stiffness import template_foot_positions
from .schedule import ContactSchedule, TaskSpec
from .slip import StiffnessSource, _leg_stiffness
from .trajectory import CoarseTrajectory, PlannedTrajectory

_MARGIN_FORCE = 1e-6
_MARGIN_ACC = 1e-6
_MARGIN_TORQUE = 1e-6

_KERNEL_CACHE: dict = {}


# -- quaternion machinery (spec-level operations) -------------------------------

def quaternion_omega_matrix(omega: np.ndarray) -> np.ndarray:
    """4x4 antisymmetric matrix with dQ/dt = 0.5 * Omega(w) @ Q."""
    return quat.omega_matrix(np.asarray(omega, dtype=float))


def quaternion_distance(q1: np.ndarray, q2: np.ndarray) -> float:
    """Double-cover-safe Euclidean distance (see quaternion.distance)."""
    return quat.distance(q1, q2)


def propagate_quaternion_reference(coarse: CoarseTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """(N,4) reference quaternions and (N,3) reference angular velocities.

    First-order propagation of the coarse body rates with renormalization
    after every step, using the solved coarse step sizes.
    """
    N = coarse.n_knots
    omega = coarse.velocities[:, 3:6]
    dt = coarse.knot_dt()
    Q = np.zeros((N, 4))
    Q[0] = quat.from_euler_zyx(*coarse.poses[0, 3:6])
    for k in range(1, N):
        w = omega[k - 1]
        step = Q[k - 1] + 0.5 * quat.omega_matrix(w) @ Q[k - 1] * dt[k - 1]
        Q[k] = step / np.linalg.norm(step)
    return Q, omega.copy()


# -- jax helpers ------------------------------------------------------------------

def _rot_from_quat(Q):
    """(..., 3, 3) rotation matrices from (..., 4) quaternions (body->world)."""
    w, x, y, z = Q[..., 0], Q[..., 1], Q[..., 2], Q[..., 3]
    rows = [
        jnp.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        jnp.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        jnp.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ]
    return jnp.stack(rows, -2)


def _quat_mul_omega(Q, w):
    """(..., 4) quaternion product Q o (0, w) for (..., 3) rates."""
    qw, qx, qy, qz = Q[..., 0], Q[..., 1], Q[..., 2], Q[..., 3]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    return jnp.stack([
        -qx * wx - qy * wy - qz * wz,
        qw * wx + qy * wz - qz * wy,
        qw * wy + qz * wx - qx * wz,
        qw * wz + qx * wy - qy * wx,
    ], -1)


def _leg_fk_local(qleg, lt, lc):
    """Foot position relative to the hip for (..., 3) joint angles."""
    q1, q2, q3 = qleg[..., 0], qleg[..., 1], qleg[..., 2]
    px = -lt * jnp.sin(q2) - lc * jnp.sin(q2 + q3)
    pz = -(lt * jnp.cos(q2) + lc * jnp.cos(q2 + q3))
    return jnp.stack([px, -jnp.sin(q1) * pz, jnp.cos(q1) * pz], -1)


def _leg_jacobian_cols(qleg, lt, lc):
    """(..., 3, 3) body-frame leg Jacobian, matching model.legs.leg_jacobian."""
    q1, q2, q3 = qleg[..., 0], qleg[..., 1], qleg[..., 2]
    s1, c1 = jnp.sin(q1), jnp.cos(q1)
    s2, c2 = jnp.sin(q2), jnp.cos(q2)
    s23, c23 = jnp.sin(q2 + q3), jnp.cos(q2 + q3)
    pz = -(lt * c2 + lc * c23)
    zero = jnp.zeros_like(q1)
    col0 = jnp.stack([zero, -c1 * pz, -s1 * pz], -1)
    dpx1, dpz1 = -lt * c2 - lc * c23, lt * s2 + lc * s23
    dpx2, dpz2 = -lc * c23, lc * s23
    col1 = jnp.stack([dpx1, -s1 * dpz1, c1 * dpz1], -1)
    col2 = jnp.stack([dpx2, -s1 * dpz2, c1 * dpz2], -1)
    return jnp.stack([col0, col1, col2], -1)


def _schedule_signature(schedule: ContactSchedule, mode: str) -> tuple:
    return (tuple((p.kind, p.knots) for p in schedule.phases), mode, "kino")


def _get_kernels(schedule: ContactSchedule, mode: str):
    sig = _schedule_signature(schedule, mode)
    if sig in _KERNEL_CACHE:
        return _KERNEL_CACHE[sig]

    N = schedule.total_knots
    contact = schedule.contact_flags()
    phase_idx = schedule.phase_of_knot()
    c1_knots = np.where(contact[:, 0])[0]
    c2_knots = np.where(contact[:, 1])[0]
    stance_knots = np.where(contact.any(axis=1))[0]
    flight_knots = schedule.flight_knots
    k_takeoff = schedule.last_contact_knot
    k_peak = schedule.peak_knot
    n1, n2 = len(c1_knots), len(c2_knots)
    # reach also holds at the takeoff instant (see the layer-1 note)
    reach1_knots, reach2_knots = c1_knots, c2_knots
    if len(flight_knots):
        k0 = flight_knots[0]
        if contact[k0 - 1, 0]:
            reach1_knots = np.concatenate([c1_knots, [k0]])
        if contact[k0 - 1, 1]:
            reach2_knots = np.concatenate([c2_knots, [k0]])

    layout = VariableLayout([
        ("C", 3 * N), ("Q", 4 * N), ("Xd", 6 * N), ("Xdd", 6 * N),
        ("QJ", 6 * N), ("F1", 3 * n1), ("F2", 3 * n2), ("t", schedule.n_phases),
    ])
    sl = layout.slices

    mask1 = np.zeros(N)
    mask1[c1_knots] = 1.0
    mask2 = np.zeros(N)
    mask2[c2_knots] = 1.0
    stance_mask = np.zeros(N)
    stance_mask[stance_knots] = 1.0
    flight_mask = np.zeros(N)
    flight_mask[flight_knots] = 1.0

    def unpack(x):
        C = x[sl["C"]].reshape(N, 3)
        Q = x[sl["Q"]].reshape(N, 4)
        Xd = x[sl["Xd"]].reshape(N, 6)
        Xdd = x[sl["Xdd"]].reshape(N, 6)
        QJ = x[sl["QJ"]].reshape(N, 6)
        F1 = x[sl["F1"]].reshape(n1, 3)
        F2 = x[sl["F2"]].reshape(n2, 3)
        t = x[sl["t"]]
        return C, Q, Xd, Xdd, QJ, F1, F2, t

    def leg_totals(C, F1, F2, p):
        """Per-leg total forces (N,3) and spring parts, contact-masked."""
        out = []
        for leg, (knots, Fblk, mask) in enumerate(
                ((c1_knots, F1, mask1), (c2_knots, F2, mask2))):
            Ffull = jnp.zeros((N, 3)).at[knots].set(Fblk)
            legvec = C - p["feet"][leg]
            length = jnp.linalg.norm(legvec, axis=1)
            ks = _leg_stiffness(length, p["stiff_coeffs"][leg],
                                p["stiff_interval"][leg])
            compression = jnp.maximum(p["rest_lengths"][leg] - length, 0.0)
            spring = (ks * compression / length)[:, None] * legvec
            out.append((Ffull + spring) * mask[:, None])
        return out

    def constraints(x, p):
        C, Q, Xd, Xdd, QJ, F1, F2, t = unpack(x)
        dt = t[phase_idx]
        rows = []

        rows.append(C[0] - p["initial_pos"])
        rows.append(Q[0] - p["initial_quat"])
        rows.append(Xd[0] - p["initial_velocity"])
        rows.append(QJ[0] - p["initial_joints"])

        dtk = dt[:-1, None]
        rows.append((C[1:] - C[:-1] - Xd[:-1, 0:3] * dtk
                     - 0.5 * Xdd[:-1, 0:3] * dtk**2).reshape(-1))
        v = Q[:-1] + 0.5 * _quat_mul_omega(Q[:-1], Xd[:-1, 3:6]) * dtk
        s = jnp.linalg.norm(v, axis=1, keepdims=True)
        rows.append((Q[1:] * s - v).reshape(-1))
        rows.append((Xd[1:] - Xd[:-1] - Xdd[:-1] * dtk).reshape(-1))

        Ftot1, Ftot2 = leg_totals(C, F1, F2, p)
        total = Ftot1 + Ftot2
        torque = (jnp.cross(p["feet"][0] - C, Ftot1)
                  + jnp.cross(p["feet"][1] - C, Ftot2))
        R = _rot_from_quat(Q)
        Iw = R @ p["inertia"] @ jnp.swapaxes(R, -1, -2)
        lin_rows = Xdd[:, 0:3] - total / p["mass"] - p["gravity"]
        ang_rows = jnp.einsum("nij,nj->ni", Iw, Xdd[:, 3:6]) - torque
        rows.append(jnp.concatenate([lin_rows, ang_rows], axis=1).reshape(-1))

        # waypoints: position band rows + squared quaternion distance rows
        rows.append(C[k_takeoff] - p["takeoff_pos"])
        rows.append(C[N - 1] - p["landing_pos"])
        for k, ref in ((k_takeoff, p["takeoff_quat"]), (N - 1, p["landing_quat"])):
            d2 = jnp.minimum(jnp.sum((Q[k] - ref) ** 2), jnp.sum((Q[k] + ref) ** 2))
            rows.append(d2[None])

        # contact pinning: FK(base pose, joints) = template foot
        qj = QJ.reshape(N, 2, 3)
        foot_local = _leg_fk_local(qj, p["lt"], p["lc"])  # (N, 2, 3)
        foot_body = p["hips"][None] + foot_local
        foot_w = C[:, None, :] + jnp.einsum("nij,nlj->nli", R, foot_body)
        rows.append((foot_w[c1_knots, 0] - p["feet"][0]).reshape(-1))
        rows.append((foot_w[c2_knots, 1] - p["feet"][1]).reshape(-1))

        # joint velocity rows: |dQJ| <= vmax * dt as two-sided inequalities
        dqj = QJ[1:] - QJ[:-1]
        vmax = p["joint_velocity_limit"]
        rows.append((vmax * dtk - dqj).reshape(-1))
        rows.append((vmax * dtk + dqj).reshape(-1))

        # torque rows: tau = -J_leg^T R^T F_total within limits
        Fb1 = jnp.einsum("nji,nj->ni", R, Ftot1)  # R^T F in body frame
        Fb2 = jnp.einsum("nji,nj->ni", R, Ftot2)
        J1 = _leg_jacobian_cols(qj[:, 0], p["lt"], p["lc"])
        J2 = _leg_jacobian_cols(qj[:, 1], p["lt"], p["lc"])
        tau1 = -jnp.einsum("nji,nj->ni", J1, Fb1)
        tau2 = -jnp.einsum("nji,nj->ni", J2, Fb2)
        rows.append(tau1[c1_knots].reshape(-1))
        rows.append(tau2[c2_knots].reshape(-1))

        # reachability (hip to template foot) at contact + takeoff knots
        hips_w = C[:, None, :] + jnp.einsum("nij,lj->nli", R, p["hips"])
        lens_sq = jnp.sum((hips_w - p["feet"][None]) ** 2, axis=2)
        rows.append(lens_sq[reach1_knots, 0])
        rows.append(lens_sq[reach2_knots, 1])

        # vertical GRF
        rows.append(Ftot1[c1_knots, 2])
        rows.append(Ftot2[c2_knots, 2])

        # friction on total acceleration
        az = Xdd[stance_knots, 2] - p["gravity"][2]
        ax = Xdd[stance_knots, 0]
        ay = Xdd[stance_knots, 1]
        mu = p["friction"]
        fric = jnp.stack([mu * az - ax, mu * az + ax,
                          mu * az - ay, mu * az + ay], axis=1)
        rows.append(fric.reshape(-1))

        return jnp.concatenate(rows)

    sm = jnp.asarray(stance_mask)
    fm = jnp.asarray(flight_mask)

    def cost(x, p):
        C, Q, Xd, Xdd, QJ, F1, F2, t = unpack(x)
        w = p["weights"]
        J = w["force1"] * jnp.sum(F1**2) + w["force2"] * jnp.sum(F2**2)
        J += w["acc"] * jnp.sum(sm[:, None] * Xdd**2)
        J += w["pose"] * jnp.sum(sm[:, None] * C**2)
        J += w["vel"] * jnp.sum(sm[:, None] * Xd**2)
        J += w["peak"] * jnp.sum((C[k_peak] - p["peak_pos"]) ** 2)
        J += w["flight_height"] * jnp.sum(fm * (C[:, 2] - p["takeoff_height"]) ** 2)
        J += w["land"] * jnp.sum((C[N - 1] - p["landing_pos"]) ** 2)
        J += w["duration"] * jnp.sum((t - p["t_ref"]) ** 2)
        # quaternion / angular velocity / homing-joint tracking
        d2 = jnp.minimum(jnp.sum((Q - p["quat_ref"]) ** 2, axis=1),
                         jnp.sum((Q + p["quat_ref"]) ** 2, axis=1))
        J += w["quat"] * jnp.sum(d2)
        J += w["omega"] * jnp.sum((Xd[:, 3:6] - p["omega_ref"]) ** 2)
        J += w["joint"] * jnp.sum(sm[:, None] * (QJ - p["initial_joints"]) ** 2)
        return J

    cost_j = jax.jit(cost)
    grad_j = jax.jit(jax.grad(cost))
    cons_j = jax.jit(constraints)
    n = layout.size
    eye = jnp.eye(n)
    chunk = 256

    @jax.jit
    def jac_j(x, p):
        f = lambda xx: constraints(xx, p)
        jvp_one = lambda v: jax.jvp(f, (x,), (v,))[1]
        blocks = [jax.vmap(jvp_one)(eye[c:c + chunk]) for c in range(0, n, chunk)]
        return jnp.concatenate(blocks, axis=0).T

    kernels = {
        "layout": layout, "cost": cost_j, "grad": grad_j, "cons": cons_j,
        "jac": jac_j,
        "indices": dict(c1=c1_knots, c2=c2_knots, stance=stance_knots,
                        flight=flight_knots, takeoff=k_takeoff, peak=k_peak,
                        n_reach=len(reach1_knots) + len(reach2_knots)),
        "masks": dict(stance=stance_mask, flight=flight_mask),
    }
    _KERNEL_CACHE[sig] = kernels
    return kernels


def initial_joint_angles(task: TaskSpec, model: RobotModel,
                         feet: np.ndarray) -> np.ndarray:
    """6-vector of template joint angles consistent with the initial pose."""
    c0 = np.asarray(task.initial_pose[0:3])
    R0 = quat.to_rotation_matrix(quat.from_euler_zyx(*task.initial_pose[3:6]))
    out = np.zeros((2, 3))
    rep = {0: "RL", 1: "FL"}
    for leg in range(2):
        target_body = R0.T @ (feet[leg] - c0)
        hip = model.template_hip_offset(leg + 1)
        # reuse the physical-leg IK with the template hip as the anchor
        local = target_body - hip
        q = leg_inverse_kinematics(
            model, local + model.hip_offsets[rep[leg]], rep[leg])
        out[leg] = q
    return out.reshape(-1)


def build_kino_nlp(
    coarse: CoarseTrajectory,
    task: TaskSpec,
    schedule: ContactSchedule,
    model: RobotModel,
    stiffness: StiffnessSource,
) -> NlpProblem:
    N = schedule.total_knots
    if coarse.n_knots != N:
        raise ValueError("coarse trajectory does not match the schedule")
    contact = schedule.contact_flags()
    c1_knots = np.where(contact[:, 0])[0]
    c2_knots = np.where(contact[:, 1])[0]
    stance_knots = np.where(contact.any(axis=1))[0]
    n1, n2 = len(c1_knots), len(c2_knots)
    k_peak = schedule.peak_knot

    feet = np.asarray(coarse.template_feet, dtype=float)
    kern = _get_kernels(schedule, stiffness.mode)
    layout = kern["layout"]

    quat_ref, omega_ref = propagate_quaternion_reference(coarse)
    q_init = initial_joint_angles(task, model, feet)

    t_ref = coarse.step_sizes.copy()

    hips = np.stack([model.template_hip_offset(1), model.template_hip_offset(2)])
    params = {
        "initial_pos": jnp.asarray(task.initial_pose[0:3]),
        "initial_quat": jnp.asarray(quat.from_euler_zyx(*task.initial_pose[3:6])),
        "initial_velocity": jnp.asarray(task.initial_velocity),
        "initial_joints": jnp.asarray(q_init),
        "takeoff_pos": jnp.asarray(task.takeoff_pose[0:3]),
        "takeoff_quat": jnp.asarray(quat.from_euler_zyx(*task.takeoff_pose[3:6])),
        "landing_pos": jnp.asarray(task.landing_pose[0:3]),
        "landing_quat": jnp.asarray(quat.from_euler_zyx(*task.landing_pose[3:6])),
        "peak_pos": jnp.asarray(task.peak_pose[0:3]),
        "takeoff_height": task.takeoff_height,
        "feet": jnp.asarray(feet),
        "hips": jnp.asarray(hips),
        "inertia": jnp.asarray(model.body_inertia),
        "mass": model.total_mass,
        "gravity": jnp.asarray(GRAVITY),
        "friction": task.friction,
        "t_ref": jnp.asarray(t_ref),
        "lt": model.thigh_length,
        "lc": model.calf_length,
        "joint_velocity_limit": model.joint_velocity_limit,
        "quat_ref": jnp.asarray(quat_ref),
        "omega_ref": jnp.asarray(omega_ref),
        "weights": {
            "force1": task.w_force1, "force2": task.w_force2,
            "acc": task.w_acc, "pose": task.w_pose, "vel": task.w_vel,
            "peak": task.w_peak, "flight_height": task.w_flight_height,
            "land": task.w_land, "duration": task.w_duration,
            "quat": task.w_quat, "omega": task.w_omega, "joint": task.w_joint,
        },
    }
    params.update({k: jnp.asarray(v) for k, v in stiffness.params().items()})

    compiled = (
        lambda x: float(kern["cost"](jnp.asarray(x), params)),
        lambda x: np.asarray(kern["grad"](jnp.asarray(x), params)),
        lambda x: np.asarray(kern["cons"](jnp.asarray(x), params)),
        lambda x: np.asarray(kern["jac"](jnp.asarray(x), params)),
    )

    lb, ub, groups = [], [], []

    def add(name, lo, hi):
        start = sum(v.size for v in lb)
        lb.append(np.asarray(lo, dtype=float).ravel())
        ub.append(np.asarray(hi, dtype=float).ravel())
        groups.append((name, slice(start, start + lb[-1].size)))

    add("initial", np.zeros(19), np.zeros(19))
    add("transition_pos", np.zeros(3 * (N - 1)), np.zeros(3 * (N - 1)))
    add("transition_quat", np.zeros(4 * (N - 1)), np.zeros(4 * (N - 1)))
    add("transition_vel", np.zeros(6 * (N - 1)), np.zeros(6 * (N - 1)))
    add("dynamics", np.zeros(6 * N), np.zeros(6 * N))
    band = task.waypoint_band()
    add("takeoff_waypoint_pos", -band[0:3], band[0:3])
    add("landing_waypoint_pos", -band[0:3], band[0:3])
    qband = (task.slack / 2.0) ** 2
    add("takeoff_waypoint_quat", [0.0], [qband])
    add("landing_waypoint_quat", [0.0], [qband])
    n_pin = 3 * (n1 + n2)
    add("contact_pinning", np.zeros(n_pin), np.zeros(n_pin))
    n_jv = 6 * (N - 1)
    add("joint_velocity_hi", np.zeros(n_jv), np.full(n_jv, np.inf))
    add("joint_velocity_lo", np.zeros(n_jv), np.full(n_jv, np.inf))
    tau_lim = np.tile(model.torque_limits, 1)
    tau1 = np.tile(tau_lim, n1)
    tau2 = np.tile(tau_lim, n2)
    add("torque_leg1", -(tau1 - _MARGIN_TORQUE), tau1 - _MARGIN_TORQUE)
    add("torque_leg2", -(tau2 - _MARGIN_TORQUE), tau2 - _MARGIN_TORQUE)
    lo_l, hi_l = task.leg_length_bounds
    n_reach = kern["indices"]["n_reach"]
    n_grf = n1 + n2
    add("reachability", np.full(n_reach, lo_l**2), np.full(n_reach, hi_l**2))
    add("grf", np.full(n_grf, _MARGIN_FORCE),
        np.full(n_grf, task.max_vertical_force - _MARGIN_FORCE))
    n_fric = 4 * len(stance_knots)
    add("friction", np.full(n_fric, _MARGIN_ACC), np.full(n_fric, np.inf))

    # quadratic-cost Hessian (diagonal)
    stance_mask = kern["masks"]["stance"]
    flight_mask = kern["masks"]["flight"]
    hess_diag = np.zeros(layout.size)
    hC = np.zeros((N, 3))
    hC += 2 * task.w_pose * stance_mask[:, None]
    hC[k_peak] += 2 * task.w_peak
    hC[:, 2] += 2 * task.w_flight_height * flight_mask
    hC[N - 1] += 2 * task.w_land
    hess_diag[layout.slices["C"]] = hC.ravel()
    hess_diag[layout.slices["Q"]] = 2 * task.w_quat
    hXd = np.zeros((N, 6))
    hXd += 2 * task.w_vel * stance_mask[:, None]
    hXd[:, 3:6] += 2 * task.w_omega
    hess_diag[layout.slices["Xd"]] = hXd.ravel()
    hess_diag[layout.slices["Xdd"]] = np.repeat(2 * task.w_acc * stance_mask, 6)
    hess_diag[layout.slices["QJ"]] = np.repeat(2 * task.w_joint * stance_mask, 6)
    hess_diag[layout.slices["F1"]] = 2 * task.w_force1
    hess_diag[layout.slices["F2"]] = 2 * task.w_force2
    hess_diag[layout.slices["t"]] = 2 * task.w_duration

    x_lb = np.full(layout.size, -np.inf)
    x_ub = np.full(layout.size, np.inf)
    x_lb[layout.slices["C"]] = np.tile(task.pose_bounds[0][0:3], N)
    x_ub[layout.slices["C"]] = np.tile(task.pose_bounds[1][0:3], N)
    x_lb[layout.slices["Q"]] = -1.01
    x_ub[layout.slices["Q"]] = 1.01
    x_lb[layout.slices["Xd"]] = np.tile(task.velocity_bounds[0], N)
    x_ub[layout.slices["Xd"]] = np.tile(task.velocity_bounds[1], N)
    x_lb[layout.slices["Xdd"]] = -200.0
    x_ub[layout.slices["Xdd"]] = 200.0
    x_lb[layout.slices["QJ"]] = np.tile(np.tile(model.joint_limits_lower, 2), N)
    x_ub[layout.slices["QJ"]] = np.tile(np.tile(model.joint_limits_upper, 2), N)
    fmax = task.max_vertical_force
    for blk in ("F1", "F2"):
        x_lb[layout.slices[blk]] = -fmax
        x_ub[layout.slices[blk]] = fmax
    x_lb[layout.slices["t"]] = [p.step_bounds[0] for p in schedule.phases]
    x_ub[layout.slices["t"]] = [p.step_bounds[1] for p in schedule.phases]

    x0 = _lift_coarse(coarse, task, schedule, model, layout, feet, q_init)

    return NlpProblem(
        layout=layout,
        cost_fn=lambda x: kern["cost"](x, params),
        constraint_fn=lambda x: kern["cons"](x, params),
        c_lb=np.concatenate(lb),
        c_ub=np.concatenate(ub),
        x_lb=x_lb,
        x_ub=x_ub,
        x0=x0,
        constraint_groups=groups,
        cost_hessian=np.diag(hess_diag),
        compiled_override=compiled,
        name="kino_to",
    )


def _lift_coarse(coarse, task, schedule, model, layout, feet, q_init):
    """Warm start: coarse solution lifted to the kinodynamic layout."""
    N = coarse.n_knots
    contact = schedule.contact_flags()
    C = coarse.poses[:, 0:3].copy()
    Q = np.zeros((N, 4))
    for k in range(N):
        Q[k] = quat.from_euler_zyx(*coarse.poses[k, 3:6])
        if k > 0 and np.dot(Q[k], Q[k - 1]) < 0:
            Q[k] = -Q[k]
    QJ = np.zeros((N, 6))
    rep = {0: "RL", 1: "FL"}
    last = q_init.reshape(2, 3).copy()
    for k in range(N):
        R = quat.to_rotation_matrix(Q[k])
        for leg in range(2):
            if contact[k, leg]:
                target_body = R.T @ (feet[leg] - C[k])
                hip = model.template_hip_offset(leg + 1)
                local = target_body - hip
                try:
                    last[leg] = leg_inverse_kinematics(
                        model, local + model.hip_offsets[rep[leg]], rep[leg])
                except Exception:
                    pass
            QJ[k, 3 * leg:3 * leg + 3] = last[leg]
    F1 = coarse.forces1[contact[:, 0]]
    F2 = coarse.forces2[contact[:, 1]]
    return layout.pack({
        "C": C.ravel(), "Q": Q.ravel(), "Xd": coarse.velocities.ravel(),
        "Xdd": coarse.accelerations.ravel(), "QJ": QJ.ravel(),
        "F1": F1.ravel(), "F2": F2.ravel(), "t": coarse.step_sizes.copy(),
    })


def solve_kino(
    coarse: CoarseTrajectory,
    task: TaskSpec,
    schedule: ContactSchedule,
    model: RobotModel,
    stiffness: StiffnessSource,
    options: IpmOptions | None = None,
) -> tuple[PlannedTrajectory, "NlpSolution"]:
    problem = build_kino_nlp(coarse, task, schedule, model, stiffness)
    opts = options or IpmOptions(
        tol=1e-7, max_iter=2000, kappa_eps=100.0, mu_strategy="adaptive")
    sol = solve_nlp(problem, opts)
    traj = extract_planned(problem, sol.x, coarse, task, schedule, model, stiffness)
    traj.metadata["solver"] = {
        "status": sol.status,
        "iterations": sol.iterations,
        "kkt_error": sol.kkt_error,
        "constraint_violation": sol.constraint_violation,
        "objective": sol.objective,
        "solve_time": sol.solve_time,
    }
    traj.metadata["residuals"] = audit_planned(traj, task, schedule, model, stiffness)
    traj.metadata["coarse_durations"] = coarse.phase_durations().tolist()
    return traj, sol


def extract_planned(problem, x, coarse, task, schedule, model,
                    stiffness) -> PlannedTrajectory:
    layout = problem.layout
    N = schedule.total_knots
    contact = schedule.contact_flags()
    C = np.asarray(layout.get(x, "C")).reshape(N, 3)
    Q = np.asarray(layout.get(x, "Q")).reshape(N, 4)
    Xd = np.asarray(layout.get(x, "Xd")).reshape(N, 6)
    Xdd = np.asarray(layout.get(x, "Xdd")).reshape(N, 6)
    QJ = np.asarray(layout.get(x, "QJ")).reshape(N, 6)
    F1blk = np.asarray(layout.get(x, "F1")).reshape(-1, 3)
    F2blk = np.asarray(layout.get(x, "F2")).reshape(-1, 3)
    t = np.asarray(layout.get(x, "t"))
    F1 = np.zeros((N, 3))
    F2 = np.zeros((N, 3))
    F1[np.where(contact[:, 0])[0]] = F1blk
    F2[np.where(contact[:, 1])[0]] = F2blk
    # rear leg stored first in QJ; PlannedTrajectory keeps the same order
    return PlannedTrajectory(
        com=C, quaternions=Q, com_velocities=Xd[:, 0:3],
        angular_velocities=Xd[:, 3:6], accelerations=Xdd, joint_angles=QJ,
        forces1=F1, forces2=F2, step_sizes=t,
        phase_of_knot=schedule.phase_of_knot(),
        phase_kinds=schedule.knot_phase_kind(), contact_flags=contact,
        template_feet=np.asarray(coarse.template_feet), metadata={})


def audit_planned(traj: PlannedTrajectory, task, schedule, model,
                  stiffness: StiffnessSource) -> dict:
    """Residual audit: quaternion norms, foot pinning, torque box, dynamics."""
    from ..model import leg_forward_kinematics

    N = traj.n_knots
    contact = traj.contact_flags
    feet = traj.template_feet
    norm_err = np.abs(np.linalg.norm(traj.quaternions, axis=1) - 1.0)

    foot_drift = 0.0
    foot_positions = {0: [], 1: []}
    torque_excess = -np.inf
    torque_max = 0.0
    rep = {0: "RL", 1: "FL"}
    dyn_res = np.zeros(N)
    for k in range(N):
        R = quat.to_rotation_matrix(traj.quaternions[k] /
                                    np.linalg.norm(traj.quaternions[k]))
        com = traj.com[k]
        total = np.zeros(3)
        torque_w = np.zeros(3)
        for leg in range(2):
            if not contact[k, leg]:
                continue
            legvec = com - feet[leg]
            length = np.linalg.norm(legvec)
            ks = stiffness.stiffness_np(length, leg)
            spring = ks * max(stiffness.rest_lengths[leg] - length, 0.0) * (
                legvec / length)
            Fa = traj.forces1[k] if leg == 0 else traj.forces2[k]
            Ftot = Fa + spring
            total += Ftot
            torque_w += np.cross(feet[leg] - com, Ftot)
            qleg = traj.joint_angles[k, 3 * leg:3 * leg + 3]
            hip = model.template_hip_offset(leg + 1)
            foot_body = hip + (leg_forward_kinematics(model, qleg, rep[leg])
                               - model.hip_offsets[rep[leg]])
            foot_w = com + R @ foot_body
            foot_positions[leg].append(foot_w)
            from ..model import leg_jacobian
            J = leg_jacobian(model, qleg, rep[leg])
            tau = -J.T @ (R.T @ Ftot)
            torque_max = max(torque_max, float(np.abs(tau).max()))
            torque_excess = max(torque_excess, float(
                (np.abs(tau) - model.torque_limits).max()))
        Iw = R @ model.body_inertia @ R.T
        if contact[k].any():
            lin = total / model.total_mass + GRAVITY
            ang = np.linalg.solve(Iw, torque_w)
        else:
            lin = GRAVITY
            ang = np.zeros(3)
        res = np.concatenate([traj.accelerations[k, 0:3] - lin,
                              traj.accelerations[k, 3:6] - ang])
        dyn_res[k] = np.abs(res).max()
    for leg in range(2):
        pts = np.array(foot_positions[leg])
        if len(pts):
            foot_drift = max(foot_drift, float(
                np.abs(pts - pts.mean(axis=0)).max()))
    return {
        "quat_norm_max_err": float(norm_err.max()),
        "foot_drift_max": foot_drift,
        "torque_excess": float(torque_excess),
        "torque_max": torque_max,
        "dynamics_max": float(dyn_res.max()),
        "step_sizes": traj.step_sizes,
        "durations": traj.phase_durations().tolist(),
    }
