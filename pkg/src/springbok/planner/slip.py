"""First-layer trajectory optimization on the compliant template model.

Decision variables per knot: body pose (position + Z-Y-X Euler angles), its
rates (world linear velocity, body angular velocity), accelerations, the
actuation forces of each template leg while it is in contact, and one step
size per contact phase. Transitions are written with the step size as a
variable, so phase durations are optimized jointly with the motion.

The constraint/cost kernels are jitted once per problem structure (knot
counts, contact pattern, stiffness mode) and shared across solves; task
numbers enter through a parameter pytree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import jax
import jax.numpy as jnp

from ..model import (
    GRAVITY,
    RobotModel,
    TemplateState,
    template_flight_dynamics,
    template_stance_dynamics,
)
from .. import quaternion as quat
from ..optbackend import IpmOptions, NlpProblem, VariableLayout, solve_nlp
from ..stiffness import StiffnessPolynomial, template_foot_positions
from .schedule import ContactSchedule, TaskSpec
from .trajectory import CoarseTrajectory

# safety margins keep inequality rows strictly feasible after polishing
_MARGIN_FORCE = 1e-6
_MARGIN_ACC = 1e-6

GIMBAL_TOL = 1e-6

_KERNEL_CACHE: dict = {}


class GimbalLockError(ValueError):
    pass


def euler_rate_transform(roll: float, pitch: float) -> np.ndarray:
    """Matrix mapping body angular velocity to Z-Y-X Euler-angle rates.

    Diverges as 1/cos(pitch); raises near the +-90 degree singularity.
    """
    if abs(np.cos(pitch)) <= GIMBAL_TOL:
        raise GimbalLockError(f"pitch {pitch:.4f} rad is at the Euler singularity")
    sr, cr = np.sin(roll), np.cos(roll)
    tp, cp = np.tan(pitch), np.cos(pitch)
    return np.array(
        [
            [1.0, sr * tp, cr * tp],
            [0.0, cr, -sr],
            [0.0, sr / cp, cr / cp],
        ]
    )


@dataclass
class StiffnessSource:
    """Template spring model used inside the optimization.

    mode: "rigid" (no springs), "constant" (fixed scalar constants), or
    "varying" (cubic polynomial in leg length).
    """

    mode: str = "rigid"
    constants: np.ndarray | None = None  # (2,) for constant mode
    polynomials: tuple[StiffnessPolynomial, StiffnessPolynomial] | None = None
    rest_lengths: np.ndarray = None

    def __post_init__(self):
        if self.mode not in ("rigid", "constant", "varying"):
            raise ValueError(f"unknown stiffness mode {self.mode!r}")
        if self.rest_lengths is None:
            self.rest_lengths = np.array([0.32, 0.32])
        self.rest_lengths = np.asarray(self.rest_lengths, dtype=float)
        if self.mode == "constant":
            self.constants = np.asarray(self.constants, dtype=float)

    def params(self) -> dict:
        """Numeric data consumed by the jitted kernels."""
        if self.mode == "rigid":
            coeffs = np.zeros((2, 4))
            interval = np.array([[0.0, 1.0], [0.0, 1.0]])
        elif self.mode == "constant":
            coeffs = np.zeros((2, 4))
            coeffs[:, 3] = self.constants
            interval = np.array([[0.0, 1.0], [0.0, 1.0]])
        else:
            coeffs = np.stack([np.asarray(p.coefficients) for p in self.polynomials])
            interval = np.array([list(p.length_interval) for p in self.polynomials])
        return {
            "stiff_coeffs": coeffs,
            "stiff_interval": interval,
            "rest_lengths": self.rest_lengths,
        }

    def stiffness_np(self, length: float, leg_index: int) -> float:
        if self.mode == "rigid":
            return 0.0
        if self.mode == "constant":
            return float(self.constants[leg_index])
        poly = self.polynomials[leg_index]
        lo, hi = poly.length_interval
        return float(max(np.polyval(poly.coefficients, np.clip(length, lo, hi)), 0.0))


def _rotation_zyx(euler):
    """Vectorized Z-Y-X rotation matrices for (..., 3) Euler angles."""
    r, p, y = euler[..., 0], euler[..., 1], euler[..., 2]
    sr, cr = jnp.sin(r), jnp.cos(r)
    sp, cp = jnp.sin(p), jnp.cos(p)
    sy, cy = jnp.sin(y), jnp.cos(y)
    rows = [
        jnp.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], -1),
        jnp.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], -1),
        jnp.stack([-sp, cp * sr, cp * cr], -1),
    ]
    return jnp.stack(rows, -2)


def _leg_stiffness(lengths, coeffs, interval):
    clamped = jnp.clip(lengths, interval[0], interval[1])
    return jnp.maximum(jnp.polyval(coeffs, clamped), 0.0)


def _schedule_signature(schedule: ContactSchedule, mode: str) -> tuple:
    return (tuple((p.kind, p.knots) for p in schedule.phases), mode)


def _get_kernels(schedule: ContactSchedule, mode: str):
    """Jitted (cost, grad, cons, jac) shared across same-structure problems."""
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
    # reach must also hold at the takeoff instant (first flight knot): the
    # push acts through the final stance interval, so its endpoint must stay
    # within leg reach of the pinned feet
    reach1_knots, reach2_knots = c1_knots, c2_knots
    if len(flight_knots):
        k0 = flight_knots[0]
        if contact[k0 - 1, 0]:
            reach1_knots = np.concatenate([c1_knots, [k0]])
        if contact[k0 - 1, 1]:
            reach2_knots = np.concatenate([c2_knots, [k0]])

    layout = VariableLayout([
        ("X", 6 * N), ("Xd", 6 * N), ("Xdd", 6 * N),
        ("F1", 3 * n1), ("F2", 3 * n2), ("t", schedule.n_phases),
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
        X = x[sl["X"]].reshape(N, 6)
        Xd = x[sl["Xd"]].reshape(N, 6)
        Xdd = x[sl["Xdd"]].reshape(N, 6)
        F1 = x[sl["F1"]].reshape(n1, 3)
        F2 = x[sl["F2"]].reshape(n2, 3)
        t = x[sl["t"]]
        return X, Xd, Xdd, F1, F2, t

    def total_leg_forces(X, F1, F2, p):
        """(N,3) per-leg total force (actuation + spring), zero off contact."""
        com = X[:, 0:3]
        feet = p["feet"]
        out = []
        for leg, (knots, Fblk, mask) in enumerate(
                ((c1_knots, F1, mask1), (c2_knots, F2, mask2))):
            Ffull = jnp.zeros((N, 3)).at[knots].set(Fblk)
            legvec = com - feet[leg]
            length = jnp.linalg.norm(legvec, axis=1)
            ks = _leg_stiffness(length, p["stiff_coeffs"][leg],
                                p["stiff_interval"][leg])
            compression = jnp.maximum(p["rest_lengths"][leg] - length, 0.0)
            spring = (ks * compression / length)[:, None] * legvec
            out.append((Ffull + spring) * mask[:, None])
        return out

    def constraints(x, p):
        X, Xd, Xdd, F1, F2, t = unpack(x)
        dt = t[phase_idx]
        rows = []

        rows.append(X[0] - p["initial_pose"])
        rows.append(Xd[0] - p["initial_velocity"])

        dtk = dt[:-1, None]
        rows.append((X[1:, 0:3] - X[:-1, 0:3] - Xd[:-1, 0:3] * dtk
                     - 0.5 * Xdd[:-1, 0:3] * dtk**2).reshape(-1))
        roll, pitch = X[:-1, 3], X[:-1, 4]
        wx, wy, wz = Xd[:-1, 3], Xd[:-1, 4], Xd[:-1, 5]
        sr, cr = jnp.sin(roll), jnp.cos(roll)
        tp, cp = jnp.tan(pitch), jnp.cos(pitch)
        euler_rate = jnp.stack([
            wx + sr * tp * wy + cr * tp * wz,
            cr * wy - sr * wz,
            sr / cp * wy + cr / cp * wz,
        ], axis=1)
        rows.append((X[1:, 3:6] - X[:-1, 3:6] - euler_rate * dtk).reshape(-1))
        rows.append((Xd[1:] - Xd[:-1] - Xdd[:-1] * dtk).reshape(-1))

        Ftot1, Ftot2 = total_leg_forces(X, F1, F2, p)
        com = X[:, 0:3]
        total = Ftot1 + Ftot2
        torque = (jnp.cross(p["feet"][0] - com, Ftot1)
                  + jnp.cross(p["feet"][1] - com, Ftot2))
        R = _rotation_zyx(X[:, 3:6])
        Iw = R @ p["inertia"] @ jnp.swapaxes(R, -1, -2)
        lin_rows = Xdd[:, 0:3] - total / p["mass"] - p["gravity"]
        ang_rows = jnp.einsum("nij,nj->ni", Iw, Xdd[:, 3:6]) - torque
        rows.append(jnp.concatenate([lin_rows, ang_rows], axis=1).reshape(-1))

        rows.append(X[k_takeoff] - p["takeoff_pose"])
        rows.append(X[N - 1] - p["landing_pose"])

        hips_w = com[:, None, :] + jnp.einsum(
            "nij,lj->nli", R, p["hips"])  # (N, 2, 3)
        lens_sq = jnp.sum((hips_w - p["feet"][None]) ** 2, axis=2)
        rows.append(lens_sq[reach1_knots, 0])
        rows.append(lens_sq[reach2_knots, 1])

        rows.append(Ftot1[c1_knots, 2])
        rows.append(Ftot2[c2_knots, 2])

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
        X, Xd, Xdd, F1, F2, t = unpack(x)
        w = p["weights"]
        J = w["force1"] * jnp.sum(F1**2) + w["force2"] * jnp.sum(F2**2)
        J += w["acc"] * jnp.sum(sm[:, None] * Xdd**2)
        J += w["pose"] * jnp.sum(sm[:, None] * X**2)
        J += w["vel"] * jnp.sum(sm[:, None] * Xd**2)
        J += w["peak"] * jnp.sum((X[k_peak] - p["peak_pose"]) ** 2)
        J += w["flight_height"] * jnp.sum(fm * (X[:, 2] - p["takeoff_height"]) ** 2)
        J += w["land"] * jnp.sum((X[N - 1] - p["landing_pose"]) ** 2)
        J += w["duration"] * jnp.sum((t - p["t_ref"]) ** 2)
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
        blocks = [jax.vmap(jvp_one)(eye[s:s + chunk]) for s in range(0, n, chunk)]
        return jnp.concatenate(blocks, axis=0).T

    kernels = {
        "layout": layout,
        "cost": cost_j, "grad": grad_j, "cons": cons_j, "jac": jac_j,
        "indices": dict(c1=c1_knots, c2=c2_knots, stance=stance_knots,
                        flight=flight_knots, takeoff=k_takeoff, peak=k_peak,
                        n_reach=len(reach1_knots) + len(reach2_knots)),
        "masks": dict(stance=stance_mask, flight=flight_mask),
    }
    _KERNEL_CACHE[sig] = kernels
    return kernels


def _task_params(task: TaskSpec, schedule: ContactSchedule, model: RobotModel,
                 stiffness: StiffnessSource, feet: np.ndarray,
                 t_ref: np.ndarray) -> dict:
    hips = np.stack([model.template_hip_offset(1), model.template_hip_offset(2)])
    p = {
        "initial_pose": jnp.asarray(task.initial_pose),
        "initial_velocity": jnp.asarray(task.initial_velocity),
        "takeoff_pose": jnp.asarray(task.takeoff_pose),
        "landing_pose": jnp.asarray(task.landing_pose),
        "peak_pose": jnp.asarray(task.peak_pose),
        "takeoff_height": task.takeoff_height,
        "feet": jnp.asarray(feet),
        "hips": jnp.asarray(hips),
        "inertia": jnp.asarray(model.body_inertia),
        "mass": model.total_mass,
        "gravity": jnp.asarray(GRAVITY),
        "friction": task.friction,
        "t_ref": jnp.asarray(t_ref),
        "weights": {
            "force1": task.w_force1, "force2": task.w_force2,
            "acc": task.w_acc, "pose": task.w_pose, "vel": task.w_vel,
            "peak": task.w_peak, "flight_height": task.w_flight_height,
            "land": task.w_land, "duration": task.w_duration,
        },
    }
    p.update({k: jnp.asarray(v) for k, v in stiffness.params().items()})
    return p


def build_slip_nlp(
    task: TaskSpec,
    schedule: ContactSchedule,
    model: RobotModel,
    stiffness: StiffnessSource,
) -> NlpProblem:
    N = schedule.total_knots
    contact = schedule.contact_flags()
    stance_knots = np.where(contact.any(axis=1))[0]
    c1_knots = np.where(contact[:, 0])[0]
    c2_knots = np.where(contact[:, 1])[0]
    k_peak = schedule.peak_knot
    flight_knots = schedule.flight_knots

    feet = task.template_feet
    if feet is None:
        feet = template_foot_positions(model)
    feet = np.asarray(feet, dtype=float)

    t_ref = task.reference_durations
    if t_ref is None:
        t_ref = np.array([p.step_bounds[0] * 4 for p in schedule.phases])
    else:
        t_ref = np.asarray(t_ref, dtype=float) / np.array(
            [p.knots for p in schedule.phases])

    kern = _get_kernels(schedule, stiffness.mode)
    layout = kern["layout"]
    params = _task_params(task, schedule, model, stiffness, feet, t_ref)

    cost_fn = lambda x: kern["cost"](x, params)
    cons_fn = lambda x: kern["cons"](x, params)
    compiled = (
        lambda x: float(kern["cost"](jnp.asarray(x), params)),
        lambda x: np.asarray(kern["grad"](jnp.asarray(x), params)),
        lambda x: np.asarray(kern["cons"](jnp.asarray(x), params)),
        lambda x: np.asarray(kern["jac"](jnp.asarray(x), params)),
    )

    # constraint bounds in kernel row order
    lb, ub, groups = [], [], []

    def add(name, lo, hi):
        start = sum(v.size for v in lb)
        lb.append(np.asarray(lo, dtype=float).ravel())
        ub.append(np.asarray(hi, dtype=float).ravel())
        groups.append((name, slice(start, start + lb[-1].size)))

    add("initial", np.zeros(12), np.zeros(12))
    add("transition_pos", np.zeros(3 * (N - 1)), np.zeros(3 * (N - 1)))
    add("transition_euler", np.zeros(3 * (N - 1)), np.zeros(3 * (N - 1)))
    add("transition_vel", np.zeros(6 * (N - 1)), np.zeros(6 * (N - 1)))
    add("dynamics", np.zeros(6 * N), np.zeros(6 * N))
    band = task.waypoint_band()
    add("takeoff_waypoint", -band, band)
    add("landing_waypoint", -band, band)
    lo_l, hi_l = task.leg_length_bounds
    n_reach = kern["indices"]["n_reach"]
    n_grf = len(c1_knots) + len(c2_knots)
    add("reachability", np.full(n_reach, lo_l**2), np.full(n_reach, hi_l**2))
    add("grf", np.full(n_grf, _MARGIN_FORCE),
        np.full(n_grf, task.max_vertical_force - _MARGIN_FORCE))
    n_fric = 4 * len(stance_knots)
    add("friction", np.full(n_fric, _MARGIN_ACC), np.full(n_fric, np.inf))

    # quadratic-cost Hessian (diagonal)
    stance_mask = kern["masks"]["stance"]
    flight_mask = kern["masks"]["flight"]
    hess_diag = np.zeros(layout.size)
    hx = np.zeros((N, 6))
    hx += 2 * task.w_pose * stance_mask[:, None]
    hx[k_peak] += 2 * task.w_peak
    hx[:, 2] += 2 * task.w_flight_height * flight_mask
    hx[N - 1] += 2 * task.w_land
    hess_diag[layout.slices["X"]] = hx.ravel()
    hess_diag[layout.slices["Xd"]] = np.repeat(2 * task.w_vel * stance_mask, 6)
    hess_diag[layout.slices["Xdd"]] = np.repeat(2 * task.w_acc * stance_mask, 6)
    hess_diag[layout.slices["F1"]] = 2 * task.w_force1
    hess_diag[layout.slices["F2"]] = 2 * task.w_force2
    hess_diag[layout.slices["t"]] = 2 * task.w_duration

    x_lb = np.full(layout.size, -np.inf)
    x_ub = np.full(layout.size, np.inf)
    x_lb[layout.slices["X"]] = np.tile(task.pose_bounds[0], N)
    x_ub[layout.slices["X"]] = np.tile(task.pose_bounds[1], N)
    x_lb[layout.slices["Xd"]] = np.tile(task.velocity_bounds[0], N)
    x_ub[layout.slices["Xd"]] = np.tile(task.velocity_bounds[1], N)
    x_lb[layout.slices["Xdd"]] = -200.0
    x_ub[layout.slices["Xdd"]] = 200.0
    fmax = task.max_vertical_force
    for blk in ("F1", "F2"):
        x_lb[layout.slices[blk]] = -fmax
        x_ub[layout.slices[blk]] = fmax
    x_lb[layout.slices["t"]] = [p.step_bounds[0] for p in schedule.phases]
    x_ub[layout.slices["t"]] = [p.step_bounds[1] for p in schedule.phases]

    x0 = _initial_guess(task, schedule, model, stiffness, layout, feet, t_ref)

    return NlpProblem(
        layout=layout,
        cost_fn=cost_fn,
        constraint_fn=cons_fn,
        c_lb=np.concatenate(lb),
        c_ub=np.concatenate(ub),
        x_lb=x_lb,
        x_ub=x_ub,
        x0=x0,
        constraint_groups=groups,
        cost_hessian=np.diag(hess_diag),
        compiled_override=compiled,
        name="slip_to",
    )


def _initial_guess(task, schedule, model, stiffness, layout, feet, t_ref):
    N = schedule.total_knots
    contact = schedule.contact_flags()
    k_takeoff = schedule.last_contact_knot
    k_peak = schedule.peak_knot
    waypoints = [(0, task.initial_pose), (k_takeoff, task.takeoff_pose),
                 (k_peak, task.peak_pose), (N - 1, task.landing_pose)]
    if stiffness.mode != "rigid":
        # seed a countermovement crouch so the solve starts in the
        # spring-compression basin instead of the rigid-like one
        k_dip = schedule.phases[0].knots // 2
        ks_hint = max(stiffness.stiffness_np(0.9 * float(
            stiffness.rest_lengths.mean()), 0), 1.0)
        dip = min(0.12, model.total_mass * 9.81 / (2.0 * ks_hint) + 0.02)
        dip_pose = np.asarray(task.initial_pose, dtype=float).copy()
        dip_pose[2] = max(0.14, dip_pose[2] - dip)
        waypoints = [waypoints[0], (k_dip, dip_pose)] + waypoints[1:]
    X = np.zeros((N, 6))
    for (k0, p0), (k1, p1) in zip(waypoints[:-1], waypoints[1:]):
        for k in range(k0, k1 + 1):
            a = (k - k0) / max(k1 - k0, 1)
            X[k] = (1 - a) * np.asarray(p0) + a * np.asarray(p1)
    dt = np.asarray(t_ref)[schedule.phase_of_knot()]
    Xd = np.zeros((N, 6))
    Xd[:-1] = (X[1:] - X[:-1]) / dt[:-1, None]
    Xdd = np.zeros((N, 6))
    F1, F2 = [], []
    mass = model.total_mass
    for k in range(N):
        n_c = int(contact[k].sum())
        if n_c == 0:
            Xdd[k, 0:3] = GRAVITY
            continue
        for leg, store in ((0, F1), (1, F2)):
            if contact[k, leg]:
                com = X[k, 0:3]
                length = float(np.linalg.norm(com - feet[leg]))
                ks = stiffness.stiffness_np(length, leg)
                spring = ks * max(stiffness.rest_lengths[leg] - length, 0.0) * (
                    (com - feet[leg]) / length)
                store.append(-mass * GRAVITY / n_c - spring)
    return layout.pack({
        "X": X.ravel(), "Xd": Xd.ravel(), "Xdd": Xdd.ravel(),
        "F1": np.asarray(F1, dtype=float).ravel(),
        "F2": np.asarray(F2, dtype=float).ravel(),
        "t": np.asarray(t_ref, dtype=float),
    })


def solve_slip(
    task: TaskSpec,
    schedule: ContactSchedule,
    model: RobotModel,
    stiffness: StiffnessSource,
    options: IpmOptions | None = None,
) -> tuple[CoarseTrajectory, "NlpSolution"]:
    """Build and solve the layer-1 problem; returns trajectory + solver info."""
    problem = build_slip_nlp(task, schedule, model, stiffness)
    opts = options or IpmOptions(
        tol=1e-7, max_iter=1500, kappa_eps=100.0, mu_strategy="adaptive")
    sol = solve_nlp(problem, opts)
    traj = extract_coarse(problem, sol.x, task, schedule, model, stiffness)
    traj.metadata["solver"] = {
        "status": sol.status,
        "iterations": sol.iterations,
        "kkt_error": sol.kkt_error,
        "constraint_violation": sol.constraint_violation,
        "objective": sol.objective,
        "solve_time": sol.solve_time,
    }
    traj.metadata["residuals"] = audit_coarse(traj, task, schedule, model, stiffness)
    return traj, sol


def extract_coarse(problem, x, task, schedule, model, stiffness) -> CoarseTrajectory:
    layout = problem.layout
    N = schedule.total_knots
    contact = schedule.contact_flags()
    X = np.asarray(layout.get(x, "X")).reshape(N, 6)
    Xd = np.asarray(layout.get(x, "Xd")).reshape(N, 6)
    Xdd = np.asarray(layout.get(x, "Xdd")).reshape(N, 6)
    F1blk = np.asarray(layout.get(x, "F1")).reshape(-1, 3)
    F2blk = np.asarray(layout.get(x, "F2")).reshape(-1, 3)
    t = np.asarray(layout.get(x, "t"))
    F1 = np.zeros((N, 3))
    F2 = np.zeros((N, 3))
    F1[np.where(contact[:, 0])[0]] = F1blk
    F2[np.where(contact[:, 1])[0]] = F2blk
    feet = task.template_feet
    if feet is None:
        feet = template_foot_positions(model)
    return CoarseTrajectory(
        poses=X, velocities=Xd, accelerations=Xdd, forces1=F1, forces2=F2,
        step_sizes=t, phase_of_knot=schedule.phase_of_knot(),
        phase_kinds=schedule.knot_phase_kind(), contact_flags=contact,
        template_feet=np.asarray(feet), metadata={})


def audit_coarse(traj: CoarseTrajectory, task, schedule, model,
                 stiffness: StiffnessSource) -> dict:
    """Independent residual audit against the template dynamics (numpy)."""
    N = traj.n_knots
    dyn_res = np.zeros(N)
    fric_worst = 0.0
    ballistic_lin = 0.0
    ballistic_ang = 0.0
    for k in range(N):
        pose = traj.poses[k]
        q = quat.from_euler_zyx(*pose[3:6])
        lengths = np.linalg.norm(pose[0:3] - traj.template_feet, axis=1)
        ks = np.array([stiffness.stiffness_np(lengths[i], i) for i in range(2)])
        state = TemplateState(
            com_position=pose[0:3], com_velocity=traj.velocities[k, 0:3],
            orientation=q, angular_velocity=traj.velocities[k, 3:6],
            rest_lengths=stiffness.rest_lengths, stiffness=ks,
            foot_positions=traj.template_feet)
        if traj.contact_flags[k].any():
            forces = np.stack([traj.forces1[k], traj.forces2[k]])
            lin, ang = template_stance_dynamics(
                state, forces, model.body_inertia, model.total_mass,
                contact=tuple(traj.contact_flags[k]))
            az = traj.accelerations[k, 2] + 9.81
            if az > 1e-9:
                fric_worst = max(
                    fric_worst,
                    float(np.abs(traj.accelerations[k, 0:2]).max() / az))
        else:
            lin, ang = template_flight_dynamics(state)
            ballistic_lin = max(ballistic_lin, float(
                np.abs(traj.accelerations[k, 0:3] - lin).max()))
            ballistic_ang = max(ballistic_ang, float(
                np.abs(traj.accelerations[k, 3:6]).max()))
        res = np.concatenate([
            traj.accelerations[k, 0:3] - lin, traj.accelerations[k, 3:6] - ang])
        dyn_res[k] = np.abs(res).max()
    band = task.waypoint_band()
    k_to = schedule.last_contact_knot
    return {
        "dynamics_max": float(dyn_res.max()),
        "dynamics_per_knot": dyn_res,
        "friction_ratio_max": fric_worst,
        "friction_bound": task.friction,
        "ballistic_linear_max": ballistic_lin,
        "ballistic_angular_max": ballistic_ang,
        "takeoff_band_violation": float(np.maximum(
            np.abs(traj.poses[k_to] - task.takeoff_pose) - band, 0.0).max()),
        "landing_band_violation": float(np.maximum(
            np.abs(traj.poses[-1] - task.landing_pose) - band, 0.0).max()),
        "step_sizes": traj.step_sizes,
    }
