"""Closed-loop execution: MPC -> WBC -> hybrid torque -> simulator.

The controller stack runs at configured divisors of the simulation rate and
consumes the planned trajectory as its reference; touchdown detection swaps
in the landing-reset reference stream. The controller always uses the
nominal model; a perturbed copy may drive the simulator for robustness
studies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..control import (
    LandingReset,
    MpcConfig,
    QuaternionMpc,
    SrbState,
    WbcConfig,
    feedforward_torque,
    hybrid_torque,
    solve_wbc,
    spring_generalized_torque,
)
from ..model import (
    RobotModel,
    homing_joint_vector,
    joint_spring_torque,
)
from .. import quaternion as quat
from ..planner.trajectory import PlannedTrajectory
from .engine import ContactEvent, SimState, SimulationError, Simulator, detect_events
from .world import SimWorld

LOG_COLUMNS = (
    ["time"]
    + [f"com_{c}" for c in ("x", "y", "z")]
    + [f"quat_{c}" for c in ("w", "x", "y", "z")]
    + [f"vel_{c}" for c in ("x", "y", "z")]
    + [f"omega_{c}" for c in ("x", "y", "z")]
    + [f"q_{i}" for i in range(12)]
    + [f"qd_{i}" for i in range(12)]
    + [f"tau_{i}" for i in range(12)]
    + [f"tau_spring_{i}" for i in range(12)]
    + [f"grf_{i}" for i in range(12)]
    + [f"contact_{i}" for i in range(4)]
    + ["power_motor", "power_total", "mpc_degraded", "wbc_degraded"]
    + [f"ref_com_{c}" for c in ("x", "y", "z")]
    + ["f_mpc_z", "f_wbc_z"]
)


@dataclass
class LoopConfig:
    sim_dt: float = 5e-4
    wbc_divisor: int = 2  # 1 kHz at the default sim step
    mpc_divisor: int = 20  # 100 Hz
    settle_time: float = 0.7
    flight_kp_scale: float = 0.35
    retract_blend: float = 0.12  # s, liftoff joints -> homing
    landing_kp: float = 60.0
    landing_kd: float = 12.0
    landing_kp_att: float = 80.0
    landing_kd_att: float = 10.0
    landing_blend_tau: float = 0.15
    touchdown_force_threshold: float = 4.0
    touchdown_debounce: int = 4
    fall_height_factor: float = 0.5
    fall_inclination_deg: float = 60.0
    mpc: MpcConfig = None
    wbc: WbcConfig = None

    def __post_init__(self):
        if self.mpc is None:
            self.mpc = MpcConfig()
        if self.wbc is None:
            self.wbc = WbcConfig()


@dataclass
class ControlLog:
    data: dict = field(default_factory=dict)  # column -> np.ndarray
    events: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return 0 if not self.data else len(self.data["time"])

    def write_csv(self, path: str | Path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(LOG_COLUMNS)
            for i in range(self.n_rows):
                w.writerow([f"{self.data[c][i]:.10g}" for c in LOG_COLUMNS])

    def write_summary(self, path: str | Path) -> None:
        payload = {
            "metrics": self.metrics,
            "events": [
                {"kind": e.kind, "time": e.time, "leg": e.leg} for e in self.events
            ],
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    raise TypeError(str(type(obj)))


class _PlanReference:
    """Time-indexed reference lookup over the planned trajectory.

    The reference clock holds at the takeoff boundary until actual liftoff
    is detected, then resumes shifted by the observed takeoff delay, so the
    full push-off is delivered even when tracking lags the plan.
    """

    def __init__(self, plan: PlannedTrajectory, model: RobotModel,
                 depth_bias: float = 0.002):
        self.plan = plan
        self.model = model
        self.times = plan.knot_times()
        self.duration = plan.duration()
        self.homing = homing_joint_vector(model)
        self.feet = plan.template_feet
        self.depth_bias = depth_bias
        flight = np.where(~plan.contact_flags.any(axis=1))[0]
        self.t_takeoff = self.times[flight[0]] if len(flight) else np.inf
        self.takeoff_delay: float | None = None

    def warped(self, t: float) -> float:
        if t < self.t_takeoff - 1e-12:
            return t
        if self.takeoff_delay is None:
            return self.t_takeoff - 1e-9  # hold the last stance sample
        return t - self.takeoff_delay

    @property
    def effective_duration(self) -> float:
        return self.duration + (self.takeoff_delay or 0.0)

    def _interp(self, arr: np.ndarray, t: float) -> np.ndarray:
        times = self.times
        if t <= times[0]:
            return arr[0]
        if t >= times[-1]:
            return arr[-1]
        k = int(np.searchsorted(times, t) - 1)
        a = (t - times[k]) / max(times[k + 1] - times[k], 1e-12)
        return (1 - a) * arr[k] + a * arr[k + 1]

    def knot_at(self, t: float) -> int:
        return int(np.clip(np.searchsorted(self.times, t) - 1, 0,
                           self.plan.n_knots - 1))

    def state_at(self, t: float):
        com = self._interp(self.plan.com, t)
        vel = self._interp(self.plan.com_velocities, t)
        omega = self._interp(self.plan.angular_velocities, t)
        q = self._interp(self.plan.quaternions, t)
        q = q / np.linalg.norm(q)
        acc = self._interp(self.plan.accelerations, t)
        return com, vel, q, omega, acc

    def contact_at(self, t: float) -> np.ndarray:
        """4-leg stance flags FL, FR, RL, RR."""
        k = self.knot_at(t)
        c1, c2 = self.plan.contact_flags[k]
        if t > self.times[-1] + 1e-9:
            return np.array([True] * 4)
        return np.array([c2, c2, c1, c1])

    def _stance_joints_ik(self, com, q_base, contact12,
                          extra_depth: float) -> np.ndarray:
        """Template joints pinning the feet, from a body pose via IK.

        ``extra_depth`` biases the foot targets below ground to feed the
        expected contact-penalty penetration forward through the legs.
        """
        from ..model import leg_inverse_kinematics, WorkspaceError

        R = quat.to_rotation_matrix(q_base / np.linalg.norm(q_base))
        q6 = np.zeros(6)
        rep = {0: "RL", 1: "FL"}
        for leg in range(2):
            target_w = self.feet[leg] - np.array([0.0, 0.0, extra_depth])
            target_body = R.T @ (target_w - com)
            hip = self.model.template_hip_offset(leg + 1)
            anchor = target_body - hip + self.model.hip_offsets[rep[leg]]
            try:
                q6[3 * leg:3 * leg + 3] = leg_inverse_kinematics(
                    self.model, anchor, rep[leg])
            except WorkspaceError:
                # beyond reach: aim along the same direction at full extension
                rel = anchor - self.model.hip_offsets[rep[leg]]
                rel = rel / np.linalg.norm(rel) * (
                    self.model.thigh_length + self.model.calf_length - 1e-4)
                q6[3 * leg:3 * leg + 3] = leg_inverse_kinematics(
                    self.model, self.model.hip_offsets[rep[leg]] + rel, rep[leg])
        return q6

    def joints_at(self, t: float, hold_pose: tuple | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
        """(q_cmd, qd_cmd) 12-vectors; homing in flight.

        Stance joint commands come from leg IK against the reference body
        pose with the planned per-leg load fed forward as extra foot depth;
        this keeps the commanded foot depth continuous through the final
        push. During the takeoff hold (``hold_pose`` set to the measured
        base pose), the command extends the legs from wherever the body is,
        so the push continues until real liftoff.
        """
        k = self.knot_at(t)
        flags = self.plan.contact_flags
        c1, c2 = flags[k]
        if not (c1 or c2):
            return self.homing.copy(), np.zeros(12)
        load = (np.linalg.norm(self._interp(self.plan.forces1, t))
                + np.linalg.norm(self._interp(self.plan.forces2, t)))
        extra = min(load / (4.0 * 2e4) + self.depth_bias, 0.008)
        if hold_pose is not None:
            com, q_base = hold_pose
            q6 = self._stance_joints_ik(com, q_base, flags[k], extra + 0.004)
            qd6 = np.zeros(6)
        else:
            com, vel, q_base, om, acc = self.state_at(t)
            q6 = self._stance_joints_ik(com, q_base, flags[k], extra)
            h = 2e-3
            com2, _, q_base2, _, _ = self.state_at(min(t + h, self.times[-1]))
            q6b = self._stance_joints_ik(com2, q_base2, flags[k], extra)
            qd6 = (q6b - q6) / h
        q12 = _expand_joints(q6)
        qd12 = _expand_joints(qd6, mirror_sign=True)
        if not c2:  # front legs already swinging: send them to homing
            q12[0:6] = self.homing[0:6]
            qd12[0:6] = 0.0
        return q12, qd12


def _expand_joints(q6: np.ndarray, mirror_sign: bool = False) -> np.ndarray:
    rear = q6[0:3]
    front = q6[3:6]
    mirror = np.array([-1.0, 1.0, 1.0])
    return np.concatenate([front, front * mirror, rear, rear * mirror])


def run_closed_loop(
    plan: PlannedTrajectory,
    model: RobotModel,
    world: SimWorld,
    config: LoopConfig | None = None,
    sim_model: RobotModel | None = None,
) -> ControlLog:
    """Track the plan in simulation; returns the complete control log."""
    cfg = config or LoopConfig()
    if plan.n_knots == 0:
        return ControlLog(data={}, events=[], metrics={"empty": True})
    cfg.mpc.mass = model.total_mass
    cfg.mpc.body_inertia = np.asarray(model.body_inertia)

    sim = Simulator(sim_model or model, world, dt=cfg.sim_dt)
    ref = _PlanReference(plan, model)
    mpc = QuaternionMpc(cfg.mpc)

    q0_12 = _expand_joints(plan.joint_angles[0])
    base0 = np.concatenate([plan.com[0]])
    state = sim.initial_state(base0, plan.quaternions[0], q0_12)

    n_steps = int(round(3.0 * (ref.duration + cfg.settle_time) / cfg.sim_dt))
    rows = {c: [] for c in LOG_COLUMNS}
    events: list[ContactEvent] = []
    landing: LandingReset | None = None
    contact_history: list[np.ndarray] = []
    liftoff_joints: np.ndarray | None = None
    liftoff_time = 0.0
    forces = np.zeros((4, 3))
    tau_cmd = np.zeros(12)
    wbc_sol = None
    mpc_out = None
    e_actu = 0.0
    e_tot = 0.0
    tau_max = 0.0
    p_max = 0.0
    aborted = ""

    nominal_dyn = sim.dyn if sim_model is None else None
    from ..model import FloatingBaseDynamics

    ctrl_dyn = FloatingBaseDynamics(model)

    for step in range(n_steps):
        t = state.time
        if t >= ref.effective_duration + cfg.settle_time:
            break
        kin_ctrl = ctrl_dyn.kinematics(state.base_pos, state.base_quat, state.joints)

        # detect actual liftoff: release the held takeoff reference
        if ref.takeoff_delay is None and t >= ref.t_takeoff:
            recent = contact_history[-cfg.touchdown_debounce:]
            if len(recent) == cfg.touchdown_debounce and all(
                    r.sum() == 0 for r in recent):
                ref.takeoff_delay = t - ref.t_takeoff
                liftoff_joints = state.joints.copy()
                liftoff_time = t
                events.append(ContactEvent("liftoff", t, None))

        tw = ref.warped(t)
        in_flight_plan = not ref.contact_at(tw).any()

        # landing reset on detected touchdown after liftoff
        if landing is None and ref.takeoff_delay is not None:
            recent = contact_history[-cfg.touchdown_debounce:]
            touched = (len(recent) == cfg.touchdown_debounce
                       and all(r.sum() >= 2 for r in recent))
            if touched and (in_flight_plan or t > ref.effective_duration):
                feet_now = sim.dyn.foot_positions(
                    sim.dyn.kinematics(state.base_pos, state.base_quat, state.joints))
                touching = [i for i in range(4)
                            if contact_history[-1][i]]
                foot_h = float(np.mean([feet_now[i, 2] for i in touching])) \
                    if touching else 0.0
                roll, pitch, yaw = quat.to_euler_zyx(state.base_quat)
                landing = LandingReset(
                    touchdown_time=t,
                    landing_com=state.base_pos.copy(),
                    foot_landing_height=foot_h,
                    homing_height=model.homing_height,
                    measured_inclination=np.array([roll, pitch]),
                    yaw_reference=float(
                        quat.to_euler_zyx(plan.quaternions[-1])[2]),
                    time_constant=cfg.landing_blend_tau,
                )
                events.append(ContactEvent("touchdown", t, None))

        # --- MPC tick ---
        if step % cfg.mpc_divisor == 0:
            feet_now = ctrl_dyn.foot_positions(kin_ctrl)
            Rb = kin_ctrl.base_rot
            omega_b = state.nu[3:6]
            L = Rb @ (model.body_inertia @ omega_b)
            L2 = L + model.total_mass * np.cross(state.base_pos, state.nu[0:3])
            srb = SrbState(state.base_pos, state.nu[0:3], L2, state.base_quat)
            horizon = cfg.mpc.horizon
            ref_states = np.zeros((horizon, 13))
            flags = np.zeros((horizon, 4), dtype=bool)
            for i in range(horizon):
                ti = t + i * cfg.mpc.dt
                if landing is not None:
                    com_r, vel_r, euler_r = landing.reference(max(ti, landing.touchdown_time))
                    q_r = quat.from_euler_zyx(*euler_r)
                    om_r = np.zeros(3)
                    acc_r = np.zeros(6)
                    flags[i] = True
                else:
                    twi = ref.warped(ti)
                    com_r, vel_r, q_r, om_r, acc_r = ref.state_at(twi)
                    flags[i] = ref.contact_at(twi)
                L_r = quat.to_rotation_matrix(q_r) @ (model.body_inertia @ om_r)
                L2_r = L_r + model.total_mass * np.cross(com_r, vel_r)
                ref_states[i] = np.concatenate([com_r, vel_r, L2_r, q_r])
            mpc_out = mpc.solve(srb, ref_states, flags, feet_now)
            forces = mpc_out.forces

        # --- WBC tick ---
        if step % cfg.wbc_divisor == 0:
            if landing is not None:
                com_r, vel_r, euler_r = landing.reference(t)
                q_r = quat.from_euler_zyx(*euler_r)
                acc_base = np.zeros(6)
                acc_base[0:3] = (cfg.landing_kp * (com_r - state.base_pos)
                                 + cfg.landing_kd * (vel_r - state.nu[0:3]))
                R_err = quat.to_rotation_matrix(q_r) @ kin_ctrl.base_rot.T
                rotvec = 0.5 * np.array([
                    R_err[2, 1] - R_err[1, 2],
                    R_err[0, 2] - R_err[2, 0],
                    R_err[1, 0] - R_err[0, 1]])
                acc_base[3:6] = (cfg.landing_kp_att * (kin_ctrl.base_rot.T @ rotvec)
                                 - cfg.landing_kd_att * state.nu[3:6])
                stance4 = np.array([True] * 4)
                q_cmd, qd_cmd = ref.homing.copy(), np.zeros(12)
            else:
                com_r, vel_r, q_r, om_r, acc_r = ref.state_at(tw)
                acc_base = acc_r.copy()
                stance4 = ref.contact_at(tw)
                holding = (ref.takeoff_delay is None
                           and t >= ref.t_takeoff - 1e-12)
                hold_pose = ((state.base_pos, state.base_quat)
                             if holding else None)
                q_cmd, qd_cmd = ref.joints_at(tw, hold_pose=hold_pose)
                if not stance4.any() and liftoff_joints is not None:
                    # smooth retraction from the liftoff posture to homing
                    a = np.clip((t - liftoff_time) / cfg.retract_blend, 0.0, 1.0)
                    s = 3 * a**2 - 2 * a**3
                    q_cmd = (1 - s) * liftoff_joints + s * ref.homing
                    qd_cmd = np.zeros(12)
            qdd_cmd = np.zeros(18)
            qdd_cmd[0:6] = acc_base
            contact_legs = [i for i in range(4) if stance4[i]]
            Jc = ctrl_dyn.contact_jacobian(kin_ctrl, contact_legs)
            M = ctrl_dyn.mass_matrix(kin_ctrl)
            Bv, G = ctrl_dyn.bias_forces(kin_ctrl, state.nu)
            spring_gen = spring_generalized_torque(model, state.joints)
            f_sel = forces[contact_legs].reshape(-1) if contact_legs else np.zeros(0)
            tau_mpc = feedforward_torque(model, state.joints, state.base_quat, forces)
            wbc_sol = solve_wbc(
                M, Bv + G, spring_gen, Jc, qdd_cmd, f_sel, tau_mpc, model,
                cfg.wbc, float(state.base_pos[2]), float(state.nu[2]),
                contact_legs)
            gains = cfg.wbc
            if not contact_legs and landing is None:
                gains = replace(cfg.wbc, kp=cfg.wbc.kp * cfg.flight_kp_scale)
            tau_cmd = hybrid_torque(wbc_sol.joint_torques, q_cmd, qd_cmd,
                                    state.joints, state.nu[6:], model, gains)

        # --- simulate ---
        try:
            state, contact = sim.step(state, tau_cmd)
        except SimulationError as exc:
            aborted = str(exc)
            break
        contact_history.append(contact.in_contact.copy())

        # --- log at WBC rate ---
        if step % cfg.wbc_divisor == 0:
            tau_spring = joint_spring_torque(model, state.joints)
            qd = state.nu[6:]
            p_motor = float(np.sum(np.abs(tau_cmd * qd)))
            p_total = float(np.sum(np.abs((tau_cmd + tau_spring) * qd)))
            dt_log = cfg.sim_dt * cfg.wbc_divisor
            e_actu += p_motor * dt_log
            e_tot += p_total * dt_log
            tau_max = max(tau_max, float(np.abs(tau_cmd).max()))
            p_max = max(p_max, p_motor)
            r = rows
            r["time"].append(state.time)
            for i, c in enumerate(("x", "y", "z")):
                r[f"com_{c}"].append(state.base_pos[i])
                r[f"vel_{c}"].append(state.nu[i])
                r[f"omega_{c}"].append(state.nu[3 + i])
            for i, c in enumerate(("w", "x", "y", "z")):
                r[f"quat_{c}"].append(state.base_quat[i])
            for i in range(12):
                r[f"q_{i}"].append(state.joints[i])
                r[f"qd_{i}"].append(qd[i])
                r[f"tau_{i}"].append(tau_cmd[i])
                r[f"tau_spring_{i}"].append(tau_spring[i])
                r[f"grf_{i}"].append(contact.grf.reshape(-1)[i])
            for i in range(4):
                r[f"contact_{i}"].append(float(contact.in_contact[i]))
            r["power_motor"].append(p_motor)
            r["power_total"].append(p_total)
            r["mpc_degraded"].append(float(mpc_out.degraded if mpc_out else 0.0))
            r["wbc_degraded"].append(float(wbc_sol.degraded if wbc_sol else 0.0))
            ref_com = (landing.reference(state.time)[0] if landing is not None
                       else ref.state_at(ref.warped(state.time))[0])
            for i, c in enumerate(("x", "y", "z")):
                r[f"ref_com_{c}"].append(ref_com[i])
            r["f_mpc_z"].append(float(forces[:, 2].sum()))
            r["f_wbc_z"].append(float(wbc_sol.grf[2::3].sum())
                                if wbc_sol and len(wbc_sol.grf) else 0.0)

    data = {c: np.asarray(v) for c, v in rows.items()}
    log = ControlLog(data=data, events=events)
    _finalize_metrics(log, plan, model, cfg, landing, tau_max, p_max,
                      e_actu, e_tot, aborted)
    if data:
        leg_forces = np.stack([np.stack([data[f"grf_{3*l+2}"]
                                         for l in range(4)], axis=1)])[0]
        log.events = detect_events(
            data["time"], leg_forces, data["vel_z"],
            force_threshold=cfg.touchdown_force_threshold,
            debounce_steps=cfg.touchdown_debounce) + events
    return log


def _finalize_metrics(log, plan, model, cfg, landing, tau_max, p_max,
                      e_actu, e_tot, aborted):
    data = log.data
    metrics = {
        "tau_max": tau_max,
        "p_max": p_max,
        "e_actu": e_actu,
        "e_tot": e_tot,
        "aborted": aborted,
    }
    if data and len(data["time"]):
        target = plan.com[-1]
        final_com = np.array([data["com_x"][-1], data["com_y"][-1],
                              data["com_z"][-1]])
        metrics["landing_x_error"] = float(abs(final_com[0] - target[0]))
        metrics["final_com"] = final_com
        metrics["target_com"] = target
        # fall classification over the post-touchdown window
        fall = False
        if landing is not None:
            t0 = landing.touchdown_time
            mask = data["time"] >= t0
            z = data["com_z"][mask]
            qw = data["quat_w"][mask]
            qx = data["quat_x"][mask]
            qy = data["quat_y"][mask]
            qz = data["quat_z"][mask]
            min_h = cfg.fall_height_factor * cfg.wbc.min_base_height
            tilt_max = 0.0
            for w, x, y, z_ in zip(qw, qx, qy, qz):
                R = quat.to_rotation_matrix(np.array([w, x, y, z_]))
                tilt_max = max(tilt_max, np.degrees(np.arccos(np.clip(R[2, 2], -1, 1))))
            fall = bool(np.any(z < min_h) or tilt_max > cfg.fall_inclination_deg)
            metrics["touchdown_time"] = landing.touchdown_time
            metrics["max_tilt_deg"] = tilt_max
        metrics["fall"] = fall
        metrics["landed"] = landing is not None
    if aborted:
        metrics["fall"] = True
    log.metrics = metrics
