"""Single-rigid-body quaternion MPC for ground-reaction-force tracking.

State x = [com position; com velocity; angular momentum about the world
origin; unit quaternion] (13 numbers). The momentum coordinate makes the
translational/rotational coupling affine except for the quaternion row,
which is linearized about the latest state. Discretization uses the
augmented-matrix exponential, which stays valid although A is singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

import jax
import jax.numpy as jnp

from ..model import GRAVITY, RobotModel, leg_jacobian
from .. import quaternion as quat
from ..optbackend import QpProblem, solve_qp

NX = 13


@dataclass
class SrbState:
    com: np.ndarray
    com_velocity: np.ndarray
    angular_momentum_origin: np.ndarray  # about the world origin
    orientation: np.ndarray  # unit quaternion, renormalized on ingest

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float)
        self.com_velocity = np.asarray(self.com_velocity, dtype=float)
        self.angular_momentum_origin = np.asarray(
            self.angular_momentum_origin, dtype=float)
        q = np.asarray(self.orientation, dtype=float)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {n:.8f} off unit beyond 1e-6")
        self.orientation = q / n

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.com, self.com_velocity,
                               self.angular_momentum_origin, self.orientation])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "SrbState":
        return cls(x[0:3], x[3:6], x[6:9], x[9:13])


def momentum_l2(com: np.ndarray, com_velocity: np.ndarray, L: np.ndarray,
                mass: float) -> np.ndarray:
    """Angular momentum about the world origin from the CoM momentum L."""
    return np.asarray(L) + mass * np.cross(com, com_velocity)


@dataclass
class MpcConfig:
    horizon: int = 10
    dt: float = 0.01
    mass: float = 12.0
    body_inertia: np.ndarray = field(default_factory=lambda: np.diag([0.08, 0.21, 0.23]))
    friction: float = 0.6
    f_z_max: float = 250.0
    w_position: float = 400.0
    w_velocity: float = 20.0
    w_momentum: float = 1.0
    w_quaternion: float = 600.0
    w_force: float = 1e-3

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt > 0")
        self.body_inertia = np.asarray(self.body_inertia, dtype=float)

    def state_weight(self) -> np.ndarray:
        return np.diag(np.concatenate([
            np.full(3, self.w_position), np.full(3, self.w_velocity),
            np.full(3, self.w_momentum), np.full(4, self.w_quaternion)]))


def _dynamics_state_part(x, mass, inertia):
    """State-dependent part of dx/dt (forces enter linearly through B)."""
    c = x[0:3]
    cd = x[3:6]
    L2 = x[6:9]
    Q = x[9:13]
    R = _rot(Q)
    Iw_inv = R @ jnp.linalg.inv(inertia) @ R.T
    omega = Iw_inv @ (L2 - mass * jnp.cross(c, cd))
    T = jnp.array([
        [-Q[1], -Q[2], -Q[3]],
        [Q[0], -Q[3], Q[2]],
        [Q[3], Q[0], -Q[1]],
        [-Q[2], Q[1], Q[0]],
    ])
    qdot = 0.5 * T @ omega
    g = jnp.asarray(GRAVITY)
    return jnp.concatenate([cd, g, mass * jnp.cross(c, g), qdot])


def _rot(Q):
    w, x, y, z = Q
    return jnp.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


_jac_state = jax.jit(jax.jacfwd(_dynamics_state_part), static_argnums=())


def srb_continuous_dynamics(
    x: np.ndarray, grfs: np.ndarray, footholds: np.ndarray,
    mass: float, body_inertia: np.ndarray,
) -> np.ndarray:
    """dx/dt for stacked per-leg world GRFs applied at the footholds."""
    fx = np.asarray(_dynamics_state_part(
        jnp.asarray(x), mass, jnp.asarray(body_inertia)))
    B = input_matrix(footholds, mass)
    return fx + B @ np.asarray(grfs, dtype=float).reshape(-1)


def input_matrix(footholds: np.ndarray, mass: float) -> np.ndarray:
    """Exact B: forces enter the velocity and momentum rows linearly."""
    footholds = np.asarray(footholds, dtype=float).reshape(-1, 3)
    n = footholds.shape[0]
    B = np.zeros((NX, 3 * n))
    for i, p in enumerate(footholds):
        B[3:6, 3 * i:3 * i + 3] = np.eye(3) / mass
        B[6:9, 3 * i:3 * i + 3] = _skew(p)
    return B


def _skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def linearize(
    state: SrbState, config: MpcConfig, footholds: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous (A, B, C) about the given state; exact at that point."""
    x0 = state.as_vector()
    A = np.asarray(_jac_state(jnp.asarray(x0), config.mass,
                              jnp.asarray(config.body_inertia)))
    B = input_matrix(footholds, config.mass)
    fx0 = np.asarray(_dynamics_state_part(
        jnp.asarray(x0), config.mass, jnp.asarray(config.body_inertia)))
    C = fx0 - A @ x0
    return A, B, C


def discretize(A: np.ndarray, B: np.ndarray, C: np.ndarray,
               dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact zero-order-hold via the augmented-matrix exponential.

    Works for singular A (the position rows), unlike the A^-1 closed form.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = A.shape[0]
    m = B.shape[1]
    aug = np.zeros((n + m + 1, n + m + 1))
    aug[:n, :n] = A
    aug[:n, n:n + m] = B
    aug[:n, n + m:] = C.reshape(-1, 1)
    E = scipy.linalg.expm(aug * dt)
    return E[:n, :n], E[:n, n:n + m], E[:n, n + m]


@dataclass
class MpcSolution:
    forces: np.ndarray  # (4, 3) world GRFs, zero rows for swing legs
    status: str
    degraded: bool
    cost: float = 0.0
    horizon_forces: np.ndarray | None = None


class QuaternionMpc:
    """Receding-horizon GRF controller; remembers its last solution."""

    def __init__(self, config: MpcConfig):
        self.config = config
        self._last = np.zeros((4, 3))

    def solve(
        self,
        state: SrbState,
        reference: np.ndarray,  # (H, 13) state references over the horizon
        contact: np.ndarray,  # (H, 4) stance flags over the horizon
        footholds: np.ndarray,  # (4, 3) world foot positions
        force_reference: np.ndarray | None = None,  # (H, 4, 3) world GRFs
    ) -> MpcSolution:
        cfg = self.config
        H = cfg.horizon
        reference = np.asarray(reference, dtype=float).reshape(H, NX)
        contact = np.asarray(contact, dtype=bool).reshape(H, 4)
        x0 = state.as_vector()

        # align reference quaternions with the current one (double cover)
        reference = reference.copy()
        for k in range(H):
            if reference[k, 9:13] @ x0[9:13] < 0:
                reference[k, 9:13] = -reference[k, 9:13]

        A, B_full, C = linearize(state, cfg, footholds)
        Ad, Bd_full, Cd = discretize(A, B_full, C, cfg.dt)

        # per-step active legs define the decision layout
        leg_cols = [np.flatnonzero(np.repeat(contact[k], 3)) for k in range(H)]
        nu_step = [len(c) for c in leg_cols]
        nU = int(np.sum(nu_step))
        if nU == 0:
            self._last = np.zeros((4, 3))
            return MpcSolution(forces=np.zeros((4, 3)), status="optimal",
                               degraded=False, horizon_forces=np.zeros((H, 12)))

        # condensed prediction X = Sx x0 + Su U + Sc
        Sx = np.zeros((H * NX, NX))
        Su = np.zeros((H * NX, nU))
        Sc = np.zeros(H * NX)
        Apow = [np.eye(NX)]
        for k in range(H):
            Apow.append(Ad @ Apow[-1])
        col = 0
        for k in range(H):
            Sx[k * NX:(k + 1) * NX] = Apow[k + 1]
            acc = np.zeros(NX)
            for j in range(k + 1):
                acc = acc + Apow[k - j] @ Cd
            Sc[k * NX:(k + 1) * NX] = acc
        for j in range(H):
            Bj = Bd_full[:, leg_cols[j]]
            for k in range(j, H):
                Su[k * NX:(k + 1) * NX, col:col + nu_step[j]] = Apow[k - j] @ Bj
            col += nu_step[j]

        Qbar = np.kron(np.eye(H), cfg.state_weight())
        Xr = reference.reshape(-1)
        d = Sx @ x0 + Sc - Xr
        # force regularization pulls toward the planned GRFs (or the static
        # gravity share) so the force penalty does not trade against tracking
        u_ref = np.zeros(nU)
        col = 0
        for k in range(H):
            nlegs = nu_step[k] // 3
            if nlegs:
                if force_reference is not None:
                    legs = np.flatnonzero(contact[k])
                    u_ref[col:col + nu_step[k]] = force_reference[k][legs].reshape(-1)
                else:
                    share = cfg.mass * 9.81 / nlegs
                    u_ref[col + 2:col + nu_step[k]:3] = share
            col += nu_step[k]
        H_qp = 2.0 * (Su.T @ Qbar @ Su + cfg.w_force * np.eye(nU))
        g_qp = 2.0 * (Su.T @ Qbar @ d - cfg.w_force * u_ref)

        # friction pyramid + unilateral + vertical cap per active leg
        rows = []
        rhs = []
        col = 0
        mu = cfg.friction
        for k in range(H):
            nlegs = nu_step[k] // 3
            for i in range(nlegs):
                base = col + 3 * i
                for r, b in (
                    ([-1.0, 0.0, mu], 0.0), ([1.0, 0.0, mu], 0.0),
                    ([0.0, -1.0, mu], 0.0), ([0.0, 1.0, mu], 0.0),
                    ([0.0, 0.0, 1.0], 0.0), ([0.0, 0.0, -1.0], -cfg.f_z_max),
                ):
                    row = np.zeros(nU)
                    row[base:base + 3] = r
                    rows.append(row)
                    rhs.append(b)
            col += nu_step[k]
        A_in = np.array(rows)
        b_in = np.array(rhs)

        sol = solve_qp(QpProblem(H=H_qp, g=g_qp, A_in=A_in, b_in=b_in))
        if not sol.ok:
            return MpcSolution(forces=self._last.copy(), status=sol.status,
                               degraded=True)
        U = sol.x
        forces = np.zeros((4, 3))
        first = U[0:nu_step[0]]
        legs0 = np.flatnonzero(contact[0])
        for idx, leg in enumerate(legs0):
            forces[leg] = first[3 * idx:3 * idx + 3]
        horizon = np.zeros((H, 12))
        col = 0
        for k in range(H):
            cols = leg_cols[k]
            horizon[k, cols] = U[col:col + nu_step[k]]
            col += nu_step[k]
        self._last = forces.copy()
        return MpcSolution(forces=forces, status="optimal", degraded=False,
                           cost=float(0.5 * U @ H_qp @ U + g_qp @ U),
                           horizon_forces=horizon)


def feedforward_torque(model: RobotModel, q_joints: np.ndarray,
                       base_quat: np.ndarray, forces: np.ndarray) -> np.ndarray:
    """Joint torques compensating the commanded GRFs: -J_c^T f.

    J_c is block diagonal over legs with world-frame foot Jacobians.
    """
    from ..model import LEG_NAMES

    R = quat.to_rotation_matrix(np.asarray(base_quat) /
                                np.linalg.norm(base_quat))
    q = np.asarray(q_joints, dtype=float).reshape(4, 3)
    f = np.asarray(forces, dtype=float).reshape(4, 3)
    tau = np.zeros((4, 3))
    for i, leg in enumerate(LEG_NAMES):
        Jw = R @ leg_jacobian(model, q[i], leg)
        tau[i] = -Jw.T @ f[i]
    return tau.reshape(-1)
