"""Floating-base rigid-body dynamics for the 18-DoF quadruped.

Generalized velocity convention: nu = [com velocity of the trunk frame in
world coordinates (3); body-frame angular velocity (3); joint rates (12)].
Joint order is FL, FR, RL, RR with (hip roll, thigh pitch, calf pitch).

The mass matrix comes from a composite-rigid-body pass and the bias terms
from a recursive Newton-Euler pass, both written in world-frame 3D form and
batched across the four identical leg chains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import quaternion as quat
from .robot import LEG_NAMES, RobotModel

GRAVITY = np.array([0.0, 0.0, -9.81])
NV = 18


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _skew_batch(v: np.ndarray) -> np.ndarray:
    """(..., 3) -> (..., 3, 3)."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def _cross3(a, b):
    """Batched cross product without np.cross's moveaxis overhead."""
    out = np.empty(np.broadcast(a, b).shape)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out



@dataclass
class BodyKinematics:
    """World-frame kinematic data, batched over legs.

    Arrays indexed [leg, link] with links (hip, thigh, calf).
    """

    base_pos: np.ndarray
    base_rot: np.ndarray
    rot: np.ndarray  # (4, 3, 3, 3)
    origin: np.ndarray  # (4, 3, 3)
    com: np.ndarray  # (4, 3, 3)
    axis: np.ndarray  # (4, 3, 3) world joint axes
    foot: np.ndarray  # (4, 3)
    inertia_w: np.ndarray  # (4, 3, 3, 3) link inertias in world frame


class FloatingBaseDynamics:
    """Mass matrix, bias forces, Jacobians, and energies for one robot."""

    def __init__(self, model: RobotModel):
        self.model = model
        self.link_masses = np.asarray(model.link_masses, dtype=float)
        self.link_coms = np.asarray(model.link_com_offsets, dtype=float)
        self.link_inertias = np.asarray(model.link_inertias, dtype=float)
        self.trunk_mass = float(model.trunk_mass)
        self.trunk_inertia = np.asarray(model.body_inertia, dtype=float)
        self.total_mass = self.trunk_mass + 4.0 * float(np.sum(self.link_masses))
        self.hip_offsets = np.stack([model.hip_offsets[leg] for leg in LEG_NAMES])

    # -- kinematics -----------------------------------------------------------

    def kinematics(self, base_pos: np.ndarray, base_quat: np.ndarray,
                   q_joints: np.ndarray) -> BodyKinematics:
        Rb = quat.to_rotation_matrix(base_quat)
        q = np.asarray(q_joints, dtype=float).reshape(4, 3)
        lt, lc = self.model.thigh_length, self.model.calf_length

        c1, s1 = np.cos(q[:, 0]), np.sin(q[:, 0])
        Rx = np.zeros((4, 3, 3))
        Rx[:, 0, 0] = 1.0
        Rx[:, 1, 1] = c1
        Rx[:, 1, 2] = -s1
        Rx[:, 2, 1] = s1
        Rx[:, 2, 2] = c1
        R1 = Rb[None] @ Rx
        c2, s2 = np.cos(q[:, 1]), np.sin(q[:, 1])
        Ry2 = np.zeros((4, 3, 3))
        Ry2[:, 0, 0] = c2
        Ry2[:, 0, 2] = s2
        Ry2[:, 1, 1] = 1.0
        Ry2[:, 2, 0] = -s2
        Ry2[:, 2, 2] = c2
        R2 = R1 @ Ry2
        c3, s3 = np.cos(q[:, 2]), np.sin(q[:, 2])
        Ry3 = np.zeros((4, 3, 3))
        Ry3[:, 0, 0] = c3
        Ry3[:, 0, 2] = s3
        Ry3[:, 1, 1] = 1.0
        Ry3[:, 2, 0] = -s3
        Ry3[:, 2, 2] = c3
        R3 = R2 @ Ry3

        base_pos = np.asarray(base_pos, dtype=float)
        hip_anchor = base_pos[None] + self.hip_offsets @ Rb.T
        o_calf = hip_anchor + R2 @ np.array([0.0, 0.0, -lt])
        foot = o_calf + R3 @ np.array([0.0, 0.0, -lc])

        rot = np.stack([R1, R2, R3], axis=1)  # (4, 3, 3, 3)
        origin = np.stack([hip_anchor, hip_anchor, o_calf], axis=1)
        com = origin + np.einsum("lkij,kj->lki", rot, self.link_coms)
        axis = np.stack([
            np.broadcast_to(Rb[:, 0], (4, 3)), R1[:, :, 1], R2[:, :, 1]], axis=1)
        inertia_w = np.einsum("lkij,kjm,lknm->lkin", rot, self.link_inertias, rot)
        return BodyKinematics(base_pos=base_pos, base_rot=Rb, rot=rot,
                              origin=origin, com=com, axis=axis, foot=foot,
                              inertia_w=inertia_w)

    def foot_positions(self, kin: BodyKinematics) -> np.ndarray:
        return kin.foot.copy()

    def foot_jacobian(self, kin: BodyKinematics, leg_index: int) -> np.ndarray:
        """3x18 world-frame Jacobian of the foot point, mixed convention."""
        J = np.zeros((3, NV))
        p = kin.foot[leg_index]
        J[:, 0:3] = np.eye(3)
        J[:, 3:6] = -_skew(p - kin.base_pos) @ kin.base_rot
        cols = _cross3(kin.axis[leg_index],
                        p[None] - kin.origin[leg_index])  # (3 joints, 3)
        J[:, 6 + 3 * leg_index:9 + 3 * leg_index] = cols.T
        return J

    def contact_jacobian(self, kin: BodyKinematics,
                         contact_legs: list[int]) -> np.ndarray:
        if not len(contact_legs):
            return np.zeros((0, NV))
        return np.vstack([self.foot_jacobian(kin, l) for l in contact_legs])

    def foot_velocities(self, kin: BodyKinematics, nu: np.ndarray) -> np.ndarray:
        v_base = nu[0:3]
        w_base = kin.base_rot @ nu[3:6]
        qd = nu[6:].reshape(4, 3)
        rel = kin.foot - kin.base_pos[None]
        v = v_base[None] + _cross3(w_base[None], rel)
        cols = _cross3(kin.axis, kin.foot[:, None, :] - kin.origin)  # (4,3,3)
        v = v + np.einsum("ljk,lj->lk", cols, qd)
        return v

    # -- velocity propagation ---------------------------------------------------

    def _body_velocities(self, kin: BodyKinematics, nu: np.ndarray):
        """(w_base, v_base, w (4,3,3), v_com (4,3,3), v_origin (4,3,3))."""
        v_base = nu[0:3]
        w_base = kin.base_rot @ nu[3:6]
        qd = nu[6:].reshape(4, 3)
        w_hip = w_base[None] + kin.axis[:, 0] * qd[:, 0:1]
        w_thigh = w_hip + kin.axis[:, 1] * qd[:, 1:2]
        w_calf = w_thigh + kin.axis[:, 2] * qd[:, 2:3]
        w = np.stack([w_hip, w_thigh, w_calf], axis=1)

        vo_hip = v_base[None] + _cross3(
            np.broadcast_to(w_base, (4, 3)), kin.origin[:, 0] - kin.base_pos[None])
        vo_calf = vo_hip + _cross3(w_thigh, kin.origin[:, 2] - kin.origin[:, 1])
        v_origin = np.stack([vo_hip, vo_hip, vo_calf], axis=1)
        v_com = v_origin + _cross3(w, kin.com - kin.origin)
        return w_base, v_base, w, v_com, v_origin

    # -- mass matrix (composite rigid body) ---------------------------------------

    def mass_matrix(self, kin: BodyKinematics) -> np.ndarray:
        ob = kin.base_pos
        Rb = kin.base_rot
        masses = self.link_masses  # (3,)
        coms = kin.com  # (4,3,3)
        inertias = kin.inertia_w  # (4,3,3,3)

        m_tot = self.total_mass
        r = coms - ob[None, None]  # (4,3,3)
        mI = masses[None, :, None, None] * (
            np.einsum("lkj,lkj->lk", r, r)[:, :, None, None] * np.eye(3)
            - np.einsum("lki,lkj->lkij", r, r))
        I_o = Rb @ self.trunk_inertia @ Rb.T + inertias.sum(axis=(0, 1)) \
            + mI.sum(axis=(0, 1))
        c_sys = (self.trunk_mass * ob
                 + np.einsum("k,lkj->j", masses, coms)) / m_tot
        rsc = c_sys - ob

        Mp = np.zeros((NV, NV))
        Mp[0:3, 0:3] = m_tot * np.eye(3)
        Mp[0:3, 3:6] = -m_tot * _skew(rsc)
        Mp[3:6, 0:3] = m_tot * _skew(rsc)
        Mp[3:6, 3:6] = I_o

        # joint columns: unit joint acceleration moves the distal sub-chain
        # a_com(k) = axis_j x (com_k - origin_j) for links k >= j
        axis = kin.axis  # (4,3,3)
        oj = kin.origin  # (4,3,3)
        # lever[l, j, k] = coms[l, k] - oj[l, j]
        lever = coms[:, None, :, :] - oj[:, :, None, :]  # (4,3,3,3)
        acom = _cross3(axis[:, :, None, :], lever)  # (4, j, k, 3)
        distal = np.triu(np.ones((3, 3)))  # k >= j mask
        f = masses[None, None, :, None] * acom * distal[None, :, :, None]
        # n[l, j, k] = I_k^w @ axis_j  (for k >= j)
        n = np.einsum("lkij,lmj->lmki", inertias, axis)  # (4, j, k, 3)
        n = n * distal[None, :, :, None]

        F_cols = f.sum(axis=2)  # (4, j, 3)
        N_cols = (n + _cross3(coms[:, None, :, :] - ob[None, None, None], f)).sum(axis=2)

        for l in range(4):
            for j in range(3):
                col = 6 + 3 * l + j
                Mp[0:3, col] = F_cols[l, j]
                Mp[3:6, col] = N_cols[l, j]
                Mp[col, 0:3] = F_cols[l, j]
                Mp[col, 3:6] = N_cols[l, j]
        # in-leg joint blocks: tau_i = axis_i . sum_k [n_jk + (x_k - o_i) x f_jk]
        for l in range(4):
            for j in range(3):
                for i in range(j + 1):
                    lev_i = coms[l] - oj[l, i][None]  # (k,3)
                    contrib = (n[l, j] + _cross3(lev_i, f[l, j])).sum(axis=0)
                    val = axis[l, i] @ contrib
                    Mp[6 + 3 * l + i, 6 + 3 * l + j] = val
                    Mp[6 + 3 * l + j, 6 + 3 * l + i] = val

        T = np.eye(NV)
        T[3:6, 3:6] = Rb
        return T.T @ Mp @ T

    # -- bias forces (recursive Newton-Euler) --------------------------------------

    def _rnea(self, kin: BodyKinematics, nu: np.ndarray,
              gravity: np.ndarray) -> np.ndarray:
        """Generalized force for zero acceleration: velocity products plus
        the static load of ``gravity``."""
        Rb = kin.base_rot
        ob = kin.base_pos
        w_base, v_base, w, v_com, v_origin = self._body_velocities(kin, nu)
        qd = nu[6:].reshape(4, 3)

        Ib_w = Rb @ self.trunk_inertia @ Rb.T
        f_total = self.trunk_mass * (-gravity)
        n_total = _cross3(w_base, Ib_w @ w_base)

        # angular accelerations with qdd = 0: aw_j = aw_parent + qd * (w_parent x a)
        aw_hip = qd[:, 0:1] * _cross3(np.broadcast_to(w_base, (4, 3)),
                                       kin.axis[:, 0])
        aw_thigh = aw_hip + qd[:, 1:2] * _cross3(w[:, 0], kin.axis[:, 1])
        aw_calf = aw_thigh + qd[:, 2:3] * _cross3(w[:, 1], kin.axis[:, 2])
        aw = np.stack([aw_hip, aw_thigh, aw_calf], axis=1)

        # origin accelerations (base acceleration zero)
        r_hip = kin.origin[:, 0] - ob[None]
        ao_hip = _cross3(np.broadcast_to(w_base, (4, 3)),
                          _cross3(np.broadcast_to(w_base, (4, 3)), r_hip))
        r_calf = kin.origin[:, 2] - kin.origin[:, 1]
        ao_calf = ao_hip + _cross3(aw_thigh, r_calf) + _cross3(
            w[:, 1], _cross3(w[:, 1], r_calf))
        ao = np.stack([ao_hip, ao_hip, ao_calf], axis=1)

        rc = kin.com - kin.origin
        a_com = ao + _cross3(aw, rc) + _cross3(w, _cross3(w, rc))
        f = self.link_masses[None, :, None] * (a_com - gravity[None, None])
        Iw_w = np.einsum("lkij,lkj->lki", kin.inertia_w, w)
        n = np.einsum("lkij,lkj->lki", kin.inertia_w, aw) + _cross3(w, Iw_w)

        f_total = f_total + f.sum(axis=(0, 1))
        n_total = n_total + (n + _cross3(kin.com - ob[None, None], f)).sum(axis=(0, 1))

        # joint torques: tau_j = axis_j . sum_{k>=j} [n_k + (x_k - o_j) x f_k]
        lever = kin.com[:, None, :, :] - kin.origin[:, :, None, :]  # (4,j,k,3)
        distal = np.triu(np.ones((3, 3)))[None, :, :, None]
        contrib = (n[:, None, :, :] + _cross3(lever, f[:, None, :, :])) * distal
        tau = np.einsum("lji,lji->lj", kin.axis, contrib.sum(axis=2)).reshape(-1)

        return np.concatenate([f_total, Rb.T @ n_total, tau])

    def bias_forces(self, kin: BodyKinematics,
                    nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(B, G): Coriolis/centrifugal vector and gravity vector.

        The equation of motion reads M(q) nudot + B + G = tau_generalized.
        """
        G = self._rnea(kin, np.zeros(NV), GRAVITY)
        BG = self._rnea(kin, nu, GRAVITY)
        return BG - G, G

    # -- energies -------------------------------------------------------------------

    def kinetic_energy(self, kin: BodyKinematics, nu: np.ndarray) -> float:
        Rb = kin.base_rot
        w_base, v_base, w, v_com, _ = self._body_velocities(kin, nu)
        Ib_w = Rb @ self.trunk_inertia @ Rb.T
        ke = 0.5 * self.trunk_mass * v_base @ v_base + 0.5 * w_base @ Ib_w @ w_base
        ke += 0.5 * np.einsum("k,lkj,lkj->", self.link_masses, v_com, v_com)
        ke += 0.5 * np.einsum("lkj,lkj->", np.einsum(
            "lkij,lkj->lki", kin.inertia_w, w), w)
        return float(ke)

    def potential_energy(self, kin: BodyKinematics) -> float:
        pe = -self.trunk_mass * GRAVITY[2] * kin.base_pos[2]
        pe += -GRAVITY[2] * np.einsum("k,lk->", self.link_masses, kin.com[:, :, 2])
        return float(pe)

    def system_com(self, kin: BodyKinematics) -> np.ndarray:
        c = self.trunk_mass * kin.base_pos + np.einsum(
            "k,lkj->j", self.link_masses, kin.com)
        return c / self.total_mass

    @property
    def link_inertias_batched(self):
        return self.link_inertias


def floating_base_dynamics(
    model: RobotModel, q: np.ndarray, qd: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(M, B, G) for an 18-vector generalized position and velocity.

    ``q`` is [base position (3); Z-Y-X Euler angles (3); joint angles (12)]
    and ``qd`` follows the mixed velocity convention of this module.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    dyn = FloatingBaseDynamics(model)
    base_quat = quat.from_euler_zyx(q[3], q[4], q[5])
    kin = dyn.kinematics(q[0:3], base_quat, q[6:])
    M = dyn.mass_matrix(kin)
    B, G = dyn.bias_forces(kin, qd)
    return M, B, G
