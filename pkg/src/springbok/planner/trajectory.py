"""Knot-indexed trajectory containers and their CSV schemas."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COARSE_COLUMNS = (
    ["knot", "phase", "time", "dt"]
    + [f"pose_{c}" for c in ("x", "y", "z", "roll", "pitch", "yaw")]
    + [f"vel_{c}" for c in ("x", "y", "z", "wx", "wy", "wz")]
    + [f"acc_{c}" for c in ("x", "y", "z", "wx", "wy", "wz")]
    + [f"f1_{c}" for c in ("x", "y", "z")]
    + [f"f2_{c}" for c in ("x", "y", "z")]
)

PLANNED_COLUMNS = (
    ["knot", "phase", "time", "dt"]
    + [f"com_{c}" for c in ("x", "y", "z")]
    + [f"quat_{c}" for c in ("w", "x", "y", "z")]
    + [f"vel_{c}" for c in ("x", "y", "z")]
    + [f"omega_{c}" for c in ("x", "y", "z")]
    + [f"acc_{c}" for c in ("x", "y", "z", "wx", "wy", "wz")]
    + [f"q_rear_{j}" for j in ("hip", "thigh", "calf")]
    + [f"q_front_{j}" for j in ("hip", "thigh", "calf")]
    + [f"f1_{c}" for c in ("x", "y", "z")]
    + [f"f2_{c}" for c in ("x", "y", "z")]
)


@dataclass
class CoarseTrajectory:
    """Layer-1 output: body pose (position + Euler), rates, forces, timing."""

    poses: np.ndarray  # (N, 6)
    velocities: np.ndarray  # (N, 6) world linear + body angular
    accelerations: np.ndarray  # (N, 6)
    forces1: np.ndarray  # (N, 3), zero rows off contact
    forces2: np.ndarray  # (N, 3)
    step_sizes: np.ndarray  # per phase, s
    phase_of_knot: np.ndarray  # (N,)
    phase_kinds: list[str]
    contact_flags: np.ndarray  # (N, 2)
    template_feet: np.ndarray  # (2, 3)
    metadata: dict = field(default_factory=dict)

    @property
    def n_knots(self) -> int:
        return self.poses.shape[0]

    def knot_dt(self) -> np.ndarray:
        return self.step_sizes[self.phase_of_knot]

    def knot_times(self) -> np.ndarray:
        dt = self.knot_dt()
        t = np.concatenate([[0.0], np.cumsum(dt[:-1])])
        return t

    def phase_durations(self) -> np.ndarray:
        counts = np.bincount(self.phase_of_knot, minlength=len(self.step_sizes))
        return counts * self.step_sizes

    def write_csv(self, path: str | Path) -> None:
        times = self.knot_times()
        dt = self.knot_dt()
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(COARSE_COLUMNS)
            for k in range(self.n_knots):
                row = [k, self.phase_kinds[k], f"{times[k]:.9f}", f"{dt[k]:.9f}"]
                row += [f"{v:.12g}" for v in self.poses[k]]
                row += [f"{v:.12g}" for v in self.velocities[k]]
                row += [f"{v:.12g}" for v in self.accelerations[k]]
                row += [f"{v:.12g}" for v in self.forces1[k]]
                row += [f"{v:.12g}" for v in self.forces2[k]]
                w.writerow(row)


@dataclass
class PlannedTrajectory:
    """Layer-2 output: singularity-free reference handed to the controller."""

    com: np.ndarray  # (N, 3)
    quaternions: np.ndarray  # (N, 4) unit
    com_velocities: np.ndarray  # (N, 3)
    angular_velocities: np.ndarray  # (N, 3) body frame
    accelerations: np.ndarray  # (N, 6)
    joint_angles: np.ndarray  # (N, 6): rear (hip,thigh,calf), front (hip,thigh,calf)
    forces1: np.ndarray  # (N, 3)
    forces2: np.ndarray  # (N, 3)
    step_sizes: np.ndarray
    phase_of_knot: np.ndarray
    phase_kinds: list[str]
    contact_flags: np.ndarray
    template_feet: np.ndarray
    metadata: dict = field(default_factory=dict)
    total_grf1: np.ndarray | None = None  # (N, 3) actuation + spring, world
    total_grf2: np.ndarray | None = None

    @property
    def n_knots(self) -> int:
        return self.com.shape[0]

    def knot_dt(self) -> np.ndarray:
        return self.step_sizes[self.phase_of_knot]

    def knot_times(self) -> np.ndarray:
        dt = self.knot_dt()
        return np.concatenate([[0.0], np.cumsum(dt[:-1])])

    def phase_durations(self) -> np.ndarray:
        counts = np.bincount(self.phase_of_knot, minlength=len(self.step_sizes))
        return counts * self.step_sizes

    def duration(self) -> float:
        return float(np.sum(self.knot_dt()))

    def joint_vector_12(self, k: int) -> np.ndarray:
        """Expand the 6 template joints to 12 joints (FL, FR, RL, RR).

        Pair legs share thigh/calf angles; hip roll mirrors left/right.
        """
        rear = self.joint_angles[k, 0:3]
        front = self.joint_angles[k, 3:6]
        fl = front.copy()
        fr = front * np.array([-1.0, 1.0, 1.0])
        rl = rear.copy()
        rr = rear * np.array([-1.0, 1.0, 1.0])
        return np.concatenate([fl, fr, rl, rr])

    def write_csv(self, path: str | Path) -> None:
        times = self.knot_times()
        dt = self.knot_dt()
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(PLANNED_COLUMNS)
            for k in range(self.n_knots):
                row = [k, self.phase_kinds[k], f"{times[k]:.9f}", f"{dt[k]:.9f}"]
                row += [f"{v:.12g}" for v in self.com[k]]
                row += [f"{v:.12g}" for v in self.quaternions[k]]
                row += [f"{v:.12g}" for v in self.com_velocities[k]]
                row += [f"{v:.12g}" for v in self.angular_velocities[k]]
                row += [f"{v:.12g}" for v in self.accelerations[k]]
                row += [f"{v:.12g}" for v in self.joint_angles[k]]
                row += [f"{v:.12g}" for v in self.forces1[k]]
                row += [f"{v:.12g}" for v in self.forces2[k]]
                w.writerow(row)

    def write_metadata(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.metadata, f, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_planned_csv(path: str | Path) -> PlannedTrajectory:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    n = len(rows)
    com = np.zeros((n, 3))
    quats = np.zeros((n, 4))
    vel = np.zeros((n, 3))
    omega = np.zeros((n, 3))
    acc = np.zeros((n, 6))
    qj = np.zeros((n, 6))
    f1 = np.zeros((n, 3))
    f2 = np.zeros((n, 3))
    kinds = []
    dts = np.zeros(n)
    for k, r in enumerate(rows):
        kinds.append(r["phase"])
        dts[k] = float(r["dt"])
        com[k] = [float(r[f"com_{c}"]) for c in ("x", "y", "z")]
        quats[k] = [float(r[f"quat_{c}"]) for c in ("w", "x", "y", "z")]
        vel[k] = [float(r[f"vel_{c}"]) for c in ("x", "y", "z")]
        omega[k] = [float(r[f"omega_{c}"]) for c in ("x", "y", "z")]
        acc[k] = [float(r[f"acc_{c}"]) for c in ("x", "y", "z", "wx", "wy", "wz")]
        qj[k] = ([float(r[f"q_rear_{j}"]) for j in ("hip", "thigh", "calf")]
                 + [float(r[f"q_front_{j}"]) for j in ("hip", "thigh", "calf")])
        f1[k] = [float(r[f"f1_{c}"]) for c in ("x", "y", "z")]
        f2[k] = [float(r[f"f2_{c}"]) for c in ("x", "y", "z")]
    # reconstruct per-phase structure from the kind sequence
    phase_idx = np.zeros(n, dtype=int)
    step_sizes = []
    current = 0
    for k in range(n):
        if k > 0 and kinds[k] != kinds[k - 1]:
            current += 1
        phase_idx[k] = current
        if current == len(step_sizes):
            step_sizes.append(dts[k])
    contact = np.array([_contact_of(kind) for kind in kinds])
    return PlannedTrajectory(
        com=com, quaternions=quats, com_velocities=vel, angular_velocities=omega,
        accelerations=acc, joint_angles=qj, forces1=f1, forces2=f2,
        step_sizes=np.array(step_sizes), phase_of_knot=phase_idx,
        phase_kinds=kinds, contact_flags=contact,
        template_feet=np.zeros((2, 3)), metadata={})


def _contact_of(kind: str) -> tuple[bool, bool]:
    from .schedule import _PHASE_CONTACT

    return _PHASE_CONTACT[kind]
