"""Robot description: masses, geometry, limits, joint-spring configuration.

All quantities are SI (kg, m, rad, N, N*m). The default parameter set is an
approximation of a small 12-joint quadruped; it is configuration, not ground
truth, and lives in ``data/default_robot.json``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

LEG_NAMES = ("FL", "FR", "RL", "RR")
JOINTS_PER_LEG = 3
NUM_JOINTS = 12


class RobotModelError(ValueError):
    """Raised when a robot description violates its invariants."""


@dataclass(frozen=True)
class SpringJointConfig:
    """Parallel-spring setup for the 3 joints of one leg, shared by all legs.

    ``engagement_sign`` selects the deflection side on which a unidirectional
    spring produces torque: the spring engages when
    sign * (q - rest) > 0, which is the compression side of the leg for the
    default (thigh +1, calf -1 with backward-bent knees).
    """

    stiffness: np.ndarray  # (3,) N*m/rad, [hip, thigh, calf], >= 0
    rest_angles: np.ndarray  # (3,) rad, defaults to the homing pose
    unidirectional: np.ndarray = field(
        default_factory=lambda: np.array([True, True, True])
    )
    engagement_sign: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 1.0, -1.0])
    )

    def __post_init__(self):
        object.__setattr__(self, "stiffness", np.asarray(self.stiffness, dtype=float))
        object.__setattr__(self, "rest_angles", np.asarray(self.rest_angles, dtype=float))
        object.__setattr__(self, "unidirectional", np.asarray(self.unidirectional, dtype=bool))
        object.__setattr__(self, "engagement_sign", np.asarray(self.engagement_sign, dtype=float))
        if np.any(self.stiffness < 0):
            raise RobotModelError("spring stiffness entries must be >= 0")

    @property
    def is_rigid(self) -> bool:
        return bool(np.all(self.stiffness == 0.0))

    def scaled(self, factor: float) -> "SpringJointConfig":
        return SpringJointConfig(
            stiffness=self.stiffness * float(factor),
            rest_angles=self.rest_angles.copy(),
            unidirectional=self.unidirectional.copy(),
            engagement_sign=self.engagement_sign.copy(),
        )


@dataclass(frozen=True)
class RobotModel:
    """Kinematic, inertial, and actuation description of the quadruped.

    ``hip_offsets`` maps leg name -> hip position in the body frame. The leg
    pairing groups the front pair as template leg 2 and the rear pair as
    template leg 1.
    """

    total_mass: float
    body_inertia: np.ndarray  # (3,3) in the body frame
    hip_offsets: dict[str, np.ndarray]
    thigh_length: float
    calf_length: float
    trunk_mass: float
    link_masses: np.ndarray  # (3,) per-leg [hip, thigh, calf]
    link_com_offsets: np.ndarray  # (3,3) per-link CoM in its own frame
    link_inertias: np.ndarray  # (3,3,3) per-link inertia about its CoM
    joint_limits_lower: np.ndarray  # (3,) per leg joint
    joint_limits_upper: np.ndarray
    joint_velocity_limit: float
    torque_limits: np.ndarray  # (3,) per leg joint, > 0
    homing_height: float
    knee_backward: dict[str, bool]
    spring: SpringJointConfig

    def __post_init__(self):
        if self.total_mass <= 0:
            raise RobotModelError("total_mass must be positive")
        I = np.asarray(self.body_inertia, dtype=float)
        if not np.allclose(I, I.T, atol=1e-12):
            raise RobotModelError("body_inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(I) <= 0):
            raise RobotModelError("body_inertia must be positive definite")
        if np.any(self.joint_limits_lower >= self.joint_limits_upper):
            raise RobotModelError("joint lower limits must be below upper limits")
        if np.any(self.torque_limits <= 0):
            raise RobotModelError("torque limits must be positive")
        if set(self.hip_offsets) != set(LEG_NAMES):
            raise RobotModelError(f"hip_offsets must cover exactly {LEG_NAMES}")

    # -- template pairing ---------------------------------------------------

    @property
    def leg_pairing(self) -> dict[int, tuple[str, str]]:
        """Template leg index -> pair of physical legs (1 rear, 2 front)."""
        return {1: ("RL", "RR"), 2: ("FL", "FR")}

    def template_hip_offset(self, template_leg: int) -> np.ndarray:
        pair = self.leg_pairing[template_leg]
        return 0.5 * (self.hip_offsets[pair[0]] + self.hip_offsets[pair[1]])

    # -- convenience --------------------------------------------------------

    @property
    def max_leg_length(self) -> float:
        return self.thigh_length + self.calf_length

    @property
    def min_leg_length(self) -> float:
        lo, hi = self.joint_limits_lower[2], self.joint_limits_upper[2]
        # leg length is monotone in |calf angle|; take the most folded limit
        worst = max(abs(lo), abs(hi))
        return float(
            np.sqrt(
                self.thigh_length**2
                + self.calf_length**2
                + 2 * self.thigh_length * self.calf_length * np.cos(worst)
            )
        )

    def reachable_leg_length(self) -> tuple[float, float]:
        """(min, max) hip-to-foot distance within the calf joint limits."""
        lo, hi = self.joint_limits_lower[2], self.joint_limits_upper[2]
        lengths = []
        for q3 in (lo, hi):
            lengths.append(
                np.sqrt(
                    self.thigh_length**2
                    + self.calf_length**2
                    + 2 * self.thigh_length * self.calf_length * np.cos(q3)
                )
            )
        return float(min(lengths)), float(max(lengths))

    def with_spring(self, spring: SpringJointConfig) -> "RobotModel":
        return RobotModel(
            **{**self.__dict__, "spring": spring}
        )


def _leg_sign(leg: str) -> float:
    """+1 for left legs, -1 for right legs (hip-roll mirror)."""
    return 1.0 if leg in ("FL", "RL") else -1.0


def homing_leg_angles(model: RobotModel, leg: str) -> np.ndarray:
    """Joint angles placing the foot directly below the hip at homing depth."""
    depth = model.homing_height
    reach = model.thigh_length + model.calf_length
    if depth >= reach:
        raise RobotModelError("homing height exceeds leg reach")
    # symmetric two-link bend: q3 = -2*q2 keeps the foot under the hip
    q2 = np.arccos(depth / reach) if model.thigh_length == model.calf_length else None
    if q2 is None:
        raise RobotModelError("homing pose assumes equal thigh and calf lengths")
    sign = -1.0 if model.knee_backward.get(leg, True) else 1.0
    return np.array([0.0, -sign * q2, sign * 2.0 * q2])


def homing_joint_vector(model: RobotModel) -> np.ndarray:
    """12-vector of homing joint angles in leg order FL, FR, RL, RR."""
    return np.concatenate([homing_leg_angles(model, leg) for leg in LEG_NAMES])


def _model_from_dict(d: dict) -> RobotModel:
    spring_d = d.get("spring", {})
    nominal = {
        "total_mass": float(d["total_mass"]),
        "body_inertia": np.asarray(d["body_inertia"], dtype=float),
        "hip_offsets": {k: np.asarray(v, dtype=float) for k, v in d["hip_offsets"].items()},
        "thigh_length": float(d["thigh_length"]),
        "calf_length": float(d["calf_length"]),
        "trunk_mass": float(d["trunk_mass"]),
        "link_masses": np.asarray(d["link_masses"], dtype=float),
        "link_com_offsets": np.asarray(d["link_com_offsets"], dtype=float),
        "link_inertias": np.asarray(d["link_inertias"], dtype=float),
        "joint_limits_lower": np.asarray(d["joint_limits_lower"], dtype=float),
        "joint_limits_upper": np.asarray(d["joint_limits_upper"], dtype=float),
        "joint_velocity_limit": float(d["joint_velocity_limit"]),
        "torque_limits": np.asarray(d["torque_limits"], dtype=float),
        "homing_height": float(d["homing_height"]),
        "knee_backward": {k: bool(v) for k, v in d.get(
            "knee_backward", {leg: True for leg in LEG_NAMES}).items()},
    }
    placeholder = SpringJointConfig(
        stiffness=np.zeros(3), rest_angles=np.zeros(3))
    model = RobotModel(spring=placeholder, **nominal)
    rest = spring_d.get("rest_angles")
    if rest is None:
        rest = homing_leg_angles(model, "FL")
    spring = SpringJointConfig(
        stiffness=np.asarray(spring_d.get("stiffness", [0.0, 0.0, 0.0]), dtype=float),
        rest_angles=np.asarray(rest, dtype=float),
        unidirectional=np.asarray(spring_d.get("unidirectional", [True, True, True])),
        engagement_sign=np.asarray(spring_d.get("engagement_sign", [1.0, 1.0, -1.0]), dtype=float),
    )
    return model.with_spring(spring)


def load_robot(path: str | None = None) -> RobotModel:
    """Load a robot parameter file (JSON); defaults to the packaged set."""
    if path is None:
        text = resources.files("springbok.data").joinpath("default_robot.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    return _model_from_dict(json.loads(text))
