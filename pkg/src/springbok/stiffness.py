"""Joint-space springs mapped to template-leg Cartesian stiffness.

The map rests on matching elastic potential energy: for a joint deflection
dq and leg-vector deflection dl = J dq,

    0.5 dq^T k dq  =  0.5 dl^T k_equ dl    with    k_equ = J^-T k J^-1.

The template scalar constant combines the diagonal of k_equ and doubles it
because each template leg stands for a pair of physical legs. Because the
Jacobian is configuration dependent, the scalar varies across the workspace;
sampling plus a cubic fit in leg length summarizes that variation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .model import (
    LEG_NAMES,
    RobotModel,
    WorkspaceError,
    homing_leg_angles,
    joint_limit_violation,
    leg_forward_kinematics,
    leg_inverse_kinematics,
    leg_jacobian,
)
from . import quaternion as quat

logger = logging.getLogger(__name__)

# Workspace sampling box: body position (m) and inclination (rad) intervals.
SAMPLING_BOX_POSITION = np.array([[-0.1, 0.1], [-0.1, 0.1], [0.15, 0.37]])
SAMPLING_BOX_INCLINATION = np.deg2rad(np.array([[-30.0, 30.0]] * 3))

_TEMPLATE_LEG_REPRESENTATIVE = {1: "RL", 2: "FL"}


class StiffnessError(ValueError):
    pass


class SingularConfigurationError(StiffnessError):
    """Leg Jacobian is singular; the equivalent stiffness is undefined."""


def equivalent_stiffness_matrix(J: np.ndarray, k_joint: np.ndarray) -> np.ndarray:
    """Cartesian stiffness J^-T k J^-1 for one leg; symmetric PSD."""
    J = np.asarray(J, dtype=float)
    if abs(np.linalg.det(J)) < 1e-10:
        raise SingularConfigurationError("singular leg Jacobian")
    Ji = np.linalg.inv(J)
    k = np.asarray(k_joint, dtype=float)
    if k.ndim == 1:
        k = np.diag(k)
    out = Ji.T @ k @ Ji
    return 0.5 * (out + out.T)


def scalar_template_stiffness(k_equ: np.ndarray, extra_doubling: bool = False) -> float:
    """Template scalar constant: 2 sqrt(sum of squared diagonal entries).

    The factor 2 accounts for the two physical legs behind each template
    leg. ``extra_doubling`` applies one more factor 2 on top (off by
    default; see the module notes on the homing-value convention).
    """
    k_equ = np.asarray(k_equ, dtype=float)
    d = np.diagonal(k_equ)
    ks = 2.0 * float(np.sqrt(np.sum(d**2)))
    return 2.0 * ks if extra_doubling else ks


@dataclass
class StiffnessSampleSet:
    """Workspace samples for one template leg."""

    template_leg: int
    leg_lengths: np.ndarray  # (n,)
    stiffness: np.ndarray  # (n,) scalar template constants
    poses: np.ndarray  # (n, 6) body position + rpy used for each sample
    skipped: int = 0

    def __post_init__(self):
        if np.any(self.leg_lengths <= 0):
            raise StiffnessError("leg lengths must be positive")
        if not np.all(np.isfinite(self.stiffness)) or np.any(self.stiffness < 0):
            raise StiffnessError("stiffness samples must be finite and >= 0")

    def __len__(self) -> int:
        return len(self.leg_lengths)


@dataclass
class StiffnessPolynomial:
    """Polynomial stiffness-vs-leg-length fit, clamped at zero."""

    coefficients: np.ndarray  # highest degree first (np.polyval order)
    length_interval: tuple[float, float]
    residual_rms: float = 0.0
    residual_max: float = 0.0

    def __call__(self, length: float | np.ndarray) -> float | np.ndarray:
        return stiffness_at_length(self, length)


def homing_foot_positions(model: RobotModel) -> dict[str, np.ndarray]:
    """World foot positions in the homing stance (body at homing height)."""
    base = np.array([0.0, 0.0, model.homing_height])
    out = {}
    for leg in LEG_NAMES:
        p_body = leg_forward_kinematics(model, homing_leg_angles(model, leg), leg)
        out[leg] = base + p_body
    return out


def template_foot_positions(model: RobotModel) -> np.ndarray:
    """(2, 3) template feet: midpoints of each pair's homing feet (world)."""
    feet = homing_foot_positions(model)
    out = np.zeros((2, 3))
    for i, template_leg in enumerate((1, 2)):
        pair = model.leg_pairing[template_leg]
        out[i] = 0.5 * (feet[pair[0]] + feet[pair[1]])
    return out


def _sample_stiffness_at_pose(
    model: RobotModel, pose: np.ndarray, feet_world: dict[str, np.ndarray],
    template_feet: np.ndarray, k_joint: np.ndarray, extra_doubling: bool,
) -> list[tuple[int, float, float]]:
    """Per template leg (index, length, scalar stiffness) for one body pose."""
    c = pose[:3]
    R = quat.to_rotation_matrix(quat.from_euler_zyx(*pose[3:]))
    results = []
    for i, template_leg in enumerate((1, 2)):
        leg = _TEMPLATE_LEG_REPRESENTATIVE[template_leg]
        foot_body = R.T @ (feet_world[leg] - c)
        q_leg = leg_inverse_kinematics(model, foot_body, leg)
        if np.any(joint_limit_violation(model, q_leg) > 0):
            raise WorkspaceError("pose violates joint limits")
        J = leg_jacobian(model, q_leg, leg)
        k_equ = equivalent_stiffness_matrix(J, k_joint)
        ks = scalar_template_stiffness(k_equ, extra_doubling=extra_doubling)
        length = float(np.linalg.norm(c - template_feet[i]))
        results.append((template_leg, length, ks))
    return results


def sample_workspace(
    model: RobotModel,
    n_samples: int = 5000,
    seed: int = 0,
    extra_doubling: bool = False,
) -> dict[int, StiffnessSampleSet]:
    """Sample body poses over the workspace box and map joint springs.

    Feet stay fixed at the homing positions. Poses that are unreachable,
    violate joint limits, or sit at singular Jacobians are skipped and
    counted. Low-discrepancy (Sobol) sampling keeps coverage reproducible.
    """
    feet_world = homing_foot_positions(model)
    template_feet = template_foot_positions(model)
    k_joint = model.spring.stiffness
    lows = np.concatenate([SAMPLING_BOX_POSITION[:, 0], SAMPLING_BOX_INCLINATION[:, 0]])
    highs = np.concatenate([SAMPLING_BOX_POSITION[:, 1], SAMPLING_BOX_INCLINATION[:, 1]])
    data: dict[int, dict[str, list]] = {
        1: {"l": [], "k": [], "p": []},
        2: {"l": [], "k": [], "p": []},
    }
    skipped = 0
    if n_samples > 0:
        sampler = qmc.Sobol(d=6, scramble=True, seed=seed)
        unit = sampler.random(n_samples)
        poses = qmc.scale(unit, lows, highs)
        # homing height recentres the z interval: the box is absolute height
        for pose in poses:
            try:
                rows = _sample_stiffness_at_pose(
                    model, pose, feet_world, template_feet, k_joint, extra_doubling)
            except (WorkspaceError, SingularConfigurationError):
                skipped += 1
                continue
            for template_leg, length, ks in rows:
                data[template_leg]["l"].append(length)
                data[template_leg]["k"].append(ks)
                data[template_leg]["p"].append(pose)
        if not data[1]["l"] and not data[2]["l"]:
            raise StiffnessError("all workspace samples were infeasible")
    out = {}
    for template_leg in (1, 2):
        d = data[template_leg]
        out[template_leg] = StiffnessSampleSet(
            template_leg=template_leg,
            leg_lengths=np.array(d["l"], dtype=float),
            stiffness=np.array(d["k"], dtype=float),
            poses=np.array(d["p"], dtype=float).reshape(-1, 6),
            skipped=skipped,
        )
    return out


def fit_stiffness_polynomial(
    samples: StiffnessSampleSet | tuple[np.ndarray, np.ndarray], degree: int = 3
) -> StiffnessPolynomial:
    """Least-squares polynomial of stiffness against leg length."""
    if isinstance(samples, StiffnessSampleSet):
        lengths, values = samples.leg_lengths, samples.stiffness
    else:
        lengths, values = np.asarray(samples[0], dtype=float), np.asarray(samples[1], dtype=float)
    distinct = np.unique(np.round(lengths, 12))
    if len(distinct) < degree + 1:
        raise StiffnessError(
            f"need at least {degree + 1} distinct leg lengths, got {len(distinct)}")
    # centered/scaled design matrix for conditioning, coefficients mapped back
    V = np.vander(lengths, degree + 1)
    rank = np.linalg.matrix_rank(V)
    if rank < degree + 1:
        raise StiffnessError("rank-deficient design matrix for the polynomial fit")
    coeffs, _, _, _ = np.linalg.lstsq(V, values, rcond=None)
    fit = np.polyval(coeffs, lengths)
    resid = values - fit
    return StiffnessPolynomial(
        coefficients=coeffs,
        length_interval=(float(lengths.min()), float(lengths.max())),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        residual_max=float(np.abs(resid).max()),
    )


def stiffness_at_length(poly: StiffnessPolynomial, length) -> float | np.ndarray:
    """Evaluate the fit, clamped at zero; warns outside the fitted interval."""
    arr = np.asarray(length, dtype=float)
    lo, hi = poly.length_interval
    if np.any(arr < lo - 1e-12) or np.any(arr > hi + 1e-12):
        logger.warning(
            "stiffness evaluated outside fitted interval [%.3f, %.3f]; clamping", lo, hi)
    clamped = np.clip(arr, lo, hi)
    val = np.maximum(np.polyval(poly.coefficients, clamped), 0.0)
    return float(val) if np.isscalar(length) or arr.ndim == 0 else val


def homing_template_stiffness(
    model: RobotModel, extra_doubling: bool = False
) -> dict[int, float]:
    """Scalar template stiffness evaluated directly at the homing pose."""
    out = {}
    for template_leg, leg in _TEMPLATE_LEG_REPRESENTATIVE.items():
        q_leg = homing_leg_angles(model, leg)
        J = leg_jacobian(model, q_leg, leg)
        k_equ = equivalent_stiffness_matrix(J, model.spring.stiffness)
        out[template_leg] = scalar_template_stiffness(k_equ, extra_doubling=extra_doubling)
    return out
