"""Contact schedules and task specifications for the jump planner."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PHASE_KINDS = ("full-stance", "rear-stance", "flight", "landing")

# contact flags per phase kind: (template leg 1 = rear pair, leg 2 = front pair)
_PHASE_CONTACT = {
    "full-stance": (True, True),
    "rear-stance": (True, False),
    "flight": (False, False),
    "landing": (True, True),
}


@dataclass(frozen=True)
class Phase:
    kind: str
    knots: int
    step_bounds: tuple[float, float] = (0.005, 0.05)

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.knots < 2:
            raise ValueError("each phase needs at least 2 knots")
        if not (0 < self.step_bounds[0] <= self.step_bounds[1]):
            raise ValueError("invalid step-size bounds")

    @property
    def contact(self) -> tuple[bool, bool]:
        return _PHASE_CONTACT[self.kind]


@dataclass(frozen=True)
class ContactSchedule:
    phases: tuple[Phase, ...]

    def __post_init__(self):
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        for p in self.phases:
            if p.kind == "flight" and any(p.contact):
                raise ValueError("flight phases cannot have contact flags")

    @property
    def total_knots(self) -> int:
        return sum(p.knots for p in self.phases)

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    def phase_of_knot(self) -> np.ndarray:
        """(N,) phase index per knot."""
        idx = []
        for i, p in enumerate(self.phases):
            idx.extend([i] * p.knots)
        return np.array(idx, dtype=int)

    def contact_flags(self) -> np.ndarray:
        """(N, 2) boolean contact flags per knot and template leg."""
        flags = []
        for p in self.phases:
            flags.extend([p.contact] * p.knots)
        return np.array(flags, dtype=bool)

    def knot_phase_kind(self) -> list[str]:
        kinds = []
        for p in self.phases:
            kinds.extend([p.kind] * p.knots)
        return kinds

    @property
    def last_contact_knot(self) -> int:
        flags = self.contact_flags()
        in_contact = np.where(flags.any(axis=1))[0]
        if len(in_contact) == 0:
            raise ValueError("schedule has no contact knots")
        return int(in_contact[-1])

    @property
    def flight_knots(self) -> np.ndarray:
        flags = self.contact_flags()
        return np.where(~flags.any(axis=1))[0]

    @property
    def peak_knot(self) -> int:
        """Middle-of-flight knot used by the peak waypoint cost."""
        fl = self.flight_knots
        if len(fl) == 0:
            raise ValueError("schedule has no flight phase")
        return int(fl[0] + len(fl) // 2 - 1) if len(fl) > 1 else int(fl[0])


def pronk_schedule(n_stance: int = 20, n_flight: int = 20,
                   step_bounds=(0.005, 0.05)) -> ContactSchedule:
    return ContactSchedule(phases=(
        Phase("full-stance", n_stance, step_bounds),
        Phase("flight", n_flight, step_bounds),
    ))


def froggy_schedule(n_stance: int = 20, n_rear: int = 10, n_flight: int = 20,
                    step_bounds=(0.005, 0.05)) -> ContactSchedule:
    return ContactSchedule(phases=(
        Phase("full-stance", n_stance, step_bounds),
        Phase("rear-stance", n_rear, step_bounds),
        Phase("flight", n_flight, step_bounds),
    ))


@dataclass
class TaskSpec:
    """Waypoints, bounds, and weights for one jump task.

    Pose vectors are [x, y, z, roll, pitch, yaw]; the waypoint bands are
    additive: |X - ref| <= slack * scale with per-component scale (1 m for
    positions, 1 rad for angles).
    """

    initial_pose: np.ndarray
    initial_velocity: np.ndarray
    takeoff_pose: np.ndarray
    landing_pose: np.ndarray
    peak_pose: np.ndarray
    takeoff_height: float
    slack: float = 0.05
    friction: float = 0.6
    max_vertical_force: float = 500.0
    leg_length_bounds: tuple[float, float] = (0.12, 0.38)
    pose_bounds: tuple[np.ndarray, np.ndarray] | None = None
    velocity_bounds: tuple[np.ndarray, np.ndarray] | None = None
    reference_durations: np.ndarray | None = None  # per phase, s
    # cost weights
    w_force1: float = 1e-4
    w_force2: float = 1e-4
    w_acc: float = 1e-3
    w_pose: float = 1e-1
    w_vel: float = 1e-2
    w_peak: float = 2e2
    w_flight_height: float = 1e1
    w_land: float = 2e2
    w_duration: float = 1e4
    # layer-2 additions
    w_quat: float = 1e2
    w_omega: float = 1e0
    w_joint: float = 1e0
    template_feet: np.ndarray | None = None  # (2,3) world stance feet

    def __post_init__(self):
        for name in ("initial_pose", "initial_velocity", "takeoff_pose",
                     "landing_pose", "peak_pose"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (0.0 < self.slack < 1.0):
            raise ValueError("slack must lie in (0, 1)")
        if self.friction <= 0:
            raise ValueError("friction must be positive")
        if self.pose_bounds is None:
            lim = np.deg2rad(85.0)
            self.pose_bounds = (
                np.array([-2.0, -2.0, 0.15, -lim, -lim, -2 * np.pi]),
                np.array([2.0, 2.0, 1.5, lim, lim, 2 * np.pi]),
            )
        if self.velocity_bounds is None:
            self.velocity_bounds = (
                np.array([-6.0, -6.0, -6.0, -25.0, -25.0, -25.0]),
                np.array([6.0, 6.0, 6.0, 25.0, 25.0, 25.0]),
            )
        weights = [self.w_force1, self.w_force2, self.w_acc, self.w_pose,
                   self.w_vel, self.w_peak, self.w_flight_height, self.w_land,
                   self.w_duration, self.w_quat, self.w_omega, self.w_joint]
        if any(w < 0 for w in weights):
            raise ValueError("cost weights must be nonnegative")

    def waypoint_band(self) -> np.ndarray:
        """Additive half-width of the waypoint bands per pose component."""
        return self.slack * np.ones(6)
