"""Simulation world: ground model, contact parameters, disturbances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GroundPatch:
    """Axis-aligned rectangular height patch."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    height: float

    def contains(self, x: float, y: float) -> bool:
        return (self.x_range[0] <= x <= self.x_range[1]
                and self.y_range[0] <= y <= self.y_range[1])


@dataclass
class Impulse:
    """Body wrench applied over a short window."""

    t_start: float
    duration: float
    force: np.ndarray  # world frame, applied at the base origin
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_start + self.duration


@dataclass
class SimWorld:
    contact_stiffness: float = 2e4  # N/m
    damping_ratio: float = 1.0  # critical at 1.0
    friction: float = 0.8
    base_height: float = 0.0  # nominal flat-ground height
    patches: list[GroundPatch] = field(default_factory=list)
    impulses: list[Impulse] = field(default_factory=list)
    gravity: float = 9.81

    def __post_init__(self):
        if self.contact_stiffness <= 0 or self.damping_ratio <= 0:
            raise ValueError("contact stiffness and damping must be positive")
        if self.friction < 0:
            raise ValueError("friction must be nonnegative")

    def ground_height(self, x: float, y: float) -> float:
        h = self.base_height
        for patch in self.patches:
            if patch.contains(x, y):
                h = max(h, patch.height)
        return h

    def contact_damping(self, effective_mass: float) -> float:
        return 2.0 * self.damping_ratio * np.sqrt(
            self.contact_stiffness * effective_mass)

    def external_wrench(self, t: float) -> np.ndarray:
        w = np.zeros(6)
        for imp in self.impulses:
            if imp.active(t):
                w[0:3] += imp.force
                w[3:6] += imp.torque
        return w
