"""Deterministic simulator and closed-loop execution."""

from .world import GroundPatch, Impulse, SimWorld
from .engine import (
    ContactEvent,
    SimState,
    SimulationError,
    Simulator,
    detect_events,
)
from .closed_loop import ControlLog, LoopConfig, LOG_COLUMNS, run_closed_loop

__all__ = [
    "GroundPatch",
    "Impulse",
    "SimWorld",
    "ContactEvent",
    "SimState",
    "SimulationError",
    "Simulator",
    "detect_events",
    "ControlLog",
    "LoopConfig",
    "LOG_COLUMNS",
    "run_closed_loop",
]
