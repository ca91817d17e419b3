"""Inverse design of photonic components with brush-based length-scale guarantees."""

from .generator import InconsistentDesignError, compute_states, generate, random_feasible, touch_reward
from .morphology import (
    PADDED,
    BorderMode,
    Brush,
    dilate,
    erode,
    is_feasible,
    make_brush,
    minimum_length_scale,
    opening,
    parse_brush,
)
from .objective import ScatteringSpec, SpecEntry, loss_gradient, scattering_loss, spec_satisfied

__version__ = "0.1.0"

__all__ = [
    "PADDED",
    "BorderMode",
    "Brush",
    "InconsistentDesignError",
    "ScatteringSpec",
    "SpecEntry",
    "compute_states",
    "dilate",
    "erode",
    "generate",
    "is_feasible",
    "loss_gradient",
    "make_brush",
    "minimum_length_scale",
    "opening",
    "parse_brush",
    "random_feasible",
    "scattering_loss",
    "spec_satisfied",
    "touch_reward",
]
