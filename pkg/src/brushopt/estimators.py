"""scikit-learn style wrappers around the generator and the optimisation loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .generator import generate
from .morphology import Brush, as_binary_grid, is_feasible, parse_brush


def check_brush(brush) -> Brush:
    """Accept a :class:`Brush` or a ``"shape:size"`` string."""
    return brush if isinstance(brush, Brush) else parse_brush(str(brush))


def check_reward(theta) -> np.ndarray:
    """Reward arrays are finite real 2D grids, or stacks of them."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim not in (2, 3) or theta.size == 0:
        raise ValueError(f"expected a 2D reward array or a stack of them, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("reward array contains NaN or inf")
    return theta


def check_design(x) -> np.ndarray:
    return as_binary_grid(x)


class FeasibleGenerator(TransformerMixin, BaseEstimator):
    """Maps reward arrays to brush-feasible ``±1`` designs.

    ``transform`` accepts one 2D reward array or a ``(n, h, w)`` stack.
    """

    def __init__(self, brush="circle:5", symmetry=(), tie_break=None):
        self.brush = brush
        self.symmetry = symmetry
        self.tie_break = tie_break

    def fit(self, X=None, y=None):
        self.brush_ = check_brush(self.brush)
        return self

    def transform(self, X):
        check_is_fitted(self, "brush_")
        theta = check_reward(X)
        run = lambda t: generate(t, self.brush_, symmetry=tuple(self.symmetry), tie_break=self.tie_break)
        if theta.ndim == 2:
            return run(theta)
        return np.stack([run(t) for t in theta])

    def score(self, X, y=None):
        """Fraction of generated designs that pass the feasibility check."""
        out = self.transform(X)
        designs = out[None] if out.ndim == 2 else out
        return float(np.mean([is_feasible(d, self.brush_) for d in designs]))


class InverseDesigner(BaseEstimator):
    """Runs the straight-through optimisation for a named or custom problem.

    ``fit`` takes no data; the problem definition is the training target.
    """

    def __init__(self, problem="bend", pitch_nm=20.0, brush="circle:5", beta=4.0, budget=300, seed=0,
                 stop_on_success=False, lr=0.01, beta1=0.667, beta2=0.9, eps=1e-8, symmetry=None):
        self.problem = problem
        self.pitch_nm = pitch_nm
        self.brush = brush
        self.beta = beta
        self.budget = budget
        self.seed = seed
        self.stop_on_success = stop_on_success
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.symmetry = symmetry

    def _config(self):
        from .optimize import OptimizeConfig

        return OptimizeConfig(
            problem=self.problem, pitch_nm=self.pitch_nm, brush=check_brush(self.brush).spec, beta=self.beta,
            symmetry=self.symmetry, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            budget=self.budget, seed=self.seed, stop_on_success=self.stop_on_success,
        )

    def fit(self, X=None, y=None):
        from .optimize import run_optimization

        self.trajectory_ = run_optimization(self._config())
        if not self.trajectory_.records:
            raise RuntimeError(self.trajectory_.error or "optimisation produced no designs")
        self.best_design_ = self.trajectory_.designs[self.trajectory_.best_step]
        self.first_success_ = self.trajectory_.first_success
        self.loss_curve_ = self.trajectory_.losses
        return self

    def predict(self, X=None):
        """The lowest-loss design found."""
        check_is_fitted(self, "best_design_")
        return self.best_design_
