"""Inverse design loop: latent -> transform -> symmetrize -> generator -> simulation.

The generator is not differentiable, so gradients with respect to the design
are passed back through a smooth estimator with the same form as the
transform (straight-through estimation) and the latent is updated with Adam.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .generator import generate
from .morphology import Brush, correlate, correlate_adjoint, is_feasible, parse_brush

log = logging.getLogger(__name__)

SYMMETRIES = ("horizontal", "vertical", "diagonal")
CONFIG_SCHEMA_VERSION = 1


class NonFiniteGradientError(FloatingPointError):
    """The simulation returned a gradient containing NaN or inf."""


@dataclasses.dataclass(frozen=True)
class TransformConfig:
    brush: Brush
    beta: float = 4.0
    symmetry: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        bad = set(self.symmetry) - set(SYMMETRIES)
        if bad:
            raise ValueError(f"unknown symmetry {sorted(bad)}")


# -- transform and estimator ------------------------------------------------------


def transform(latent: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """``tanh(beta * (latent correlated with the brush footprint))``, zero padded."""
    latent = np.asarray(latent, dtype=float)
    if not np.all(np.isfinite(latent)):
        raise ValueError("latent must be finite")
    return np.tanh(cfg.beta * correlate(latent, cfg.brush.offsets))


def transform_vjp(upstream: np.ndarray, latent: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """Vector-Jacobian product of :func:`transform` at ``latent``."""
    y = transform(latent, cfg)
    return correlate_adjoint(cfg.beta * (1 - y**2) * upstream, cfg.brush.offsets)


def estimator(theta: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """Smooth stand-in for the generator used only for gradients."""
    return transform(theta, cfg)


def ste_backward(upstream: np.ndarray, theta: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """``dL/dtheta`` from ``dL/d(design)`` through the estimator evaluated at ``theta``."""
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != np.shape(theta):
        raise ValueError("upstream gradient and theta shapes differ")
    return transform_vjp(upstream, theta, cfg)


def _group_permutations(shape, symmetry) -> List[np.ndarray]:
    h, w = shape
    idx = np.arange(h * w).reshape(shape)
    gens = []
    for s in symmetry:
        if s == "horizontal":
            gens.append(idx[:, ::-1].ravel())
        elif s == "vertical":
            gens.append(idx[::-1, :].ravel())
        elif s == "diagonal":
            if h != w:
                raise ValueError("diagonal symmetry requires a square grid")
            gens.append(idx.T.ravel())
        else:
            raise ValueError(f"unknown symmetry {s!r}")
    group = {tuple(idx.ravel())}
    frontier = [idx.ravel()]
    while frontier:
        p = frontier.pop()
        for g in gens:
            q = p[g]
            if tuple(q) not in group:
                group.add(tuple(q))
                frontier.append(q)
    return [np.array(p) for p in sorted(group)]


def symmetrize(theta: np.ndarray, symmetry: Sequence[str]) -> np.ndarray:
    """Average of ``theta`` over the group generated by the given mirrors.

    Orbit values are sorted before a pairwise sum, so the result is exactly
    symmetric and exactly idempotent in floating point.
    """
    theta = np.asarray(theta, dtype=float)
    if not symmetry:
        return theta.copy()
    perms = _group_permutations(theta.shape, tuple(symmetry))
    stack = np.sort(np.stack([theta.ravel()[p] for p in perms]), axis=0)
    while len(stack) > 1:  # group order is a power of two
        stack = stack[0::2] + stack[1::2]
    return (stack[0] / len(perms)).reshape(theta.shape)


def symmetrize_vjp(upstream: np.ndarray, symmetry: Sequence[str]) -> np.ndarray:
    # the group average is self-adjoint
    return symmetrize(upstream, symmetry)


def reward_array(latent: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    return symmetrize(transform(latent, cfg), cfg.symmetry)


def latent_gradient(design_grad: np.ndarray, latent: np.ndarray, theta: np.ndarray, cfg: TransformConfig) -> np.ndarray:
    """Chain ``dL/d(design)`` back to the latent through estimator, symmetrize and transform."""
    g_theta = symmetrize_vjp(ste_backward(design_grad, theta, cfg), cfg.symmetry)
    return transform_vjp(g_theta, latent, cfg)


# -- initialisation and Adam ------------------------------------------------------------


def init_latent(shape, cfg: TransformConfig, seed=None, noise: float = 0.01, bias0: float = 1e-3, max_doublings: int = 40):
    """Seeded random latent plus the smallest doubled bias giving an all-solid first design."""
    rng = np.random.default_rng(seed)
    base = noise * rng.standard_normal(tuple(shape))
    bias = bias0
    for _ in range(max_doublings):
        latent = base + bias
        if np.all(generate(reward_array(latent, cfg), cfg.brush, symmetry=cfg.symmetry) == 1):
            return latent, bias
        bias *= 2
    raise RuntimeError("no bias produced an all-solid initial design")


@dataclasses.dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.01
    beta1: float = 0.667
    beta2: float = 0.9
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, **kw) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), **kw)


def adam_step(state: AdamState, grad: np.ndarray, latent: np.ndarray) -> Tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns new state and latent."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != latent.shape or grad.shape != state.m.shape:
        raise ValueError("gradient, latent and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("non-finite gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    new_latent = latent - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return dataclasses.replace(state, m=m, v=v, step=t), new_latent


# -- configuration --------------------------------------------------------------------


@dataclasses.dataclass
class OptimizeConfig:
    problem: object = "bend"  # name, dict, or path to a JSON geometry
    pitch_nm: float = 10.0
    brush: str = "circle:10"
    beta: float = 4.0
    symmetry: Optional[Tuple[str, ...]] = None  # None: the problem's own
    lr: float = 0.01
    beta1: float = 0.667
    beta2: float = 0.9
    eps: float = 1e-8
    budget: int = 300
    seed: int = 0
    stop_on_success: bool = False
    w_valid_units: str = "amplitude"
    output_dir: Optional[str] = None
    schema_version: int = CONFIG_SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version {self.schema_version}")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.symmetry is not None:
            self.symmetry = tuple(self.symmetry)
        parse_brush(self.brush)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["symmetry"] is not None:
            d["symmetry"] = list(d["symmetry"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizeConfig":
        d = dict(d)
        d.setdefault("schema_version", CONFIG_SCHEMA_VERSION)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "OptimizeConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


# -- run ----------------------------------------------------------------------------


def design_hash(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype=np.int8).tobytes()).hexdigest()[:16]


@dataclasses.dataclass
class StepRecord:
    step: int
    loss: float
    spec_ok: bool
    design_hash: str
    feasible: bool
    s: Dict[Tuple[int, int, float], complex]


@dataclasses.dataclass
class Trajectory:
    records: List[StepRecord] = dataclasses.field(default_factory=list)
    designs: List[np.ndarray] = dataclasses.field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def first_success(self) -> Optional[int]:
        return next((r.step for r in self.records if r.spec_ok), None)

    @property
    def achieved(self) -> bool:
        return self.first_success is not None

    @property
    def best_step(self) -> int:
        return int(np.argmin(self.losses))

    @property
    def all_feasible(self) -> bool:
        return all(r.feasible for r in self.records)


def _resolve_problem(cfg: OptimizeConfig):
    from .problems import ProblemDefinition, load_problem, standard_problem

    if isinstance(cfg.problem, str) and not cfg.problem.endswith(".json"):
        return standard_problem(cfg.problem, cfg.pitch_nm, cfg.w_valid_units)
    return load_problem(cfg.problem, cfg.pitch_nm)


def run_optimization(
    cfg: OptimizeConfig,
    problem=None,
    callback: Optional[Callable[[StepRecord, np.ndarray], None]] = None,
) -> Trajectory:
    """Optimise ``problem`` for ``cfg.budget`` Adam steps.

    ``budget + 1`` designs are evaluated: the all-solid initial design and
    one per update. A solver failure or non-finite gradient ends the run with
    ``failed`` set and the partial trajectory kept.
    """
    from .fdfd import SolverError

    problem = problem if problem is not None else _resolve_problem(cfg)
    brush = parse_brush(cfg.brush)
    symmetry = tuple(problem.symmetry if cfg.symmetry is None else cfg.symmetry)
    tcfg = TransformConfig(brush, cfg.beta, symmetry)
    latent, _ = init_latent(problem.design_shape, tcfg, cfg.seed)
    adam = AdamState.zeros(latent.shape, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    traj = Trajectory()

    for step in range(cfg.budget + 1):
        theta = reward_array(latent, tcfg)
        design = generate(theta, brush, symmetry=symmetry)
        try:
            ev = problem.evaluate(design)
        except (SolverError, FloatingPointError) as exc:
            traj.failed, traj.error = True, f"step {step}: {exc}"
            log.error("simulation failed at step %d: %s", step, exc)
            break
        rec = StepRecord(step, ev.loss, ev.spec_ok, design_hash(design), is_feasible(design, brush), ev.s)
        traj.records.append(rec)
        traj.designs.append(design)
        log.info("step %d loss %.6g spec_ok %s", step, ev.loss, ev.spec_ok)
        if callback is not None:
            callback(rec, design)
        if step == cfg.budget or (cfg.stop_on_success and ev.spec_ok):
            break
        try:
            grad = latent_gradient(ev.grad, latent, theta, tcfg)
            adam, latent = adam_step(adam, grad, latent)
        except NonFiniteGradientError as exc:
            traj.failed, traj.error = True, f"step {step}: {exc}"
            break
    return traj


def success_curve(trajectories: Sequence[Trajectory], budget: int) -> np.ndarray:
    """Fraction of runs that achieved the target at or before each step."""
    firsts = [t.first_success for t in trajectories]
    steps = np.arange(budget + 1)
    return np.array([np.mean([f is not None and f <= s for f in firsts]) for s in steps])
