"""Conditional generator of brush-feasible designs.

A design is built by placing solid and void brush *touches* one at a time.
Before every placement the touch and pixel states are recomputed from the
touches made so far:

* existing pixels: pixels covered by a touch of that polarity;
* impossible touches: placements that would cover an existing pixel of the
  opposite polarity;
* valid touches: placements that are neither impossible nor already made;
* possible pixels: pixels covered by made or valid touches;
* required pixels: undecided pixels that the opposite polarity can no longer
  reach;
* resolving touches: valid touches covering a required pixel;
* free touches: valid touches covering no pixel that is possible (or
  existing) for the opposite polarity.

Each iteration takes all free touches if there are any, otherwise the best
resolving touch, otherwise the best valid touch of either polarity. A touch
is scored by the sum of the reward array over the pixels it newly assigns
(negated for void touches).

All state is held on a canvas that extends the design grid by the brush
extent, so touches centered in the grid may overhang its edge.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .morphology import (
    PADDED,
    BorderMode,
    Brush,
    correlate,
    dilate_touches,
    touches_hitting,
)

SOLID = 1
VOID = -1


class InconsistentDesignError(ValueError):
    """A pixel is claimed by both solid and void touches."""


@dataclasses.dataclass
class StateSet:
    """Pixel and touch states for both polarities, indexed by ``+1``/``-1``.

    Every field is a dict mapping polarity to a boolean grid of the design
    shape.
    """

    existing: dict
    possible: dict
    required: dict
    impossible: dict
    valid: dict
    resolving: dict
    free: dict

    def undecided(self) -> np.ndarray:
        return ~(self.existing[SOLID] | self.existing[VOID])


@dataclasses.dataclass
class Step:
    """One iteration of the generator, as recorded in a trace."""

    index: int
    kind: str  # "free", "resolving" or "valid"
    touches: List[Tuple[int, int, int]]  # (polarity, row, col)
    reward: Optional[float] = None
    states: Optional[StateSet] = None

    def to_json(self) -> dict:
        out = {
            "step": self.index,
            "kind": self.kind,
            "touches": [
                {"polarity": "solid" if p == SOLID else "void", "row": r, "col": c}
                for p, r, c in self.touches
            ],
        }
        if self.reward is not None:
            out["reward"] = self.reward
        if self.states is not None:
            s = self.states
            for name in ("existing", "required", "valid", "resolving", "free"):
                field = getattr(s, name)
                out[f"n_{name}"] = {"solid": int(field[SOLID].sum()), "void": int(field[VOID].sum())}
        return out


class _Canvas:
    """Geometry shared by the generator and the state computation."""

    def __init__(self, shape: Tuple[int, int], brush: Brush, border: BorderMode, centers=None):
        self.shape = tuple(shape)
        self.brush = brush
        self.offsets = brush.offsets
        border.check_shape(self.shape)
        pad = brush.extent
        if border.kind == "fixed":
            pad = max(pad, border.margin)
        self.pad = pad
        h, w = self.shape
        self.full = (h + 2 * pad, w + 2 * pad)
        self.inner = (slice(pad, pad + h), slice(pad, pad + w))
        self.ingrid = np.zeros(self.full, dtype=bool)
        self.ingrid[self.inner] = True
        # allowed touch centers; all in-grid pixels unless restricted
        self.centers = self.ingrid if centers is None else self.embed(np.asarray(centers, bool))
        self.frame = {SOLID: np.zeros(self.full, bool), VOID: np.zeros(self.full, bool)}
        if border.kind == "fixed":
            m = border.margin
            k = pad - m
            for pol in (SOLID, VOID):
                f = border.frame(pol)
                self.frame[pol][k : k + f.shape[0], k : k + f.shape[1]] = f
                self.frame[pol][self.inner] = False

    def embed(self, g: np.ndarray, fill=False) -> np.ndarray:
        out = np.full(self.full, fill, dtype=np.asarray(g).dtype)
        out[self.inner] = g
        return out

    def crop(self, a: np.ndarray) -> np.ndarray:
        return a[self.inner]

    def states(self, touches: dict, window=None) -> dict:
        """State computation on the full canvas or on a rectangular window.

        Results inside a window are exact at distance ``4 * extent`` from any
        window edge that is not also a canvas edge.
        """
        if window is None:
            window = (slice(None), slice(None))
        frame = {pol: self.frame[pol][window] for pol in (SOLID, VOID)}
        return _states({pol: touches[pol][window] for pol in (SOLID, VOID)}, frame, self.ingrid[window], self.centers[window], self.offsets)

    def to_stateset(self, st: dict) -> StateSet:
        return StateSet(
            **{name: {pol: self.crop(grid) for pol, grid in field.items()} for name, field in st.items()}
        )


def _states(touches: dict, frame: dict, ingrid: np.ndarray, centers: np.ndarray, off: np.ndarray) -> dict:
    ex, imp, valid, poss, req, res, free = {}, {}, {}, {}, {}, {}, {}
    for pol in (SOLID, VOID):
        ex[pol] = (dilate_touches(touches[pol], off) & ingrid) | frame[pol]
    for pol in (SOLID, VOID):
        imp[pol] = touches_hitting(ex[-pol], off)
        valid[pol] = ~imp[pol] & ~touches[pol] & centers
    for pol in (SOLID, VOID):
        poss[pol] = (dilate_touches(touches[pol] | valid[pol], off) & ingrid) | frame[pol]
    for pol in (SOLID, VOID):
        req[pol] = ~ex[pol] & ~poss[-pol] & ingrid
    for pol in (SOLID, VOID):
        res[pol] = touches_hitting(req[pol], off) & valid[pol]
        free[pol] = ~touches_hitting(poss[-pol] | ex[-pol], off) & valid[pol]
    return dict(existing=ex, impossible=imp, valid=valid, possible=poss, required=req, resolving=res, free=free)


def _check_touches(solid_touches, void_touches):
    ts = np.asarray(solid_touches, dtype=bool)
    tv = np.asarray(void_touches, dtype=bool)
    if ts.shape != tv.shape or ts.ndim != 2:
        raise ValueError("solid and void touch grids must be 2D and of equal shape")
    return ts, tv


def compute_states(solid_touches, void_touches, brush: Brush, border: BorderMode = PADDED) -> StateSet:
    """Pixel and touch states of the partial design made by the given touches.

    Raises :class:`InconsistentDesignError` if some pixel is covered by
    touches of both polarities.
    """
    ts, tv = _check_touches(solid_touches, void_touches)
    canvas = _Canvas(ts.shape, brush, border)
    st = canvas.states({SOLID: canvas.embed(ts), VOID: canvas.embed(tv)})
    if np.any(st["existing"][SOLID] & st["existing"][VOID]):
        raise InconsistentDesignError("a pixel is assigned to both solid and void")
    return canvas.to_stateset(st)


def partial_design(solid_touches, void_touches, brush: Brush, border: BorderMode = PADDED) -> np.ndarray:
    """Design pixels of a partial design: ``+1`` solid, ``-1`` void, ``0`` undecided."""
    st = compute_states(solid_touches, void_touches, brush, border)
    return st.existing[SOLID].astype(np.int8) - st.existing[VOID].astype(np.int8)


def touch_reward(
    theta,
    pos: Tuple[int, int],
    polarity: int,
    solid_touches,
    void_touches,
    brush: Brush,
    border: BorderMode = PADDED,
    count_existing: bool = False,
) -> float:
    """Reward of one touch: the sum of ``theta`` over the pixels it sets.

    Only pixels not already existing for ``polarity`` are counted unless
    ``count_existing`` is true. Void rewards are negated.
    """
    theta = np.asarray(theta, dtype=float)
    ts, tv = _check_touches(solid_touches, void_touches)
    if theta.shape != ts.shape:
        raise ValueError("theta and touch grids must have the same shape")
    if polarity not in (SOLID, VOID):
        raise ValueError("polarity must be +1 (solid) or -1 (void)")
    st = compute_states(ts, tv, brush, border)
    r, c = pos
    if not (0 <= r < ts.shape[0] and 0 <= c < ts.shape[1]) or not st.valid[polarity][r, c]:
        raise ValueError(f"{pos} is not a valid {'solid' if polarity == SOLID else 'void'} touch")
    weights = theta if count_existing else np.where(st.existing[polarity], 0.0, theta)
    return float(polarity * np.sum(weights[_footprint_pixels(pos, brush, ts.shape)]))


def _footprint_pixels(pos, brush: Brush, shape):
    """In-grid pixel indices covered by a touch at ``pos``."""
    pts = brush.offsets + np.asarray(pos)
    ok = (pts[:, 0] >= 0) & (pts[:, 0] < shape[0]) & (pts[:, 1] >= 0) & (pts[:, 1] < shape[1])
    return tuple(pts[ok].T)


def _mirror_maps(shape, brush: Brush, symmetry: Iterable[str]) -> List[Callable]:
    """Maps from a touch position to its mirror image, for orbit closure."""
    h, w = shape
    # mirrored footprint at q equals the footprint at n - 1 - q - shift
    shift = brush.size - 1 - 2 * brush.anchor[0]
    maps = []
    for s in symmetry:
        if s == "horizontal":
            maps.append(lambda r, c: (r, w - 1 - c - shift))
        elif s == "vertical":
            maps.append(lambda r, c: (h - 1 - r - shift, c))
        elif s == "diagonal":
            if h != w:
                raise ValueError("diagonal symmetry requires a square grid")
            maps.append(lambda r, c: (c, r))
        else:
            raise ValueError(f"unknown symmetry {s!r}")
    return maps


def _closed_centers(shape, maps) -> np.ndarray:
    """Touch centers whose whole mirror orbit lies inside the grid."""
    h, w = shape
    ok = np.ones(shape, bool)
    changed = True
    while changed:
        changed = False
        for i, j in np.argwhere(ok):
            for f in maps:
                a, b = f(int(i), int(j))
                if not (0 <= a < h and 0 <= b < w and ok[a, b]):
                    ok[i, j] = False
                    changed = True
                    break
    return ok


def _orbit(pos, maps, shape):
    orbit = {pos}
    frontier = [pos]
    while frontier:
        p = frontier.pop()
        for f in maps:
            q = f(*p)
            if 0 <= q[0] < shape[0] and 0 <= q[1] < shape[1] and q not in orbit:
                orbit.add(q)
                frontier.append(q)
    return sorted(orbit)


class _State:
    """Touches, states and touch rewards of a generator run on a canvas."""

    def __init__(self, canvas: _Canvas, theta_c: np.ndarray, count_existing: bool, normalize: bool = False):
        self.canvas = canvas
        self.theta_c = theta_c
        self.count_existing = count_existing
        self.normalize = normalize
        self.touches = {SOLID: np.zeros(canvas.full, bool), VOID: np.zeros(canvas.full, bool)}
        self.st = canvas.states(self.touches)
        self.rewards = {pol: self._rewards(pol, None) for pol in (SOLID, VOID)}

    def _rewards(self, pol, window):
        if window is None:
            window = (slice(None), slice(None))
        theta = self.theta_c[window]
        fresh = ~self.st["existing"][pol][window]
        if not self.count_existing:
            theta = np.where(fresh, theta, 0.0)
        total = pol * correlate(theta, self.canvas.offsets)
        if not self.normalize:
            return total
        counted = self.canvas.ingrid[window] if self.count_existing else fresh & self.canvas.ingrid[window]
        n = correlate(counted.astype(float), self.canvas.offsets)
        return total / np.maximum(n, 1.0)

    def take(self, taken: List[Tuple[int, int, int]], incremental: bool) -> None:
        """Add canvas touches ``(polarity, i, j)`` and refresh the states."""
        for pol, i, j in taken:
            self.touches[pol][i, j] = True
        canvas = self.canvas
        if not incremental:
            self.st = canvas.states(self.touches)
            self.rewards = {pol: self._rewards(pol, None) for pol in (SOLID, VOID)}
            return
        reach = 4 * max(canvas.brush.extent, 1)
        idx = np.array([(i, j) for _, i, j in taken])
        lo, hi = idx.min(axis=0), idx.max(axis=0)
        h, w = canvas.full
        # states change only within `reach` of the new touches; they are exact
        # `reach` inside the window edges that are not canvas edges
        upd = [(max(lo[k] - reach, 0), min(hi[k] + reach + 1, n)) for k, n in enumerate((h, w))]
        win = [(max(a - reach, 0), min(b + reach, n)) for (a, b), n in zip(upd, (h, w))]
        if (win[0][1] - win[0][0]) * (win[1][1] - win[1][0]) > 0.5 * h * w:
            self.take([], incremental=False)
            return
        window = (slice(*win[0]), slice(*win[1]))
        inner = tuple(slice(a - wa, b - wa) for (a, b), (wa, _) in zip(upd, win))
        target = (slice(*upd[0]), slice(*upd[1]))
        sub = canvas.states(self.touches, window)
        for name, field in sub.items():
            for pol, grid in field.items():
                self.st[name][pol][target] = grid[inner]
        for pol in (SOLID, VOID):
            self.rewards[pol][target] = self._rewards(pol, window)[inner]

    def complete(self) -> bool:
        ex = self.st["existing"]
        return not np.any(self.canvas.crop(~(ex[SOLID] | ex[VOID])))


def generate(
    theta,
    brush: Brush,
    border: BorderMode = PADDED,
    tie_break=None,
    symmetry: Sequence[str] = (),
    count_existing: bool = False,
    normalize: bool = False,
    trace: Optional[Callable[[Step], None]] = None,
    record_states: bool = False,
    incremental: bool = True,
) -> np.ndarray:
    """Generate a ``brush``-feasible design biased by the reward array ``theta``.

    Args:
        theta: real reward array; positive values favor solid.
        brush: the brush every solid and void feature must be made of.
        border: border handling, see :class:`BorderMode`.
        tie_break: ``None`` picks the first maximum in (row, col, solid-first)
            order; an int seed or ``numpy.random.Generator`` picks uniformly
            among tied maxima.
        symmetry: mirror operations (``"horizontal"``, ``"vertical"``,
            ``"diagonal"``). Each selected touch is taken together with its
            valid mirror images, so a symmetric ``theta`` gives a symmetric
            design.
        count_existing: score touches over all covered pixels instead of only
            the newly assigned ones.
        normalize: rank touches by mean instead of summed reward over the
            counted pixels. With ``theta = x`` for a feasible ``x`` this
            reproduces ``x``, which the summed rule does not guarantee.
        trace: optional callback receiving a :class:`Step` per iteration.
        record_states: attach the states seen before each step to the trace.
        incremental: refresh states only near the latest touches. The result
            is bit-identical to full recomputation.

    Returns:
        ``int8`` array of ``-1``/``+1`` values.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.size == 0:
        raise ValueError("theta must be a nonempty 2D array")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    rng = None
    if tie_break is not None:
        rng = tie_break if isinstance(tie_break, np.random.Generator) else np.random.default_rng(tie_break)

    maps = _mirror_maps(theta.shape, brush, symmetry)
    # with mirrors, only touches whose mirror images exist may be placed
    canvas = _Canvas(theta.shape, brush, border, _closed_centers(theta.shape, maps) if maps else None)
    state = _State(canvas, canvas.embed(theta, 0.0), count_existing, normalize)
    pad = canvas.pad
    scores = np.empty(canvas.full + (2,))

    for index in range(1, 2 * theta.size + 2):
        if state.complete():
            break
        st = state.st
        states = canvas.to_stateset({k: {p: g.copy() for p, g in v.items()} for k, v in st.items()}) if record_states else None

        free = st["free"]
        if free[SOLID].any() or free[VOID].any():
            taken = [(pol, int(i), int(j)) for pol in (SOLID, VOID) for i, j in np.argwhere(free[pol])]
            if trace is not None:
                touched = sorted(((p, i - pad, j - pad) for p, i, j in taken), key=lambda t: (t[1], t[2], -t[0]))
                trace(Step(index, "free", touched, None, states))
            state.take(taken, incremental)
            continue

        if st["resolving"][SOLID].any() or st["resolving"][VOID].any():
            kind, candidates = "resolving", st["resolving"]
        else:
            kind, candidates = "valid", st["valid"]

        for k, pol in enumerate((SOLID, VOID)):
            scores[..., k] = np.where(candidates[pol], state.rewards[pol], -np.inf)
        flat = scores.reshape(-1)
        best = flat.max()
        if not np.isfinite(best):  # pragma: no cover - excluded by the state invariants
            raise RuntimeError("generator reached a state with no valid touch")
        if rng is None:
            choice = int(np.argmax(flat))
        else:
            choice = int(rng.choice(np.flatnonzero(flat == best)))
        ci, cj, k = np.unravel_index(choice, scores.shape)
        pol = (SOLID, VOID)[k]
        pos = (int(ci) - pad, int(cj) - pad)
        taken = []
        for q in _orbit(pos, maps, theta.shape):
            if q == pos or st["valid"][pol][q[0] + pad, q[1] + pad]:
                taken.append((pol, q[0] + pad, q[1] + pad))
        if trace is not None:
            trace(Step(index, kind, [(p, i - pad, j - pad) for p, i, j in taken], float(best), states))
        state.take(taken, incremental)
    else:  # pragma: no cover - bounded by the progress argument
        raise RuntimeError("generator did not terminate")

    return np.where(canvas.crop(state.st["existing"][SOLID]), SOLID, VOID).astype(np.int8)


def random_feasible(brush: Brush, shape: Tuple[int, int], seed=None, border: BorderMode = PADDED) -> np.ndarray:
    """A random feasible design: the generator driven by uniform random rewards."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-1.0, 1.0, size=tuple(shape))
    return generate(theta, brush, border)


def random_reward(shape: Tuple[int, int], seed=None) -> np.ndarray:
    """The uniform random reward array used by :func:`random_feasible`."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=tuple(shape))
