"""Binary morphology on pixel grids.

Designs are integer arrays with values in ``{-1, +1}`` (void, solid). The
morphological operators below work on boolean images and a :class:`Brush`,
using a direct (compiled) sweep over the brush footprint so that the results
are exact.

Two border conventions are supported through :class:`BorderMode`:

* ``padded`` (default): pixels outside the grid are unconstrained. Erosion
  treats them as set and dilation treats them as unset, so brush placements
  may overhang the grid edge.
* ``fixed``: a frame of frozen pixel values surrounds the grid (for example
  waveguide stubs entering a design region). Operations are evaluated on the
  grid embedded in that frame and cropped back to the grid.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Tuple

import numba
import numpy as np

CIRCULAR = "circular"
NOTCHED_SQUARE = "notched_square"
_SHAPE_ALIASES = {
    "circle": CIRCULAR,
    "circular": CIRCULAR,
    "notched": NOTCHED_SQUARE,
    "notched_square": NOTCHED_SQUARE,
}


@dataclasses.dataclass(frozen=True, eq=False)
class Brush:
    """A binary structuring element.

    Attributes:
        shape: ``"circular"`` or ``"notched_square"``.
        size: diameter (circular) or width (notched square), in pixels.
        footprint: boolean array of shape ``(size, size)``.
        anchor: footprint index of the pixel on which the brush is centered.
    """

    shape: str
    size: int
    footprint: np.ndarray
    anchor: Tuple[int, int]

    @property
    def offsets(self) -> np.ndarray:
        """``(n, 2)`` integer offsets of footprint pixels relative to the anchor."""
        idx = np.argwhere(self.footprint)
        return idx - np.asarray(self.anchor)

    @property
    def extent(self) -> int:
        """Largest absolute offset along either axis."""
        return int(np.abs(self.offsets).max())

    @property
    def area(self) -> int:
        return int(self.footprint.sum())

    @property
    def spec(self) -> str:
        prefix = "circle" if self.shape == CIRCULAR else "notched"
        return f"{prefix}:{self.size}"

    def __eq__(self, other):
        if not isinstance(other, Brush):
            return NotImplemented
        return (self.shape, self.size, self.anchor) == (
            other.shape,
            other.size,
            other.anchor,
        ) and np.array_equal(self.footprint, other.footprint)

    def __hash__(self):
        return hash((self.shape, self.size, self.anchor))

    def __repr__(self):
        return f"Brush({self.spec!r})"


def make_brush(shape: str, size: int) -> Brush:
    """Build a circular or notched-square brush of ``size`` pixels.

    A pixel belongs to the circular footprint when the distance from its
    center to the footprint center is at most ``size / 2``. The notched square
    is a full square with its four corner pixels removed (for ``size >= 3``).
    """
    try:
        kind = _SHAPE_ALIASES[shape]
    except KeyError:
        raise ValueError(f"unknown brush shape {shape!r}") from None
    if int(size) != size or size < 1:
        raise ValueError(f"brush size must be a positive integer, got {size!r}")
    size = int(size)

    if kind == CIRCULAR:
        c = (size - 1) / 2
        i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        footprint = (i - c) ** 2 + (j - c) ** 2 <= (size / 2) ** 2
    else:
        footprint = np.ones((size, size), dtype=bool)
        if size >= 3:
            footprint[0, 0] = footprint[0, -1] = False
            footprint[-1, 0] = footprint[-1, -1] = False
    anchor = ((size - 1) // 2, (size - 1) // 2)
    footprint.setflags(write=False)
    return Brush(kind, size, footprint, anchor)


def parse_brush(spec: str) -> Brush:
    """Parse a brush string such as ``"circle:13"`` or ``"notched:10"``."""
    try:
        shape, size = spec.split(":")
        size = int(size)
    except ValueError:
        raise ValueError(f"malformed brush spec {spec!r}; expected e.g. 'circle:13'") from None
    return make_brush(shape.strip(), size)


@dataclasses.dataclass(frozen=True, eq=False)
class BorderMode:
    """Boundary handling for morphology.

    ``values`` is only used in ``fixed`` mode: a ``{-1, +1}`` array of shape
    ``(height + 2 * margin, width + 2 * margin)`` whose frame holds frozen
    pixel values. Its interior is ignored.
    """

    kind: str = "padded"
    values: Optional[np.ndarray] = None
    margin: int = 0

    def __post_init__(self):
        if self.kind not in ("padded", "fixed"):
            raise ValueError(f"unknown border mode {self.kind!r}")
        if self.kind == "fixed":
            if self.values is None or self.margin < 1:
                raise ValueError("fixed border requires values and a positive margin")

    @classmethod
    def fixed(cls, values: np.ndarray, margin: int) -> "BorderMode":
        values = np.asarray(values)
        if not np.all(np.abs(values) == 1):
            raise ValueError("border values must be -1 or +1")
        return cls("fixed", values.astype(np.int8), int(margin))

    def check_shape(self, shape: Tuple[int, int]) -> None:
        if self.kind == "fixed":
            m = self.margin
            want = (shape[0] + 2 * m, shape[1] + 2 * m)
            if self.values.shape != want:
                raise ValueError(f"border values have shape {self.values.shape}, expected {want}")

    def frame(self, phase: int) -> Optional[np.ndarray]:
        """Boolean frame image for solid (``phase=+1``) or void (``-1``)."""
        if self.kind == "padded":
            return None
        return self.values == phase


PADDED = BorderMode()


# -- raw sweeps ---------------------------------------------------------------


@numba.njit(cache=True)
def _sweep(a, offsets, fill, sign, reduce_and):
    """Combine ``a[p + sign * o]`` over offsets ``o`` with AND or OR.

    Pixels outside ``a`` read as ``fill``.
    """
    h, w = a.shape
    n = offsets.shape[0]
    out = np.empty((h, w), dtype=np.bool_)
    for i in range(h):
        for j in range(w):
            acc = reduce_and
            for k in range(n):
                ii = i + sign * offsets[k, 0]
                jj = j + sign * offsets[k, 1]
                if 0 <= ii < h and 0 <= jj < w:
                    v = a[ii, jj]
                else:
                    v = fill
                if v != reduce_and:
                    acc = v
                    break
            out[i, j] = acc
    return out


@numba.njit(cache=True)
def _correlate(values, offsets):
    h, w = values.shape
    n = offsets.shape[0]
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(n):
                ii = i + offsets[k, 0]
                jj = j + offsets[k, 1]
                if 0 <= ii < h and 0 <= jj < w:
                    acc += values[ii, jj]
            out[i, j] = acc
    return out


def _as_offsets(offsets) -> np.ndarray:
    return np.ascontiguousarray(offsets, dtype=np.int64).reshape(-1, 2)


def dilate_touches(touches: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Pixels covered by brush placements at ``touches`` (out-of-array empty)."""
    return _sweep(np.asarray(touches, dtype=bool), _as_offsets(offsets), False, -1, False)


def touches_hitting(pixels: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Placements whose footprint covers at least one set pixel."""
    return _sweep(np.asarray(pixels, dtype=bool), _as_offsets(offsets), False, 1, False)


def touches_within(pixels: np.ndarray, offsets: np.ndarray, fill: bool = True) -> np.ndarray:
    """Placements whose whole footprint lies on set pixels."""
    return _sweep(np.asarray(pixels, dtype=bool), _as_offsets(offsets), fill, 1, True)


def correlate(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Sum of ``values`` under the footprint placed at each pixel (zero padded).

    Terms are accumulated in footprint order, so a value computed on any
    window containing the footprint is bit-identical to the full-grid one.
    """
    values = np.asarray(values, dtype=np.float64)
    return _correlate(values, _as_offsets(offsets))


def correlate_adjoint(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Transpose of :func:`correlate` (a convolution with the footprint)."""
    return correlate(values, -offsets)


# -- bordered operators ------------------------------------------------------


def _embed(g: np.ndarray, border: BorderMode, phase: int) -> Tuple[np.ndarray, int]:
    g = np.asarray(g, dtype=bool)
    if g.ndim != 2 or g.size == 0:
        raise ValueError("expected a nonempty 2D grid")
    if border.kind == "padded":
        return g, 0
    border.check_shape(g.shape)
    m = border.margin
    ext = border.frame(phase).copy()
    ext[m : m + g.shape[0], m : m + g.shape[1]] = g
    return ext, m


def _crop(a: np.ndarray, m: int, shape) -> np.ndarray:
    return a[m : m + shape[0], m : m + shape[1]]


def dilate(g: np.ndarray, brush: Brush, border: BorderMode = PADDED, phase: int = 1) -> np.ndarray:
    """Dilation: ``out[p]`` is set when the brush centered at ``p`` hits a set pixel."""
    ext, m = _embed(g, border, phase)
    return _crop(dilate_touches(ext, brush.offsets), m, np.shape(g))


def erode(g: np.ndarray, brush: Brush, border: BorderMode = PADDED, phase: int = 1) -> np.ndarray:
    """Erosion: ``out[p]`` is set when every pixel under the brush at ``p`` is set."""
    ext, m = _embed(g, border, phase)
    return _crop(touches_within(ext, brush.offsets), m, np.shape(g))


def opening(g: np.ndarray, brush: Brush, border: BorderMode = PADDED, phase: int = 1) -> np.ndarray:
    """Erosion followed by dilation with the same brush."""
    ext, m = _embed(g, border, phase)
    offsets = brush.offsets
    opened = dilate_touches(touches_within(ext, offsets), offsets)
    return _crop(opened, m, np.shape(g))


def is_feasible(x: np.ndarray, brush: Brush, border: BorderMode = PADDED) -> bool:
    """True if both the solid and void phases of ``x`` are unions of brush placements."""
    x = as_binary_grid(x)
    solid = x > 0
    return bool(
        np.array_equal(opening(solid, brush, border, phase=1), solid)
        and np.array_equal(opening(~solid, brush, border, phase=-1), ~solid)
    )


def minimum_length_scale(x: np.ndarray, shape: str = CIRCULAR, border: BorderMode = PADDED, scan: str = "largest") -> int:
    """Largest brush size ``L`` for which ``x`` is feasible.

    Feasibility is not monotone in ``L`` for discretised circles (a design
    built from 13-pixel disks need not be a union of 7-pixel disks), so by
    default every size up to the smaller grid dimension is tested.
    ``scan="first-failure"`` instead stops at the first infeasible size and
    returns the size before it.
    """
    if scan not in ("largest", "first-failure"):
        raise ValueError("scan must be 'largest' or 'first-failure'")
    x = as_binary_grid(x)
    best = 1
    for size in range(2, min(x.shape) + 1):
        if is_feasible(x, make_brush(shape, size), border):
            best = size
        elif scan == "first-failure":
            break
    return best


def brush_width_for_rule(width: float, pitch: float) -> int:
    """Notched-square width whose feasible designs meet a width/spacing rule."""
    if width <= 0 or pitch <= 0:
        raise ValueError("width and pitch must be positive")
    ratio = width / pitch
    if not math.isclose(ratio, round(ratio), rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"rule width {width} is not a multiple of the pixel pitch {pitch}")
    return int(round(ratio)) + 2


# -- helpers -------------------------------------------------------------------


def as_binary_grid(x) -> np.ndarray:
    """Validate a ``{-1, +1}`` design and return it as ``int8``."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"design must be a nonempty 2D array, got shape {x.shape}")
    if not np.all((x == 1) | (x == -1)):
        raise ValueError("design values must be -1 (void) or +1 (solid)")
    return x.astype(np.int8)


def _runs(line: np.ndarray):
    """Yield ``(value, length, touches_edge)`` for the runs of a 1D array."""
    n = len(line)
    start = 0
    for k in range(1, n + 1):
        if k == n or line[k] != line[start]:
            yield line[start], k - start, start == 0 or k == n
            start = k


def run_length_stats(x: np.ndarray) -> dict:
    """Shortest horizontal and vertical solid/void runs away from the grid edge.

    Runs that touch the grid edge are excluded since the design continues
    beyond it. ``None`` means no interior run of that phase exists.
    """
    x = as_binary_grid(x)
    shortest = {1: None, -1: None}
    for lines in (x, x.T):
        for line in lines:
            for value, length, at_edge in _runs(line):
                if at_edge:
                    continue
                cur = shortest[int(value)]
                shortest[int(value)] = length if cur is None else min(cur, length)
    return {"min_solid_run": shortest[1], "min_void_run": shortest[-1]}
