"""Benchmark photonic components: geometry, ports, symmetry and targets.

Geometry is given in micrometres and rasterised at a pixel pitch in nm.
Every component couples to 400 nm waveguides. Arrays are indexed ``[x, y]``
so ``left``/``right`` are the ends of axis 0 and ``bottom``/``top`` of axis 1.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import fdfd
from .objective import ScatteringSpec, loss_gradient, scattering_loss, spec_satisfied, table_spec

WAVEGUIDE_WIDTH_UM = 0.4
STUB_UM = 0.5
WINDOW_MARGIN_UM = 0.5
SIDES = ("left", "right", "bottom", "top")


@dataclasses.dataclass(frozen=True)
class PortSpec:
    name: int
    side: str
    offset_um: float = 0.0  # along the side, from the design-region center
    order: int = 1

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")


def _cells(length_um: float, pitch_nm: float, what: str) -> int:
    n = length_um * 1000 / pitch_nm
    if abs(n - round(n)) > 1e-6:
        raise ValueError(f"pitch {pitch_nm} nm does not divide {what} ({length_um} um)")
    return int(round(n))


@dataclasses.dataclass
class Evaluation:
    loss: float
    grad: np.ndarray  # dL/dx over design pixels, x in [-1, 1]
    s: Dict[Tuple[int, int, float], complex]
    spec_ok: bool


@dataclasses.dataclass
class ProblemDefinition:
    name: str
    design_size_um: Tuple[float, float]
    ports: Tuple[PortSpec, ...]
    spec: ScatteringSpec
    pitch_nm: float = 10.0
    symmetry: Tuple[str, ...] = ()
    npml: int = fdfd.PML_CELLS

    def __post_init__(self):
        self.design_size_um = tuple(float(v) for v in self.design_size_um)
        self.ports = tuple(self.ports)
        self.symmetry = tuple(self.symmetry)
        names = [p.name for p in self.ports]
        if len(set(names)) != len(names):
            raise ValueError("port names must be unique")
        if 1 not in names:
            raise ValueError("port 1 is the excitation port and must exist")
        missing = set(self.spec.ports) - set(names)
        if missing:
            raise ValueError(f"spec refers to undefined ports {sorted(missing)}")
        if "diagonal" in self.symmetry and self.design_size_um[0] != self.design_size_um[1]:
            raise ValueError("diagonal symmetry needs a square design region")
        self._layout()

    # -- geometry ---------------------------------------------------------------

    @property
    def dl(self) -> float:
        return self.pitch_nm * 1e-3

    @property
    def design_shape(self) -> Tuple[int, int]:
        return self._design

    @property
    def wavelengths(self) -> Tuple[float, ...]:
        return self.spec.wavelengths

    def _layout(self):
        p = self.pitch_nm
        self._design = (
            _cells(self.design_size_um[0], p, "design width"),
            _cells(self.design_size_um[1], p, "design height"),
        )
        self._guide = _cells(WAVEGUIDE_WIDTH_UM, p, "waveguide width")
        space = math.ceil(STUB_UM * 1000 / p - 1e-9) + 8
        self._pad = self.npml + space
        self._shape = (self._design[0] + 2 * self._pad, self._design[1] + 2 * self._pad)
        self._guides = {}  # port name -> (side, lo, hi) transverse cells in full grid
        for ps in self.ports:
            along = 1 if ps.side in ("left", "right") else 0
            center2 = self._design[along] + _cells(ps.offset_um, p / 2, "port offset")  # doubled units
            if (center2 - self._guide) % 2:
                raise ValueError("port offset leaves the waveguide off the pixel grid")
            lo = self._pad + (center2 - self._guide) // 2
            hi = lo + self._guide
            if lo < self._pad or hi > self._pad + self._design[along]:
                raise ValueError(f"port {ps.name} waveguide lies outside the design edge")
            self._guides[ps.name] = (ps.side, lo, hi)

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self._shape

    @property
    def design_slice(self):
        px = self._pad
        return (slice(px, px + self._design[0]), slice(px, px + self._design[1]))

    def background(self) -> np.ndarray:
        """Permittivity with waveguide stubs and an oxide design region."""
        eps = np.full(self._shape, fdfd.EPS_OXIDE)
        nx, ny = self._shape
        px = self._pad
        for side, lo, hi in self._guides.values():
            if side == "left":
                eps[:px, lo:hi] = fdfd.EPS_SILICON
            elif side == "right":
                eps[px + self._design[0]:, lo:hi] = fdfd.EPS_SILICON
            elif side == "bottom":
                eps[lo:hi, :px] = fdfd.EPS_SILICON
            else:
                eps[lo:hi, px + self._design[1]:] = fdfd.EPS_SILICON
        return eps

    def build_permittivity(self, x: np.ndarray) -> np.ndarray:
        """Full-grid permittivity for a design with values in [-1, 1]."""
        x = np.asarray(x, dtype=float)
        if x.shape != self.design_shape:
            raise ValueError(f"design shape {x.shape} != {self.design_shape}")
        eps = self.background()
        eps[self.design_slice] = design_permittivity(x)
        return eps

    def fdfd_ports(self) -> List[fdfd.Port]:
        out = []
        nx, ny = self._shape
        edges = {name: (lo, hi) for name, (_, lo, hi) in self._guides.items()}
        m = math.ceil(WINDOW_MARGIN_UM / self.dl)
        for ps in self.ports:
            side, lo, hi = self._guides[ps.name]
            axis = 0 if side in ("left", "right") else 1
            # keep the window clear of neighbouring guides on the same side
            margin = m
            for other in self.ports:
                if other.name == ps.name or self._guides[other.name][0] != side:
                    continue
                olo, ohi = edges[other.name]
                gap = olo - hi if olo >= hi else lo - ohi
                margin = min(margin, max(gap // 2, 1))
            window = (lo - margin, hi + margin)
            n_axis = self._shape[axis]
            if side in ("left", "bottom"):
                outward, source, monitor = -1, self.npml + 2, self.npml + 5
            else:
                outward, source, monitor = 1, n_axis - self.npml - 3, n_axis - self.npml - 7
            out.append(fdfd.Port(ps.name, axis, outward, source, monitor, window, ps.order))
        return out

    # -- simulation -----------------------------------------------------------

    def _solve(self, x, wavelength):
        sim = fdfd.Simulation(self.build_permittivity(x), self.dl, wavelength, self.npml)
        return fdfd.scattering_params(sim, self.fdfd_ports(), 1)

    def simulate(self, x: np.ndarray, wavelengths: Optional[Sequence[float]] = None):
        """Scattering parameters ``{(out, 1, wavelength): S}`` for excitation at port 1."""
        s = {}
        for wl in wavelengths or self.wavelengths:
            r = self._solve(x, wl)
            s.update({(name, 1, wl): v for name, v in r.s.items()})
        return s

    def evaluate(self, x: np.ndarray) -> Evaluation:
        """Loss, spec check and adjoint gradient with respect to design pixels."""
        results = {wl: self._solve(x, wl) for wl in self.wavelengths}
        s = {(name, 1, wl): v for wl, r in results.items() for name, v in r.s.items()}
        loss = scattering_loss(s, self.spec)
        g = loss_gradient(s, self.spec)
        per_wl: Dict[float, Dict[int, complex]] = {wl: {} for wl in results}
        for (out, _, wl), gk in zip(self.spec.keys(), g):
            per_wl[wl][out] = per_wl[wl].get(out, 0) + gk
        grad = np.zeros(self.design_shape)
        for wl, r in results.items():
            grad += fdfd.adjoint_gradient(r, per_wl[wl])[self.design_slice]
        grad *= DEPS_DX
        return Evaluation(loss, grad, s, spec_satisfied(s, self.spec))

    # -- serialisation ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "design_size_um": list(self.design_size_um),
            "ports": [dataclasses.asdict(p) for p in self.ports],
            "spec": self.spec.to_dict(),
            "pitch_nm": self.pitch_nm,
            "symmetry": list(self.symmetry),
            "npml": self.npml,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProblemDefinition":
        return cls(
            name=d["name"],
            design_size_um=tuple(d["design_size_um"]),
            ports=tuple(PortSpec(**p) for p in d["ports"]),
            spec=ScatteringSpec.from_dict(d["spec"]),
            pitch_nm=float(d.get("pitch_nm", 10.0)),
            symmetry=tuple(d.get("symmetry", ())),
            npml=int(d.get("npml", fdfd.PML_CELLS)),
        )

    @classmethod
    def load(cls, path) -> "ProblemDefinition":
        with open(path) as f:
            return cls.from_dict(json.load(f))


DEPS_DX = (fdfd.EPS_SILICON - fdfd.EPS_OXIDE) / 2


def design_permittivity(x: np.ndarray) -> np.ndarray:
    """Map design values in [-1, 1] (void to solid) to permittivity."""
    return fdfd.EPS_OXIDE + DEPS_DX * (np.asarray(x, dtype=float) + 1)


_SPECS = {
    "bend": [(1, 1270.0, -20, "max"), (1, 1290.0, -20, "max"), (2, 1270.0, -0.5, "min"), (2, 1290.0, -0.5, "min")],
    "mode_converter": [
        (1, 1270.0, -20, "max"), (1, 1290.0, -20, "max"), (2, 1270.0, -0.5, "min"), (2, 1290.0, -0.5, "min"),
    ],
    "beamsplitter": [
        (1, 1270.0, -20, "max"), (1, 1290.0, -20, "max"),
        (2, 1270.0, -3.5, "min"), (2, 1290.0, -3.5, "min"),
        (3, 1270.0, -3.5, "min"), (3, 1290.0, -3.5, "min"),
        (4, 1270.0, -20, "max"), (4, 1290.0, -20, "max"),
    ],
    "demultiplexer": [
        (1, 1270.0, -20, "max"), (1, 1290.0, -20, "max"),
        (2, 1270.0, -3, "min"), (2, 1290.0, -20, "max"),
        (3, 1270.0, -20, "max"), (3, 1290.0, -3, "min"),
    ],
}

_GEOMETRY = {
    "bend": ((1.6, 1.6), (PortSpec(1, "left"), PortSpec(2, "bottom")), ("diagonal",)),
    "mode_converter": ((1.6, 1.6), (PortSpec(1, "left"), PortSpec(2, "right", order=2)), ()),
    "beamsplitter": (
        (3.2, 2.0),
        (PortSpec(1, "left", 0.5), PortSpec(2, "right", 0.5), PortSpec(3, "right", -0.5), PortSpec(4, "left", -0.5)),
        ("horizontal", "vertical"),
    ),
    "demultiplexer": (
        (6.4, 6.4),
        (PortSpec(1, "left"), PortSpec(2, "right", 1.0), PortSpec(3, "right", -1.0)),
        (),
    ),
}

PROBLEM_NAMES = tuple(_GEOMETRY)


def standard_problem(name: str, pitch_nm: float = 10.0, w_valid_units: str = "amplitude") -> ProblemDefinition:
    """One of the four benchmark components at the given pixel pitch."""
    if name not in _GEOMETRY:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}")
    size, ports, symmetry = _GEOMETRY[name]
    return ProblemDefinition(name, size, ports, table_spec(_SPECS[name], w_valid_units), pitch_nm, symmetry)


def straight_waveguide(pitch_nm: float = 10.0, length_um: float = 1.6) -> ProblemDefinition:
    """Two-port test structure; fill the design with :meth:`straight_design` for a plain guide."""
    spec = table_spec([(1, 1270.0, -20, "max"), (2, 1270.0, -0.5, "min")])
    ports = (PortSpec(1, "left"), PortSpec(2, "right"))
    return ProblemDefinition("straight", (length_um, length_um), ports, spec, pitch_nm, ("horizontal",))


def straight_design(problem: ProblemDefinition) -> np.ndarray:
    """Design that continues the port-1 guide straight across the region."""
    x = -np.ones(problem.design_shape)
    _, lo, hi = problem._guides[1]
    x[:, lo - problem._pad:hi - problem._pad] = 1
    return x


def load_problem(spec, pitch_nm: Optional[float] = None) -> ProblemDefinition:
    """Problem from a name, a dict, or a JSON file path."""
    if isinstance(spec, ProblemDefinition):
        return spec
    if isinstance(spec, Mapping):
        d = dict(spec)
        if pitch_nm is not None:
            d["pitch_nm"] = pitch_nm
        return ProblemDefinition.from_dict(d)
    if spec in _GEOMETRY:
        return standard_problem(spec, pitch_nm or 10.0)
    with open(spec) as f:
        return load_problem(json.load(f), pitch_nm)
