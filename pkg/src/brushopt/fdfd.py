"""2D finite-difference frequency-domain solver for the out-of-plane field.

Fields live on an ``[x, y]`` grid with spacing ``dl`` (µm) and satisfy

    (d/dx 1/sx d/dx + d/dy 1/sy d/dy) E + k0^2 eps E = -b

with stretched-coordinate PML on all four sides. Ports inject and measure
waveguide modes computed on the discrete transverse operator, so modal
decomposition and one-sided sources are exact on a uniform guide.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

EPS_SILICON = 12.25
EPS_OXIDE = 2.25
PML_CELLS = 20
RESIDUAL_TOL = 1e-8


class SolverError(RuntimeError):
    """Linear solve failed its residual check."""


class NoSuchModeError(ValueError):
    """The requested guided mode does not exist on the given cross-section."""


def wavenumber(wavelength_nm: float) -> float:
    """Vacuum wavenumber in 1/µm."""
    return 2 * np.pi / (wavelength_nm * 1e-3)


# -- operator -------------------------------------------------------------------


def _stretch(n: int, npml: int, dl: float, k0: float, half: bool, m: int = 2, log_r: float = -16.0):
    """PML stretch factors along one axis, on integer (``half=False``) or half-integer points."""
    pos = np.arange(n) + (0.5 if half else 0.0)
    width = npml * dl
    depth = np.zeros(n)
    if npml:
        lo = npml - pos
        hi = pos - (n - 1 - npml)
        depth = np.maximum(np.maximum(lo, hi), 0.0) * dl
    sigma_max = -(m + 1) * log_r / (2 * width) if npml else 0.0
    return 1 + 1j * sigma_max / k0 * (depth / width) ** m if npml else np.ones(n, dtype=complex)


def _derivatives(n: int, dl: float):
    """Forward and backward differences with zero field outside the grid."""
    fwd = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], format="csr") / dl
    bwd = sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], format="csr") / dl
    return fwd, bwd


def helmholtz_operator(eps: np.ndarray, dl: float, wavelength_nm: float, npml: int = PML_CELLS):
    """Sparse system matrix for an ``[x, y]`` permittivity grid."""
    nx, ny = eps.shape
    k0 = wavenumber(wavelength_nm)
    dxf, dxb = _derivatives(nx, dl)
    dyf, dyb = _derivatives(ny, dl)
    sx_f, sx_b = _stretch(nx, npml, dl, k0, True), _stretch(nx, npml, dl, k0, False)
    sy_f, sy_b = _stretch(ny, npml, dl, k0, True), _stretch(ny, npml, dl, k0, False)
    ix, iy = sp.identity(nx), sp.identity(ny)
    lxx = sp.diags(1 / sx_b) @ dxb @ sp.diags(1 / sx_f) @ dxf
    lyy = sp.diags(1 / sy_b) @ dyb @ sp.diags(1 / sy_f) @ dyf
    lap = sp.kron(lxx, iy) + sp.kron(ix, lyy)
    return (lap + sp.diags(k0**2 * eps.ravel())).tocsc()


class Simulation:
    """Factorised operator for one permittivity grid at one wavelength."""

    def __init__(self, eps: np.ndarray, dl: float, wavelength_nm: float, npml: int = PML_CELLS):
        eps = np.asarray(eps, dtype=float)
        if np.any(eps < 1):
            raise ValueError("relative permittivity must be >= 1")
        if min(eps.shape) <= 2 * npml:
            raise ValueError("grid too small for the PML")
        self.eps = eps
        self.dl = dl
        self.wavelength = wavelength_nm
        self.k0 = wavenumber(wavelength_nm)
        self.npml = npml
        self.matrix = helmholtz_operator(eps, dl, wavelength_nm, npml)
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SolverError(str(exc)) from exc

    @property
    def shape(self):
        return self.eps.shape

    def _check(self, a, x, b):
        norm_b = np.linalg.norm(b)
        res = np.linalg.norm(a @ x - b) / (norm_b if norm_b else 1.0)
        if not np.isfinite(res) or res > RESIDUAL_TOL:
            raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
        return x

    def solve(self, source: np.ndarray) -> np.ndarray:
        """Field for a current source grid ``b``: ``A E = -b``."""
        b = -np.asarray(source, dtype=complex).ravel()
        x = self._check(self.matrix, self._lu.solve(b), b)
        return x.reshape(self.shape)

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """Solution of ``A^T lam = rhs``."""
        rhs = np.asarray(rhs, dtype=complex).ravel()
        x = self._check(self.matrix.T, self._lu.solve(rhs, trans="T"), rhs)
        return x.reshape(self.shape)

    def residual(self, field: np.ndarray, source: np.ndarray) -> float:
        b = -np.asarray(source, dtype=complex).ravel()
        return float(np.linalg.norm(self.matrix @ field.ravel() - b) / np.linalg.norm(b))


# -- modes ------------------------------------------------------------------------


@dataclasses.dataclass
class Mode:
    """Discrete guided mode of a transverse line.

    ``profile`` has unit 2-norm scaled by ``dl`` (``sum(profile**2) * dl == 1``),
    ``phase`` is the per-cell propagation phase ``beta_d * dl``.
    """

    profile: np.ndarray
    beta2: float
    phase: float
    dl: float
    k0: float

    @property
    def neff(self) -> float:
        return float(np.sqrt(self.beta2) / self.k0)

    @property
    def beta(self) -> float:
        return self.phase / self.dl

    @property
    def z(self) -> complex:
        return np.exp(1j * self.phase)


def waveguide_mode(eps_line: np.ndarray, dl: float, wavelength_nm: float, order: int = 1) -> Mode:
    """Guided mode ``order`` (1 = fundamental, 2 = first odd) of a transverse line.

    The window edges are treated as zero-field walls, so the line should
    extend far enough into the cladding for the mode tails to decay.
    """
    if order < 1:
        raise ValueError("mode order starts at 1")
    eps_line = np.asarray(eps_line, dtype=float)
    n = eps_line.size
    k0 = wavenumber(wavelength_nm)
    diag = -2.0 / dl**2 + k0**2 * eps_line
    off = np.full(n - 1, 1.0 / dl**2)
    vals, vecs = scipy.linalg.eigh_tridiagonal(diag, off, select="i", select_range=(max(n - order, 0), n - 1))
    if vals.size < order:
        raise NoSuchModeError(f"no mode of order {order}")
    beta2 = vals[-order]
    cladding = max(eps_line[0], eps_line[-1])
    if beta2 <= k0**2 * cladding:
        raise NoSuchModeError(f"mode of order {order} is not guided at {wavelength_nm} nm")
    profile = vecs[:, -order] / np.sqrt(dl)
    # sign convention: first significant lobe positive
    lead = np.flatnonzero(np.abs(profile) > 0.1 * np.abs(profile).max())[0]
    profile = profile * np.sign(profile[lead])
    cos_phase = 1 - beta2 * dl**2 / 2
    if not -1 < cos_phase < 1:
        raise NoSuchModeError("grid too coarse to resolve the mode")
    return Mode(profile, float(beta2), float(np.arccos(cos_phase)), dl, k0)


# -- ports -----------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Port:
    """Mode port on a straight waveguide section.

    ``axis`` is the grid axis the guide runs along; ``outward`` is +1 or -1,
    the index direction pointing away from the device. ``source`` and
    ``monitor`` are indices along ``axis`` of the first of two planes used for
    injection and decomposition. ``window`` is the transverse index range.
    """

    name: int
    axis: int
    outward: int
    source: int
    monitor: int
    window: Tuple[int, int]
    order: int = 1

    def __post_init__(self):
        if self.axis not in (0, 1) or self.outward not in (1, -1):
            raise ValueError("axis must be 0/1 and outward +1/-1")

    def with_order(self, order: int) -> "Port":
        return dataclasses.replace(self, order=order)

    def line(self, eps: np.ndarray, index: int) -> np.ndarray:
        lo, hi = self.window
        return eps[index, lo:hi] if self.axis == 0 else eps[lo:hi, index]

    def flat_indices(self, shape, index: int) -> np.ndarray:
        lo, hi = self.window
        t = np.arange(lo, hi)
        if self.axis == 0:
            return np.ravel_multi_index((np.full_like(t, index), t), shape)
        return np.ravel_multi_index((t, np.full_like(t, index)), shape)

    def mode(self, eps: np.ndarray, dl: float, wavelength_nm: float, order: Optional[int] = None) -> Mode:
        return waveguide_mode(self.line(eps, self.monitor), dl, wavelength_nm, order or self.order)

    def source_grid(self, shape, mode: Mode) -> np.ndarray:
        """Current sheet launching ``mode`` into the device only."""
        inward = -self.outward
        b = np.zeros(int(np.prod(shape)), dtype=complex)
        b[self.flat_indices(shape, self.source)] = mode.profile
        b[self.flat_indices(shape, self.source + inward)] = -mode.profile / mode.z
        return b.reshape(shape)

    def functionals(self, shape, mode: Mode):
        """Sparse linear maps ``E -> (outgoing, incoming)`` modal amplitudes.

        Amplitudes are referenced to the monitor plane and scaled so that
        ``|a|^2`` is proportional to power with a mode-independent constant.
        """
        i0 = self.flat_indices(shape, self.monitor)
        i1 = self.flat_indices(shape, self.monitor + 1)
        w = mode.profile * mode.dl
        z = mode.z
        denom = z - 1 / z
        scale = np.sqrt(np.sin(mode.phase))
        # planes m, m+1 hold c0 = a + b, c1 = a z + b / z (a travels to +index)
        plus = (np.concatenate([i0, i1]), np.concatenate([-w / z, w]) / denom * scale)
        minus = (np.concatenate([i0, i1]), np.concatenate([w * z, -w]) / denom * scale)
        return (plus, minus) if self.outward > 0 else (minus, plus)


def _apply(functional, field_flat):
    idx, coef = functional
    return complex(np.dot(coef, field_flat[idx]))


@dataclasses.dataclass
class PortResult:
    """Forward solution and scattering parameters for excitation of one port."""

    simulation: Simulation
    field: np.ndarray
    input_port: int
    s: Dict[int, complex]
    _out: Dict[int, tuple]
    _incoming: tuple


def scattering_params(sim: Simulation, ports: Sequence[Port], input_port: int = 1) -> PortResult:
    """Excite ``input_port`` with its mode and decompose every port's outgoing mode."""
    by_name = {p.name: p for p in ports}
    src_port = by_name[input_port]
    src_mode = src_port.mode(sim.eps, sim.dl, sim.wavelength)
    field = sim.solve(src_port.source_grid(sim.shape, src_mode))
    flat = field.ravel()
    _, incoming = src_port.functionals(sim.shape, src_mode)
    a_in = _apply(incoming, flat)
    outs, s = {}, {}
    for p in ports:
        mode = src_mode if p.name == input_port else p.mode(sim.eps, sim.dl, sim.wavelength)
        out, _ = p.functionals(sim.shape, mode)
        outs[p.name] = out
        s[p.name] = _apply(out, flat) / a_in
    return PortResult(sim, field, input_port, s, outs, incoming)


def adjoint_gradient(result: PortResult, grad_s: Dict[int, complex]) -> np.ndarray:
    """Gradient of a real loss with respect to the permittivity of every cell.

    ``grad_s`` maps port name to ``dL/dRe(S) + 1j dL/dIm(S)`` for that port's
    scattering parameter.
    """
    sim = result.simulation
    flat = result.field.ravel()
    idx_in, coef_in = result._incoming
    a_in = np.dot(coef_in, flat[idx_in])
    q = np.zeros(flat.size, dtype=complex)
    for name, g in grad_s.items():
        if g == 0:
            continue
        idx, coef = result._out[name]
        s = result.s[name]
        # dS = (u - S v) . dE / a_in
        np.add.at(q, idx, np.conj(g) * coef / a_in)
        np.add.at(q, idx_in, -np.conj(g) * s * coef_in / a_in)
    if not q.any():
        return np.zeros(sim.shape)
    lam = sim.solve_adjoint(q)
    # A E = -b and dA = k0^2 d(eps): dE = -A^-1 dA E
    return -(sim.k0**2) * np.real(lam * result.field)
