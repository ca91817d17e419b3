"""Scattering-parameter specification loss and pass/fail check.

A specification lists, for pairs of ports and wavelength bands, a power cutoff
in dB that the scattering parameter must stay below (``"max"``) or above
(``"min"``). The loss penalises each entry through a softplus of its signed,
normalised distance to the cutoff and sums the squares.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

# (output port, input port, wavelength in nm)
SKey = Tuple[int, int, float]


@dataclasses.dataclass(frozen=True)
class SpecEntry:
    out_port: int
    in_port: int
    band: float  # band center, nm
    cutoff_db: float
    direction: str  # "max" or "min"

    def __post_init__(self):
        if self.direction not in ("max", "min"):
            raise ValueError(f"direction must be 'max' or 'min', got {self.direction!r}")

    @property
    def cutoff_amplitude(self) -> float:
        return 10 ** (self.cutoff_db / 20)

    @property
    def sign(self) -> int:
        return 1 if self.direction == "max" else -1


@dataclasses.dataclass
class ScatteringSpec:
    """Per-port, per-band cutoffs.

    ``bands`` maps each band center to the wavelengths (nm) at which the
    band is tested. ``w_valid_units`` selects how the allowed range is
    measured: ``"amplitude"`` (distance between amplitude cutoff and the
    bound 0 or 1) or ``"power"`` (same in power).
    """

    entries: List[SpecEntry]
    bands: Dict[float, Tuple[float, ...]]
    w_valid_units: str = "amplitude"

    def __post_init__(self):
        if self.w_valid_units not in ("amplitude", "power"):
            raise ValueError("w_valid_units must be 'amplitude' or 'power'")
        for e in self.entries:
            if e.band not in self.bands:
                raise ValueError(f"entry refers to unknown band {e.band}")

    @property
    def wavelengths(self) -> Tuple[float, ...]:
        return tuple(sorted({wl for wls in self.bands.values() for wl in wls}))

    @property
    def ports(self) -> Tuple[int, ...]:
        return tuple(sorted({e.out_port for e in self.entries} | {e.in_port for e in self.entries}))

    def rows(self) -> List[Tuple[SpecEntry, float]]:
        """One row per (entry, tested wavelength) in a fixed order."""
        return [(e, wl) for e in self.entries for wl in self.bands[e.band]]

    def keys(self) -> List[SKey]:
        return [(e.out_port, e.in_port, wl) for e, wl in self.rows()]

    def arrays(self):
        """Cutoff amplitudes, signs and valid-range widths aligned with :meth:`rows`."""
        rows = self.rows()
        cutoff = np.array([e.cutoff_amplitude for e, _ in rows])
        sign = np.array([e.sign for e, _ in rows], dtype=float)
        if self.w_valid_units == "amplitude":
            w_valid = np.where(sign > 0, cutoff, 1.0 - cutoff)
        else:
            w_valid = np.where(sign > 0, cutoff**2, 1.0 - cutoff**2)
        if np.any(w_valid <= 0):
            raise ValueError("every cutoff must lie strictly inside (0, 1)")
        return cutoff, sign, w_valid

    def gather(self, s: Mapping[SKey, complex]) -> np.ndarray:
        """Complex scattering values aligned with :meth:`rows`."""
        try:
            return np.array([s[k] for k in self.keys()], dtype=complex)
        except KeyError as exc:
            raise ValueError(f"missing scattering parameter {exc.args[0]}") from None

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "entries": [dataclasses.asdict(e) for e in self.entries],
            "bands": {str(k): list(v) for k, v in self.bands.items()},
            "w_valid_units": self.w_valid_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringSpec":
        bands = {float(k): tuple(float(w) for w in v) for k, v in d["bands"].items()}
        entries = [
            SpecEntry(int(e["out_port"]), int(e["in_port"]), float(e["band"]), float(e["cutoff_db"]), e["direction"])
            for e in d["entries"]
        ]
        return cls(entries, bands, d.get("w_valid_units", "amplitude"))

    @classmethod
    def load(cls, path) -> "ScatteringSpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1 + np.tanh(0.5 * z))


def _args(s_values: np.ndarray, spec: ScatteringSpec):
    cutoff, sign, w_valid = spec.arrays()
    s_values = np.asarray(s_values, dtype=complex)
    if s_values.shape != cutoff.shape:
        raise ValueError(f"expected {cutoff.size} scattering values, got {s_values.size}")
    return sign * (np.abs(s_values) ** 2 - cutoff**2) / w_valid.min(), sign / w_valid.min()


def scattering_loss(s, spec: ScatteringSpec) -> float:
    """Squared 2-norm of ``softplus(g * (|S|^2 - |S_cutoff|^2) / min(w_valid))``.

    ``s`` is either a mapping ``(out, in, wavelength) -> S`` or an array
    aligned with ``spec.rows()``.
    """
    values = spec.gather(s) if isinstance(s, Mapping) else s
    z, _ = _args(values, spec)
    return float(np.sum(_softplus(z) ** 2))


def loss_gradient(s, spec: ScatteringSpec) -> np.ndarray:
    """Gradient ``dL/dRe(S) + 1j * dL/dIm(S)``, aligned with ``spec.rows()``.

    With this convention a perturbation ``dS`` changes the loss by
    ``Re(conj(grad) * dS)``.
    """
    values = spec.gather(s) if isinstance(s, Mapping) else np.asarray(s, dtype=complex)
    z, scale = _args(values, spec)
    dl_dpower = 2 * _softplus(z) * _sigmoid(z) * scale
    return 2 * dl_dpower * values


def spec_satisfied(s: Mapping[SKey, complex], spec: ScatteringSpec) -> bool:
    """True iff every entry meets its cutoff at every tested wavelength."""
    values = spec.gather(s)
    with np.errstate(divide="ignore"):
        power_db = 10 * np.log10(np.abs(values) ** 2)
    for (entry, _), p in zip(spec.rows(), power_db):
        if entry.direction == "max" and not p <= entry.cutoff_db:
            return False
        if entry.direction == "min" and not p >= entry.cutoff_db:
            return False
    return True


BAND_WAVELENGTHS = {1270.0: (1265.0, 1270.0, 1275.0), 1290.0: (1285.0, 1290.0, 1295.0)}


def table_spec(columns: Sequence[Tuple[int, float, float, str]], w_valid_units: str = "amplitude") -> ScatteringSpec:
    """Build a spec for excitation from port 1 from ``(out_port, band, dB, direction)`` tuples."""
    entries = [SpecEntry(out, 1, band, db, d) for out, band, db, d in columns]
    return ScatteringSpec(entries, dict(BAND_WAVELENGTHS), w_valid_units)
