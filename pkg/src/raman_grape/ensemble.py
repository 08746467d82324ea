"""Weighted (detuning, coupling-strength) samples of a thermal atom cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

K_B = 1.380649e-23  # J/K
RB85_MASS = 1.4099934e-25  # kg, 84.9118 u
RB_D2_WAVELENGTH = 780.241e-9  # m


@dataclass(frozen=True)
class ThermalSpec:
    """Cloud temperature and the Raman geometry that maps velocity to detuning.

    ``counterprop`` selects ``k_eff = 4 pi / lambda`` (counter-propagating
    beams); otherwise ``k_eff = 2 pi / lambda``.
    """

    temperature: float
    wavelength: float = RB_D2_WAVELENGTH
    atom_mass: float = RB85_MASS
    counterprop: bool = True

    def __post_init__(self) -> None:
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not self.wavelength > 0 or not self.atom_mass > 0:
            raise ValueError("wavelength and atom_mass must be positive")

    @property
    def k_eff(self) -> float:
        return (4.0 if self.counterprop else 2.0) * math.pi / self.wavelength

    @property
    def sigma_v(self) -> float:
        return math.sqrt(K_B * self.temperature / self.atom_mass)


@dataclass(frozen=True)
class EnsemblePoint:
    delta: float
    omega_scale: float
    weight: float


class Ensemble:
    """Immutable list of weighted atoms; weights are normalised on construction.

    The columns are also exposed as read-only arrays for vectorised evaluation.
    """

    def __init__(self, points: Iterable[EnsemblePoint]):
        points = tuple(points)
        if not points:
            raise ValueError("ensemble must contain at least one point")
        weights = np.array([p.weight for p in points], dtype=float)
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and non-negative")
        total = math.fsum(weights)
        if total <= 0:
            raise ValueError("weights sum to zero")
        weights = weights / total
        self._points = tuple(
            EnsemblePoint(float(p.delta), float(p.omega_scale), float(w))
            for p, w in zip(points, weights)
        )
        self.delta = np.array([p.delta for p in self._points])
        self.omega_scale = np.array([p.omega_scale for p in self._points])
        self.weights = weights
        for arr in (self.delta, self.omega_scale, self.weights):
            arr.setflags(write=False)

    @classmethod
    def single(cls, delta: float = 0.0, omega_scale: float = 1.0) -> "Ensemble":
        return cls([EnsemblePoint(delta, omega_scale, 1.0)])

    @property
    def points(self) -> tuple[EnsemblePoint, ...]:
        return self._points

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self):
        return iter(self._points)

    def __repr__(self) -> str:
        return f"Ensemble({len(self)} points)"

    def shifted(self, offset: float) -> "Ensemble":
        """Same ensemble with every detuning offset by ``offset`` (rad/s)."""
        return Ensemble(EnsemblePoint(p.delta + offset, p.omega_scale, p.weight) for p in self)

    def mirrored(self) -> "Ensemble":
        return Ensemble(EnsemblePoint(-p.delta, p.omega_scale, p.weight) for p in reversed(self._points))


def merge(parts: Sequence[tuple[float, Ensemble]]) -> Ensemble:
    """Concatenate ensembles, weighting each by the given mixing fraction."""
    return Ensemble(
        EnsemblePoint(p.delta, p.omega_scale, frac * p.weight) for frac, e in parts for p in e
    )


def doppler_sigma(spec: ThermalSpec) -> float:
    """One-sigma Doppler detuning spread ``k_eff * sqrt(k_B T / m)`` in rad/s."""
    return spec.k_eff * spec.sigma_v


def _axis(n: int, lo: float, hi: float, what: str) -> np.ndarray:
    if n < 1:
        raise ValueError(f"{what}: need at least one sample")
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    if hi <= lo:
        raise ValueError(f"{what}: zero span with {n} samples")
    return np.linspace(lo, hi, n)


def build_ensemble(
    spec: ThermalSpec,
    rabi_halfwidth: float = 0.10,
    n_delta: int = 15,
    n_omega: int = 5,
    delta_span_sigmas: float = 3.0,
) -> Ensemble:
    """Cartesian grid of Doppler detunings times coupling-strength scales.

    Detunings are equispaced over ``+-delta_span_sigmas`` standard deviations
    and weighted by the 1-D Maxwell-Boltzmann density; coupling scales are
    equispaced over ``[1 - h, 1 + h]`` with equal weight.
    """
    if not 0 <= rabi_halfwidth < 1:
        raise ValueError("rabi_halfwidth must lie in [0, 1)")
    sigma = doppler_sigma(spec)
    deltas = _axis(n_delta, -delta_span_sigmas * sigma, delta_span_sigmas * sigma, "detuning axis")
    scales = _axis(n_omega, 1.0 - rabi_halfwidth, 1.0 + rabi_halfwidth, "coupling axis")
    if sigma > 0:
        dw = np.exp(-0.5 * (deltas / sigma) ** 2)
    else:
        dw = np.ones_like(deltas)
    points = [
        EnsemblePoint(d, s, wd)
        for d, wd in zip(deltas, dw)
        for s in scales
    ]
    return Ensemble(points)
