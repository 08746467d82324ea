"""Pulse sequences, fringe analysis and ensemble scans.

Mach-Zehnder fringes are computed for a phase offset ``phi_bs`` added to every
slice of the final pulse and fitted to

    P_e = (A - B cos(phi_bs + phase)) / 2.

An inertial phase ``Phi`` is injected in the dwell before the final pulse and
is exactly equivalent to ``phi_bs -> phi_bs + Phi``.

Dwell-time detuning phase ``delta * dwell`` is handled in one of three modes:

``"coherent"``
    literal ``delta * dwell`` in every dwell.
``"averaged"``
    the common dwell phase is averaged over a full period, removing every
    interference term that depends on it. For equal dwells this is the
    long-dwell limit of thermal averaging (``delta * dwell`` spans many
    periods across the cloud) and leaves the pulse-response envelope intact.
``"off"``
    no detuning phase during dwells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import (
    AtomParams,
    PulseWaveform,
    flip_reverse,
    slice_parameters,
    su2_mul,
)
from .ensemble import Ensemble, ThermalSpec, build_ensemble, doppler_sigma
from .fidelity import FidelityKind, _point_fidelity, ensemble_propagators, propagate_ck

DWELL_MODES = ("averaged", "coherent", "off")
DEFAULT_DWELL = 100e-6
FOUR_PI = 4.0 * math.pi


# --- baseline waveforms ----------------------------------------------------------


def rect_waveform(area: float, phase: float, omega: float) -> PulseWaveform:
    """Single-slice constant-phase pulse of the given area."""
    if not area > 0:
        raise ValueError("area must be positive")
    return PulseWaveform([phase], area / omega, omega)


def waltz_waveform(omega: float) -> PulseWaveform:
    """WALTZ inversion: areas pi/2, pi, 3pi/2 with phases 0, pi, 0.

    Encoded as six equal slices of area pi/2.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    pi = math.pi
    return PulseWaveform([0.0, pi, pi, 0.0, 0.0, 0.0], 0.5 * pi / omega, omega)


def retime(w: PulseWaveform, omega: float) -> PulseWaveform:
    """Same phase profile played for a different Rabi frequency at equal pulse area."""
    return PulseWaveform(w.phases, w.dt * w.omega_nominal / omega, omega)


# --- sequences ---------------------------------------------------------------------


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[PulseWaveform, ...]
    dwell: float = DEFAULT_DWELL
    inertial_phase: float = 0.0
    bs_phase_offset: float = 0.0
    dwell_phase: str = "averaged"

    def __post_init__(self) -> None:
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if not self.pulses:
            raise ValueError("sequence needs at least one pulse")
        if not self.dwell >= 0:
            raise ValueError("dwell must be non-negative")
        if self.dwell_phase not in DWELL_MODES:
            raise ValueError(f"dwell_phase must be one of {DWELL_MODES}")

    @property
    def omega_eff(self) -> float:
        return self.pulses[0].omega_nominal

    def with_offset(self, bs_phase_offset: float) -> "PulseSequence":
        return PulseSequence(self.pulses, self.dwell, self.inertial_phase, bs_phase_offset, self.dwell_phase)

    def with_inertial_phase(self, phase: float) -> "PulseSequence":
        return PulseSequence(self.pulses, self.dwell, phase, self.bs_phase_offset, self.dwell_phase)


def rect_sequence(omega: float, phase: float = 0.5 * math.pi, **kw) -> PulseSequence:
    """Conventional pi/2 - pi - pi/2 sequence with a common laser phase."""
    return PulseSequence(
        (rect_waveform(0.5 * math.pi, phase, omega), rect_waveform(math.pi, phase, omega),
         rect_waveform(0.5 * math.pi, phase, omega)),
        **kw,
    )


def flip_reverse_sequence(beamsplitter: PulseWaveform, mirror: PulseWaveform, **kw) -> PulseSequence:
    """Beamsplitter - mirror - flip-reversed beamsplitter."""
    return PulseSequence((beamsplitter, mirror, flip_reverse(beamsplitter)), **kw)


def _pulse_pairs(seq: PulseSequence, delta: np.ndarray, omega_scale: np.ndarray):
    # every pulse sees the same physical Rabi frequency, omega_scale * omega_eff
    return [
        propagate_ck(w, delta, omega_scale * seq.omega_eff / w.omega_nominal)
        for w in seq.pulses
    ]


def _sequence_pe_block(seq: PulseSequence, delta: np.ndarray, omega_scale: np.ndarray, bs: np.ndarray):
    """P_e with shape ``(n_atoms, n_offsets)`` for offsets ``bs`` on the final pulse."""
    pairs = _pulse_pairs(seq, delta, omega_scale)
    n_dwell = len(pairs) - 1
    if seq.dwell_phase == "averaged" and n_dwell > 0 and seq.dwell > 0:
        # the dwell phase enters |amplitude|^2 with harmonics up to n_dwell
        thetas = 2.0 * math.pi * np.arange(n_dwell + 1) / (n_dwell + 1)
        return np.mean([_sequence_pe_theta(pairs, delta, bs, seq, th) for th in thetas], axis=0)
    theta = seq.dwell * delta if seq.dwell_phase == "coherent" else np.zeros_like(delta)
    return _sequence_pe_theta(pairs, delta, bs, seq, theta)


def _sequence_pe_theta(pairs, delta, bs, seq: PulseSequence, theta):
    theta = np.broadcast_to(np.asarray(theta, dtype=float), delta.shape)
    a, b = pairs[0]
    a, b = a[:, None], b[:, None]
    last = len(pairs) - 1
    for k in range(1, len(pairs)):
        th = theta[:, None]
        if k == last:
            th = th - seq.inertial_phase
        # dwell: diag(exp(-i th/2), exp(+i th/2))
        a, b = su2_mul(np.exp(-0.5j * th), 0.0, a, b)
        pa, pb = pairs[k]
        pa, pb = pa[:, None], pb[:, None]
        if k == last:
            pb = pb * np.exp(-1j * (bs[None, :] + seq.bs_phase_offset))
        a, b = su2_mul(pa, pb, a, b)
    if last == 0:
        b = b * np.exp(-1j * (bs[None, :] + seq.bs_phase_offset))
    return np.abs(b) ** 2


def sequence_pe(seq: PulseSequence, atom: AtomParams) -> float:
    """Excited-state probability after the full sequence for one atom starting in |g>."""
    scale = atom.omega_r / seq.omega_eff
    pe = _sequence_pe_block(seq, np.array([atom.delta]), np.array([scale]), np.zeros(1))
    return float(pe[0, 0])


# --- fringes ------------------------------------------------------------------------


@dataclass(frozen=True)
class FringeData:
    phi_bs: np.ndarray
    p_e: np.ndarray
    n_atoms: int = 1

    def __post_init__(self) -> None:
        phi = np.asarray(self.phi_bs, dtype=float)
        pe = np.asarray(self.p_e, dtype=float)
        if phi.shape != pe.shape or phi.ndim != 1:
            raise ValueError("phi_bs and p_e must be 1-D arrays of equal length")
        if np.any(np.diff(phi) <= 0):
            raise ValueError("phi_bs must be strictly increasing")
        object.__setattr__(self, "phi_bs", phi)
        object.__setattr__(self, "p_e", pe)


@dataclass(frozen=True)
class FringeFit:
    offset_A: float
    contrast_B: float
    phase: float
    residual_rms: float

    def model(self, phi_bs):
        return 0.5 * (self.offset_A - self.contrast_B * np.cos(np.asarray(phi_bs) + self.phase))


def fringe_grid(n_phi: int, span: float = FOUR_PI) -> np.ndarray:
    if n_phi < 8:
        raise ValueError("need at least 8 fringe samples")
    return span * np.arange(n_phi) / n_phi


def fringe_scan(
    seq: PulseSequence, ensemble: Ensemble | None = None, n_phi: int = 32
) -> FringeData:
    """Ensemble-averaged P_e over ``phi_bs`` uniformly covering ``[0, 4 pi)``."""
    ensemble = ensemble or Ensemble.single()
    phi = fringe_grid(n_phi)
    pe = _sequence_pe_block(seq, ensemble.delta, ensemble.omega_scale, phi)
    return FringeData(phi, ensemble.weights @ pe, len(ensemble))


def _is_full_period_grid(phi: np.ndarray) -> bool:
    step = np.diff(phi)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0):
        return False
    periods = phi.size * step[0] / (2.0 * math.pi)
    return abs(periods - round(periods)) < 1e-9 and round(periods) >= 1


def fit_fringe(data: FringeData) -> FringeFit:
    """Offset, contrast and phase from the unit-frequency Fourier pair.

    For samples that are equispaced over whole periods the discrete sums are
    exact for the model and reject all other harmonics. Irregular sampling
    falls back to a linear least-squares projection onto ``1, cos, sin``.
    """
    phi, pe = data.phi_bs, data.p_e
    if phi.size < 8:
        raise ValueError("need at least 8 fringe samples")
    if phi[-1] - phi[0] <= 0:
        raise ValueError("degenerate fringe sampling")
    if _is_full_period_grid(phi):
        mean = float(np.mean(pe))
        c1 = 2.0 * float(np.mean(pe * np.cos(phi)))
        s1 = 2.0 * float(np.mean(pe * np.sin(phi)))
    else:
        if (phi[-1] - phi[0]) < 2.0 * math.pi * (1 - 1.0 / phi.size):
            raise ValueError("fringe samples must span at least one period")
        basis = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
        (mean, c1, s1), *_ = np.linalg.lstsq(basis, pe, rcond=None)
    # pe = A/2 - (B/2) cos(phase) cos(phi) + (B/2) sin(phase) sin(phi)
    contrast = 2.0 * math.hypot(c1, s1)
    phase = math.atan2(s1, -c1) if contrast > 0 else 0.0
    fit = FringeFit(2.0 * mean, contrast, phase, 0.0)
    resid = float(np.sqrt(np.mean((pe - fit.model(phi)) ** 2)))
    return FringeFit(fit.offset_A, fit.contrast_B, fit.phase, resid)


# --- phase bookkeeping ---------------------------------------------------------------


class PhaseShift(NamedTuple):
    value: float
    degenerate: bool


def wrap_phase(x):
    """Wrap into ``(-pi, pi]``."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def delta_phi(u1: np.ndarray, u2: np.ndarray, u3: np.ndarray, tol: float = 1e-9) -> PhaseShift:
    """Pulse-sequence phase shift built from the arguments of five matrix elements.

    ``arg<e|U1|g> - arg<g|U1|g> - 2 arg<e|U2|g> + arg<g|U3|g> + arg<e|U3|g>``
    """
    elems = (u1[1, 0], u1[0, 0], u2[1, 0], u3[0, 0], u3[1, 0])
    if min(abs(e) for e in elems) < tol:
        return PhaseShift(math.nan, True)
    v = (np.angle(u1[1, 0]) - np.angle(u1[0, 0]) - 2.0 * np.angle(u2[1, 0])
         + np.angle(u3[0, 0]) + np.angle(u3[1, 0]))
    return PhaseShift(wrap_phase(v), False)


def flip_reverse_residual(u1: np.ndarray, u3: np.ndarray) -> float:
    """Deviation from ``arg<g|U3|g> + arg<e|U3|g> = arg<g|U1|g> - arg<e|U1|g> + pi``.

    The relation holds exactly when ``U3`` is the flip-reverse partner (the
    transpose) of ``U1``; the result is wrapped to ``(-pi, pi]``.
    """
    lhs = np.angle(u3[0, 0]) + np.angle(u3[1, 0])
    rhs = np.angle(u1[0, 0]) - np.angle(u1[1, 0]) + math.pi
    return wrap_phase(lhs - rhs)


@dataclass(frozen=True)
class PhaseBudget:
    delta_phi: float
    std: float
    per_point: np.ndarray
    degenerate: np.ndarray


def phase_budget(seq: PulseSequence, ensemble: Ensemble, tol: float = 1e-9) -> PhaseBudget:
    """Delta-phi for every ensemble point with its weighted circular mean and spread.

    Degenerate points (a vanishing matrix element) are excluded from the
    statistics.
    """
    if len(seq.pulses) != 3:
        raise ValueError("phase budget needs a three-pulse sequence")
    (a1, b1), (a2, b2), (a3, b3) = _pulse_pairs(seq, ensemble.delta, ensemble.omega_scale)
    # <g|U|g> = a, <e|U|g> = -conj(b)
    e1, g1, e2, g3, e3 = -np.conj(b1), a1, -np.conj(b2), a3, -np.conj(b3)
    mags = np.min(np.abs(np.vstack([e1, g1, e2, g3, e3])), axis=0)
    degenerate = mags < tol
    raw = np.angle(e1) - np.angle(g1) - 2.0 * np.angle(e2) + np.angle(g3) + np.angle(e3)
    per_point = np.where(degenerate, np.nan, wrap_phase(raw))
    w = np.where(degenerate, 0.0, ensemble.weights)
    if w.sum() == 0:
        return PhaseBudget(math.nan, math.nan, per_point, degenerate)
    w = w / w.sum()
    z = np.sum(w * np.exp(1j * np.where(degenerate, 0.0, raw)))
    mean = float(np.angle(z))
    dev = wrap_phase(np.where(degenerate, 0.0, raw) - mean)
    std = float(np.sqrt(np.sum(w * dev**2)))
    return PhaseBudget(wrap_phase(mean), std, per_point, degenerate)


# --- maps and scans ---------------------------------------------------------------


@dataclass(frozen=True)
class ContrastMap:
    delta: np.ndarray
    omega_scale: np.ndarray
    omega_eff: float
    contrast: np.ndarray  # shape (len(delta), len(omega_scale))

    @property
    def delta_over_omega(self) -> np.ndarray:
        return self.delta / self.omega_eff

    @property
    def omega_error(self) -> np.ndarray:
        return self.omega_scale - 1.0

    def area_fraction(self, level: float) -> float:
        """Fraction of grid cells with contrast at or above ``level``."""
        return float(np.mean(self.contrast >= level))


def contrast_map(
    seq: PulseSequence,
    delta_grid: Sequence[float],
    omega_scale_grid: Sequence[float],
    n_phi: int = 16,
) -> ContrastMap:
    """Single-atom fringe contrast on a detuning x coupling-scale grid."""
    delta_grid = np.asarray(delta_grid, dtype=float)
    omega_scale_grid = np.asarray(omega_scale_grid, dtype=float)
    if delta_grid.size == 0 or omega_scale_grid.size == 0:
        raise ValueError("grids must be non-empty")
    d, s = np.meshgrid(delta_grid, omega_scale_grid, indexing="ij")
    phi = fringe_grid(n_phi)
    pe = _sequence_pe_block(seq, d.ravel(), s.ravel(), phi)
    # same Fourier pair as fit_fringe, vectorised over grid points
    c1 = 2.0 * np.mean(pe * np.cos(phi), axis=1)
    s1 = 2.0 * np.mean(pe * np.sin(phi), axis=1)
    contrast = 2.0 * np.hypot(c1, s1)
    return ContrastMap(delta_grid, omega_scale_grid, seq.omega_eff, contrast.reshape(d.shape))


def thermal_ensemble(
    spec: ThermalSpec, rabi_halfwidth: float, n_delta: int = 61, n_omega: int = 11, span: float = 3.0
) -> Ensemble:
    """Evaluation ensemble; collapses to a single detuning at zero temperature."""
    if doppler_sigma(spec) == 0:
        n_delta = 1
    return build_ensemble(spec, rabi_halfwidth, n_delta, n_omega, span)


def spectral_scan(
    w: PulseWaveform,
    spec: ThermalSpec,
    rabi_halfwidth: float,
    laser_detuning_grid: Sequence[float],
    *,
    n_delta: int = 61,
    n_omega: int = 11,
    span: float = 3.0,
) -> np.ndarray:
    """Thermal-averaged transfer ``|<e|U|g>|^2`` versus laser detuning.

    The cloud's mean Rabi frequency is ``w.omega_nominal``; use ``retime`` to
    play a pulse at another Rabi frequency. Returns rows ``(delta_L, P_e)``.
    """
    ens = thermal_ensemble(spec, rabi_halfwidth, n_delta, n_omega, span)
    grid = np.asarray(laser_detuning_grid, dtype=float)
    out = np.empty((grid.size, 2))
    for i, dl in enumerate(grid):
        a, b = ensemble_propagators(w, ens.shifted(dl))
        out[i] = dl, float(ens.weights @ _point_fidelity(FidelityKind.PP_INVERSION, a, b, 0.0))
    return out


def temporal_scan(
    w: PulseWaveform,
    spec: ThermalSpec,
    rabi_halfwidth: float,
    tau_grid: Sequence[float],
    *,
    n_delta: int = 61,
    n_omega: int = 11,
    span: float = 3.0,
) -> np.ndarray:
    """Thermal-averaged ``|c_e|^2`` when the light is switched off at each ``tau``.

    Beyond the end of the waveform the phase is held at its final value.
    Returns rows ``(tau, P_e)``.
    """
    ens = thermal_ensemble(spec, rabi_halfwidth, n_delta, n_omega, span)
    taus = np.asarray(tau_grid, dtype=float)
    if np.any(taus < 0):
        raise ValueError("tau must be non-negative")
    c, s = slice_parameters(ens.delta, w.omega_nominal * ens.omega_scale, w.dt)
    ac = np.conj(c)
    n = w.n_steps
    fa = np.empty((len(ens), n + 1), dtype=complex)
    fb = np.empty_like(fa)
    fa[:, 0], fb[:, 0] = 1.0, 0.0
    for k, phi in enumerate(w.phases):
        fa[:, k + 1], fb[:, k + 1] = su2_mul(ac, -1j * s * np.exp(-1j * phi), fa[:, k], fb[:, k])
    out = np.empty((taus.size, 2))
    for i, tau in enumerate(taus):
        k = min(int(math.floor(tau / w.dt + 1e-9)), n)
        rem = tau - k * w.dt
        if abs(rem) < 1e-12 * w.dt:
            rem = 0.0
        a, b = fa[:, k], fb[:, k]
        if rem > 0:
            phi = w.phases[min(k, n - 1)]
            cr, sr = slice_parameters(ens.delta, w.omega_nominal * ens.omega_scale, rem)
            a, b = su2_mul(np.conj(cr), -1j * sr * np.exp(-1j * phi), a, b)
        out[i] = tau, float(ens.weights @ np.abs(b) ** 2)
    return out


def transfer_halfwidth(rows: np.ndarray, level: float = 0.9) -> float:
    """Half-width of the band around zero detuning where transfer stays >= ``level``.

    ``rows`` is the output of ``spectral_scan`` on a grid containing both signs.
    Crossings are linearly interpolated; the narrower side is returned, and 0
    if the transfer at the grid point nearest zero is already below ``level``.
    """
    d, p = rows[:, 0], rows[:, 1]
    i0 = int(np.argmin(np.abs(d)))
    if p[i0] < level:
        return 0.0
    sides = []
    for step in (1, -1):
        i = i0
        while 0 <= i + step < d.size and p[i + step] >= level:
            i += step
        if not 0 <= i + step < d.size:
            sides.append(abs(d[i]))  # band reaches the grid edge
            continue
        j = i + step
        frac = (p[i] - level) / (p[i] - p[j])
        sides.append(abs(d[i] + frac * (d[j] - d[i])))
    return float(min(sides))
