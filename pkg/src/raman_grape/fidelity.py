"""Pulse fidelities, smoothness penalty and the ensemble objective.

The ensemble objective is evaluated for all atoms at once. Gradients are exact:
the derivative of a slice with respect to its own phase is closed-form, and the
full derivative is assembled from cached forward and backward products.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PulseWaveform, slice_parameters, su2_mul
from .ensemble import Ensemble

SQRT_HALF = math.sqrt(0.5)


class FidelityKind(enum.Enum):
    PP_INVERSION = "pp_inversion"
    PP_BEAMSPLITTER = "pp_beamsplitter"
    UR_180 = "ur_180"


@dataclass(frozen=True)
class ObjectiveSpec:
    """What the optimiser ascends.

    ``antisymmetric`` restricts the search to profiles with
    ``phi(tau - t) = -phi(t)``; gradients are then reported for the free
    first half only. ``target_axis_phase`` sets the equatorial axis of the
    UR 180 target.
    """

    kind: FidelityKind
    ensemble: Ensemble
    smoothness_weight: float = 1e-4
    antisymmetric: bool = False
    target_axis_phase: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.smoothness_weight) or self.smoothness_weight < 0:
            raise ValueError("smoothness_weight must be finite and >= 0")


@dataclass(frozen=True)
class ObjectiveValue:
    fidelity: float
    penalty: float
    total: float
    gradient: np.ndarray
    point_fidelity: np.ndarray = field(repr=False, default=None)


# --- single-propagator fidelities ---------------------------------------------


def f_pp_inversion(u: np.ndarray) -> float:
    """``|<e|U|g>|^2``."""
    return float(abs(u[1, 0]) ** 2)


def f_pp_beamsplitter(u: np.ndarray) -> float:
    """Overlap of ``U|g>`` with ``(|g> + |e>)/sqrt(2)``, squared."""
    return float(abs(SQRT_HALF * (u[0, 0] + u[1, 0])) ** 2)


def ur180_target(target_axis_phase: float = 0.0) -> np.ndarray:
    """Pi rotation about the equatorial axis at azimuth ``target_axis_phase``."""
    e = np.exp(1j * target_axis_phase)
    return np.array([[0, -1j * np.conj(e)], [-1j * e, 0]])


def f_ur180(u: np.ndarray, target_axis_phase: float = 0.0) -> float:
    """``|Tr(U_pi^dagger U)|^2 / 4``; insensitive to the global phase of ``u``."""
    tr = np.trace(ur180_target(target_axis_phase).conj().T @ np.asarray(u))
    return float(min(abs(tr) ** 2 / 4.0, 1.0))


FIDELITY_FUNCTIONS = {
    FidelityKind.PP_INVERSION: f_pp_inversion,
    FidelityKind.PP_BEAMSPLITTER: f_pp_beamsplitter,
    FidelityKind.UR_180: f_ur180,
}


def fidelity_of(kind: FidelityKind, u: np.ndarray, target_axis_phase: float = 0.0) -> float:
    if kind is FidelityKind.UR_180:
        return f_ur180(u, target_axis_phase)
    return FIDELITY_FUNCTIONS[kind](u)


def smoothness_penalty(w: PulseWaveform | np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of squared differences between adjacent phases, and its gradient."""
    phases = w.phases if isinstance(w, PulseWaveform) else np.asarray(w, dtype=float)
    d = np.diff(phases)
    grad = np.zeros_like(phases)
    grad[:-1] -= 2.0 * d
    grad[1:] += 2.0 * d
    return float(np.dot(d, d)), grad


# --- antisymmetric parameterisation --------------------------------------------


def expand_antisymmetric(half: np.ndarray, n_steps: int) -> np.ndarray:
    """Full profile from its free first half; the middle slice of odd ``n_steps`` is 0."""
    half = np.asarray(half, dtype=float)
    if half.size != n_steps // 2:
        raise ValueError(f"{n_steps} steps need {n_steps // 2} free phases, got {half.size}")
    middle = [0.0] if n_steps % 2 else []
    return np.concatenate([half, middle, -half[::-1]])


def reduce_antisymmetric(full_gradient: np.ndarray) -> np.ndarray:
    g = np.asarray(full_gradient)
    h = g.size // 2
    return g[:h] - g[::-1][:h]


def is_antisymmetric(phases: np.ndarray) -> bool:
    phases = np.asarray(phases)
    n = phases.size
    if n % 2 and phases[n // 2] != 0.0:
        return False
    return bool(np.array_equal(phases, -phases[::-1]))


# --- vectorised propagation ------------------------------------------------------


def propagate_ck(w: PulseWaveform, delta, omega_scale) -> tuple[np.ndarray, np.ndarray]:
    """Cayley-Klein pairs ``(a, b)`` of the whole pulse for arrays of atoms."""
    c, s = slice_parameters(delta, w.omega_nominal * np.asarray(omega_scale), w.dt)
    ac = np.conj(c)
    a = np.ones_like(c)
    b = np.zeros_like(c)
    for phi in w.phases:
        a, b = su2_mul(ac, -1j * s * np.exp(-1j * phi), a, b)
    return a, b


def ensemble_propagators(w: PulseWaveform, ensemble: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    return propagate_ck(w, ensemble.delta, ensemble.omega_scale)


def _point_fidelity(kind, a, b, theta):
    if kind is FidelityKind.PP_INVERSION:
        return np.abs(b) ** 2
    if kind is FidelityKind.PP_BEAMSPLITTER:
        return 0.5 * np.abs(a - np.conj(b)) ** 2
    return np.imag(np.exp(1j * theta) * b) ** 2


def _point_fidelity_grad(kind, a, b, ga, gb, theta):
    """d(fidelity)/d(phi_n) per point, from the propagator derivatives ``(ga, gb)``."""
    if kind is FidelityKind.PP_INVERSION:
        return 2.0 * np.real(np.conj(b)[:, None] * gb)
    if kind is FidelityKind.PP_BEAMSPLITTER:
        m = np.conj(a - np.conj(b))[:, None]
        return np.real(m * (ga - np.conj(gb)))
    e = np.exp(1j * theta)
    return 2.0 * np.imag(e * b)[:, None] * np.imag(e * gb)


def _fidelity_and_gradient(phases, dt, omega_nominal, delta, omega_scale, kind, theta):
    """Per-point fidelity ``(P,)`` and gradient ``(P, N)`` for a block of atoms."""
    c, s = slice_parameters(delta, omega_nominal * omega_scale, dt)
    ac = np.conj(c)
    n = phases.size
    # slice b-parameters, (P, N)
    e_minus = np.exp(-1j * phases)
    bs = -1j * s[:, None] * e_minus[None, :]

    # forward[k] = U_{k-1} ... U_0, k = 0..N
    fa = np.empty((delta.size, n + 1), dtype=complex)
    fb = np.empty_like(fa)
    fa[:, 0], fb[:, 0] = 1.0, 0.0
    for k in range(n):
        fa[:, k + 1], fb[:, k + 1] = su2_mul(ac, bs[:, k], fa[:, k], fb[:, k])
    # backward[k] = U_{N-1} ... U_k, k = 0..N
    ra = np.empty_like(fa)
    rb = np.empty_like(fa)
    ra[:, n], rb[:, n] = 1.0, 0.0
    for k in range(n - 1, -1, -1):
        ra[:, k], rb[:, k] = su2_mul(ra[:, k + 1], rb[:, k + 1], ac, bs[:, k])

    a, b = fa[:, n], fb[:, n]
    # dU_k/dphi_k has a = 0, b = -s exp(-i phi_k)
    db = -s[:, None] * e_minus[None, :]
    ya, yb = su2_mul(0.0, db, fa[:, :n], fb[:, :n])
    ga, gb = su2_mul(ra[:, 1:], rb[:, 1:], ya, yb)

    fid = _point_fidelity(kind, a, b, theta)
    grad = _point_fidelity_grad(kind, a, b, ga, gb, theta)
    return fid, grad


def ensemble_objective(
    w: PulseWaveform,
    spec: ObjectiveSpec,
    *,
    executor: Executor | None = None,
    chunk_size: int = 256,
) -> ObjectiveValue:
    """Weighted ensemble fidelity minus the smoothness penalty, with exact gradient.

    With ``executor`` the ensemble is split into fixed chunks evaluated in
    parallel; partial sums are combined in chunk order so results do not
    depend on scheduling.
    """
    phases = w.phases
    if spec.antisymmetric and not is_antisymmetric(phases):
        raise ValueError("objective is antisymmetric but the waveform is not")
    ens = spec.ensemble
    bounds = [(i, min(i + chunk_size, len(ens))) for i in range(0, len(ens), chunk_size)]

    def block(lo_hi):
        lo, hi = lo_hi
        return _fidelity_and_gradient(
            phases, w.dt, w.omega_nominal, ens.delta[lo:hi], ens.omega_scale[lo:hi],
            spec.kind, spec.target_axis_phase,
        )

    results = list(executor.map(block, bounds)) if executor is not None else [block(b) for b in bounds]

    fid_points = np.concatenate([r[0] for r in results])
    fidelity = 0.0
    grad = np.zeros(phases.size)
    for (lo, hi), (f, g) in zip(bounds, results):
        wts = ens.weights[lo:hi]
        fidelity += float(wts @ f)
        grad += wts @ g

    penalty, pgrad = smoothness_penalty(phases)
    total = fidelity - spec.smoothness_weight * penalty
    grad = grad - spec.smoothness_weight * pgrad
    if spec.antisymmetric:
        grad = reduce_antisymmetric(grad)
    return ObjectiveValue(fidelity, penalty, total, grad, fid_points)


def ensemble_fidelity(
    w: PulseWaveform, kind: FidelityKind, ensemble: Ensemble, target_axis_phase: float = 0.0
) -> float:
    """Penalty-free weighted fidelity, without the gradient."""
    a, b = ensemble_propagators(w, ensemble)
    return float(ensemble.weights @ _point_fidelity(kind, a, b, target_axis_phase))
