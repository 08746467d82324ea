"""GRAPE ascent of ensemble objectives with L-BFGS and a strong Wolfe line search."""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .dynamics import PulseWaveform
from .fidelity import (
    ObjectiveSpec,
    ObjectiveValue,
    ensemble_objective,
    expand_antisymmetric,
    is_antisymmetric,
)

log = logging.getLogger(__name__)

ValueAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


class OptimizationError(RuntimeError):
    """The objective became non-finite; the run cannot continue."""


class LineSearchError(RuntimeError):
    pass


# --- line search ------------------------------------------------------------------


@dataclass(frozen=True)
class LineSearchResult:
    step: float
    value: float
    gradient: np.ndarray
    n_evals: int


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating two points with slopes, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def line_search(
    objective: ValueAndGrad,
    point: np.ndarray,
    direction: np.ndarray,
    *,
    value: float | None = None,
    gradient: np.ndarray | None = None,
    step: float = 1.0,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_step: float = 1e6,
    max_evals: int = 40,
) -> LineSearchResult:
    """Strong Wolfe step along an ascent direction of ``objective`` (maximised).

    Bracketing followed by cubic-interpolation zoom. Raises ``ValueError`` if
    ``direction`` is not an ascent direction and ``LineSearchError`` if no
    admissible step is found within ``max_evals`` evaluations.
    """
    if value is None or gradient is None:
        value, gradient = objective(point)
    # internally minimise phi(t) = -F(x + t d)
    phi0 = -value
    dphi0 = -float(np.dot(gradient, direction))
    if not dphi0 < 0:
        raise ValueError(f"not an ascent direction (directional derivative {-dphi0:g})")

    evals = 0

    def phi(t):
        nonlocal evals
        evals += 1
        f, g = objective(point + t * direction)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            raise OptimizationError(f"objective is non-finite at step {t:g} along the search direction")
        return -f, -float(np.dot(g, direction)), f, g

    def armijo_ok(t, ft):
        return ft <= phi0 + c1 * t * dphi0

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_evals:
            width = abs(hi - lo)
            t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            a, b = min(lo, hi), max(lo, hi)
            if t is None or not (a + 0.1 * width <= t <= b - 0.1 * width):
                t = 0.5 * (lo + hi)
            ft, dt, f, g = phi(t)
            if not armijo_ok(t, ft) or ft >= f_lo:
                hi, f_hi, d_hi = t, ft, dt
            else:
                if abs(dt) <= -c2 * dphi0:
                    return LineSearchResult(t, f, g, evals)
                if dt * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = t, ft, dt
        raise LineSearchError("zoom phase did not find a strong Wolfe step")

    t_prev, f_prev, d_prev = 0.0, phi0, dphi0
    t = min(step, max_step)
    first = True
    while evals < max_evals:
        ft, dt, f, g = phi(t)
        if not armijo_ok(t, ft) or (not first and ft >= f_prev):
            return zoom(t_prev, f_prev, d_prev, t, ft, dt)
        if abs(dt) <= -c2 * dphi0:
            return LineSearchResult(t, f, g, evals)
        if dt >= 0:
            return zoom(t, ft, dt, t_prev, f_prev, d_prev)
        first = False
        t_prev, f_prev, d_prev = t, ft, dt
        if t >= max_step:
            break
        t = min(2.0 * t, max_step)
    raise LineSearchError("bracketing phase did not find a strong Wolfe step")


# --- L-BFGS -----------------------------------------------------------------------


class Termination(enum.Enum):
    TARGET = "target reached"
    GRADIENT = "gradient tolerance"
    ITERATIONS = "iteration cap"
    STALLED = "line search failed after restart"


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    fidelity: float
    penalty: float
    total: float
    grad_norm: float


def lbfgs_ascent(
    objective: Callable[[np.ndarray], ObjectiveValue],
    x0: np.ndarray,
    *,
    max_iters: int = 2000,
    grad_tol: float = 1e-8,
    target_fidelity: float | None = None,
    history_size: int = 10,
) -> tuple[np.ndarray, ObjectiveValue, list[IterationRecord], Termination]:
    """Maximise ``objective(x).total``.

    Iteration records are appended only for accepted steps, so the ``total``
    column of the trace never decreases. A failed line search drops the
    curvature history and retries along the gradient before giving up.
    """
    cache: dict[bytes, ObjectiveValue] = {}

    def evaluate(x: np.ndarray) -> ObjectiveValue:
        key = x.tobytes()
        if key not in cache:
            if len(cache) > 64:
                cache.clear()
            cache[key] = objective(x)
        return cache[key]

    def value_and_grad(x):
        v = evaluate(x)
        return v.total, v.gradient

    x = np.array(x0, dtype=float)
    cur = evaluate(x)
    if not math.isfinite(cur.total):
        raise OptimizationError("objective is non-finite at the initial point")
    trace = [IterationRecord(0, cur.fidelity, cur.penalty, cur.total, float(np.linalg.norm(cur.gradient)))]
    s_hist: deque[np.ndarray] = deque(maxlen=history_size)
    y_hist: deque[np.ndarray] = deque(maxlen=history_size)

    def two_loop(g):
        # ascent direction H g for the minimisation of -F
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_hist), reversed(y_hist)):
            rho = 1.0 / np.dot(y, s)
            a = rho * np.dot(s, q)
            alphas.append((rho, a))
            q -= a * y
        if s_hist:
            q *= np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1])
        for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
            b = rho * np.dot(y, q)
            q += (a - b) * s
        return q

    reason = Termination.ITERATIONS
    for it in range(1, max_iters + 1):
        g = cur.gradient
        gnorm = float(np.linalg.norm(g))
        if target_fidelity is not None and cur.fidelity >= target_fidelity:
            reason = Termination.TARGET
            break
        if gnorm <= grad_tol:
            reason = Termination.GRADIENT
            break

        d = two_loop(g) if s_hist else g / max(gnorm, 1.0)
        if not np.dot(d, g) > 0:
            s_hist.clear()
            y_hist.clear()
            d = g / max(gnorm, 1.0)
        try:
            res = line_search(value_and_grad, x, d, value=cur.total, gradient=g)
        except LineSearchError:
            log.debug("line search failed at iteration %d, restarting along the gradient", it)
            s_hist.clear()
            y_hist.clear()
            d = g / max(gnorm, 1.0)
            try:
                res = line_search(value_and_grad, x, d, value=cur.total, gradient=g)
            except LineSearchError:
                reason = Termination.STALLED
                break

        x_new = x + res.step * d
        new = evaluate(x_new)
        if new.total < cur.total:
            # Wolfe guarantees ascent; this only triggers on roundoff-level steps
            reason = Termination.STALLED
            break
        s = x_new - x
        y = cur.gradient - new.gradient  # gradient change of -F
        if np.dot(s, y) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
        x, cur = x_new, new
        trace.append(IterationRecord(it, cur.fidelity, cur.penalty, cur.total, float(np.linalg.norm(cur.gradient))))
    else:
        if target_fidelity is not None and cur.fidelity >= target_fidelity:
            reason = Termination.TARGET
        elif float(np.linalg.norm(cur.gradient)) <= grad_tol:
            reason = Termination.GRADIENT
    return x, cur, trace, reason


# --- GRAPE driver ----------------------------------------------------------------


class InitKind(enum.Enum):
    CONSTANT = "constant"
    RANDOM_SMOOTH = "random_smooth"
    FROM_FILE = "from_file"


@dataclass(frozen=True)
class InitStrategy:
    kind: InitKind = InitKind.RANDOM_SMOOTH
    phase: float = 0.0
    amplitude: float = 0.5
    correlation: float = 10.0
    waveform: PulseWaveform | None = None

    @classmethod
    def constant(cls, phase: float = 0.0) -> "InitStrategy":
        return cls(InitKind.CONSTANT, phase=phase)

    @classmethod
    def random_smooth(cls, amplitude: float = 0.5, correlation: float = 10.0) -> "InitStrategy":
        return cls(InitKind.RANDOM_SMOOTH, amplitude=amplitude, correlation=correlation)

    @classmethod
    def from_waveform(cls, waveform: PulseWaveform) -> "InitStrategy":
        return cls(InitKind.FROM_FILE, waveform=waveform)

    def initial_phases(self, n_steps: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind is InitKind.CONSTANT:
            return np.full(n_steps, float(self.phase))
        if self.kind is InitKind.FROM_FILE:
            if self.waveform is None:
                raise ValueError("FROM_FILE init needs a waveform")
            if self.waveform.n_steps != n_steps:
                raise ValueError(
                    f"initial waveform has {self.waveform.n_steps} steps, config asks for {n_steps}"
                )
            return self.waveform.phases.copy()
        noise = rng.standard_normal(n_steps)
        if self.correlation > 0:
            noise = gaussian_filter1d(noise, self.correlation, mode="nearest")
        std = float(np.std(noise))
        return self.amplitude * (noise - noise.mean()) / (std if std > 0 else 1.0)


@dataclass(frozen=True)
class OptimizeConfig:
    """Everything ``optimize`` needs; ``duration`` is in units of ``t_pi = pi / omega_nominal``."""

    objective: ObjectiveSpec
    omega_nominal: float
    n_steps: int = 100
    duration: float = 7.4
    init: InitStrategy = field(default_factory=InitStrategy)
    max_iters: int = 2000
    target_fidelity: float = 0.99
    grad_tol: float = 1e-8
    history_size: int = 10
    seed: int = 0
    n_starts: int = 5

    def __post_init__(self) -> None:
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.omega_nominal > 0:
            raise ValueError("omega_nominal must be positive")
        if self.n_starts < 1 or self.max_iters < 0 or self.history_size < 1:
            raise ValueError("n_starts, history_size must be >= 1 and max_iters >= 0")

    @property
    def dt(self) -> float:
        return self.duration * math.pi / self.omega_nominal / self.n_steps


@dataclass
class OptimizeReport:
    waveform: PulseWaveform
    fidelity: float
    penalty: float
    total: float
    trace: list[IterationRecord]
    termination: Termination
    seed: int
    start: int
    start_fidelities: list[float]

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration


def _make_objective(config: OptimizeConfig):
    spec = config.objective
    n, dt, om = config.n_steps, config.dt, config.omega_nominal

    def to_waveform(x: np.ndarray) -> PulseWaveform:
        phases = expand_antisymmetric(x, n) if spec.antisymmetric else x
        return PulseWaveform(phases, dt, om)

    def objective(x: np.ndarray) -> ObjectiveValue:
        return ensemble_objective(to_waveform(x), spec)

    return objective, to_waveform


def _free_parameters(phases: np.ndarray, antisymmetric: bool) -> np.ndarray:
    if not antisymmetric:
        return phases
    n = phases.size
    half = phases[: n // 2]
    if not is_antisymmetric(phases):
        # project onto the constraint set
        half = 0.5 * (half - phases[::-1][: n // 2])
    return half.copy()


def optimize(config: OptimizeConfig) -> OptimizeReport:
    """Multi-start L-BFGS ascent; returns the best start.

    Start ``k`` draws its initial guess from ``SeedSequence(seed).spawn``,
    so the outcome depends only on the config. Starts stop early once one of
    them reaches ``target_fidelity``.
    """
    objective, to_waveform = _make_objective(config)
    children = np.random.SeedSequence(config.seed).spawn(config.n_starts)
    n_starts = 1 if config.init.kind is not InitKind.RANDOM_SMOOTH else config.n_starts
    best: OptimizeReport | None = None
    start_fid = []
    for k in range(n_starts):
        rng = np.random.default_rng(children[k])
        x0 = _free_parameters(config.init.initial_phases(config.n_steps, rng), config.objective.antisymmetric)
        x, val, trace, reason = lbfgs_ascent(
            objective,
            x0,
            max_iters=config.max_iters,
            grad_tol=config.grad_tol,
            target_fidelity=config.target_fidelity,
            history_size=config.history_size,
        )
        log.info("start %d: fidelity %.5f after %d iterations (%s)", k, val.fidelity, trace[-1].iteration, reason.value)
        start_fid.append(val.fidelity)
        if best is None or val.fidelity > best.fidelity:
            best = OptimizeReport(
                to_waveform(x), val.fidelity, val.penalty, val.total, trace, reason, config.seed, k, start_fid
            )
        if reason is Termination.TARGET:
            break
    best.start_fidelities = start_fid
    return best


def mirror_seed(beamsplitter: PulseWaveform) -> PulseWaveform:
    """Antisymmetric UR 180 starting guess built from a PP 90 pulse.

    The beamsplitter profile shifted by ``pi/2`` becomes the first half and its
    flip-reverse the second half, so the composite propagator is
    ``V^T V`` for the shifted half ``V``. A good PP 90 half gives a pi rotation
    about x for every atom it handles well.
    """
    half = beamsplitter.phases + 0.5 * math.pi
    n = 2 * half.size
    return PulseWaveform(expand_antisymmetric(half, n), beamsplitter.dt, beamsplitter.omega_nominal)
