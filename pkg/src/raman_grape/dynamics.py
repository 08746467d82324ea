"""Two-level propagators for piecewise-constant phase pulses.

Basis ordering is ``(|g>, |e>)``. A slice of laser phase ``phi`` acting for
``dt`` on an atom with Rabi frequency ``omega_r`` and detuning ``delta`` is

    U = [[C*, -i S*],
         [-i S,  C ]]

    C = cos(W dt / 2) + i (delta / W) sin(W dt / 2)
    S = exp(i phi) (omega_r / W) sin(W dt / 2),     W = sqrt(omega_r**2 + delta**2)

so ``U`` has unit determinant and is fully described by its Cayley-Klein pair
``a = U[0, 0]``, ``b = U[0, 1]``. Every other matrix in the package uses this
single convention. Rotations are read as ``U = cos(t/2) I - i sin(t/2) n.sigma``,
which makes a resonant ``phi = 0`` pulse a rotation about +x and
``phi = pi/2`` a rotation about +y.

Free evolution is the ``omega_r -> 0`` limit of the same slice,
``diag(exp(-i delta tau / 2), exp(+i delta tau / 2))``; an injected inertial
phase ``Phi`` is applied as ``diag(exp(+i Phi / 2), exp(-i Phi / 2))``, which is
exactly equivalent to adding ``Phi`` to the laser phase of every later pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "AtomParams",
    "PulseWaveform",
    "Rotation",
    "StateVector",
    "cayley_klein",
    "evolve_trajectory",
    "flip_reverse",
    "free_evolution",
    "pulse_propagator",
    "rotation_axis_angle",
    "slice_parameters",
    "step_propagator",
    "su2_from_ck",
    "su2_mul",
]

DEGENERATE_ANGLE = 1e-9


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class AtomParams:
    """Detuning and two-photon Rabi frequency of a single atom (both rad/s)."""

    delta: float
    omega_r: float

    def __post_init__(self) -> None:
        _check_finite(delta=self.delta, omega_r=self.omega_r)
        if self.omega_r <= 0:
            raise ValueError(f"omega_r must be positive, got {self.omega_r}")


@dataclass(frozen=True)
class PulseWaveform:
    """Piecewise-constant phase profile.

    Parameters
    ----------
    phases : sequence of float
        Laser phase of each slice in radians, unwrapped.
    dt : float
        Slice duration in seconds.
    omega_nominal : float
        Rabi frequency (rad/s) the pulse was designed for.
    """

    phases: np.ndarray
    dt: float
    omega_nominal: float

    def __post_init__(self) -> None:
        phases = np.array(self.phases, dtype=float).reshape(-1)
        if phases.size < 1:
            raise ValueError("waveform needs at least one slice")
        if not np.all(np.isfinite(phases)):
            raise ValueError("phases must be finite")
        _check_finite(dt=self.dt, omega_nominal=self.omega_nominal)
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.omega_nominal <= 0:
            raise ValueError("omega_nominal must be positive")
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)

    @property
    def n_steps(self) -> int:
        return int(self.phases.size)

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def t_pi(self) -> float:
        """Duration of a rectangular pi pulse at the nominal Rabi frequency."""
        return math.pi / self.omega_nominal

    def with_phases(self, phases: Sequence[float]) -> "PulseWaveform":
        return PulseWaveform(np.asarray(phases, dtype=float), self.dt, self.omega_nominal)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PulseWaveform):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.omega_nominal == other.omega_nominal
            and np.array_equal(self.phases, other.phases)
        )

    def __hash__(self) -> int:
        return hash((self.phases.tobytes(), self.dt, self.omega_nominal))


@dataclass(frozen=True)
class StateVector:
    c_g: complex
    c_e: complex

    def __post_init__(self) -> None:
        norm = abs(self.c_g) ** 2 + abs(self.c_e) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalised (|c|^2 = {norm})")

    @classmethod
    def ground(cls) -> "StateVector":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def from_array(cls, v: np.ndarray) -> "StateVector":
        return cls(complex(v[0]), complex(v[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c_g, self.c_e], dtype=complex)

    @property
    def p_e(self) -> float:
        return abs(self.c_e) ** 2


class Rotation(NamedTuple):
    axis: np.ndarray
    angle: float
    degenerate: bool


# --- Cayley-Klein arithmetic -------------------------------------------------
#
# A matrix [[a, b], [-b*, a*]] is stored as the pair (a, b). The product rule
# holds for any complex a, b (not only unit determinant), which lets slice
# derivatives use the same routine.


def su2_mul(a1, b1, a2, b2):
    """Cayley-Klein pair of the product ``(a1, b1) @ (a2, b2)``."""
    return a1 * a2 - b1 * np.conj(b2), a1 * b2 + b1 * np.conj(a2)


def su2_from_ck(a: complex, b: complex) -> np.ndarray:
    return np.array([[a, b], [-np.conj(b), np.conj(a)]], dtype=complex)


def cayley_klein(u: np.ndarray) -> tuple[complex, complex]:
    u = np.asarray(u, dtype=complex)
    return complex(u[0, 0]), complex(u[0, 1])


def slice_parameters(delta, omega_r, dt):
    """Phase-independent parts of a slice: ``(C, s)`` with ``S = s * exp(i phi)``.

    Broadcasts over array inputs.
    """
    delta = np.asarray(delta, dtype=float)
    omega_r = np.asarray(omega_r, dtype=float)
    w = np.hypot(omega_r, delta)
    half = 0.5 * w * dt
    sin_half = np.sin(half)
    with np.errstate(invalid="ignore", divide="ignore"):
        # sin(W dt/2) / W, finite as W -> 0
        sinc = np.where(w > 0, sin_half / np.where(w > 0, w, 1.0), 0.5 * dt)
    c = np.cos(half) + 1j * delta * sinc
    s = omega_r * sinc
    return c, s


def step_propagator(phi: float, atom: AtomParams, dt: float) -> np.ndarray:
    """2x2 propagator of one constant-phase slice."""
    _check_finite(phi=phi, dt=dt)
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    c, s = slice_parameters(atom.delta, atom.omega_r, dt)
    c = complex(c)
    a = np.conj(c)
    b = -1j * float(s) * np.exp(-1j * phi)
    return su2_from_ck(a, b)


def _pulse_ck(phases: np.ndarray, c, s):
    """Fold a pulse into its Cayley-Klein pair; ``c``/``s`` may be arrays."""
    a = np.ones_like(c)
    b = np.zeros_like(c)
    ac = np.conj(c)
    for phi in phases:
        bn = -1j * s * np.exp(-1j * phi)
        # later slices multiply from the left
        a, b = su2_mul(ac, bn, a, b)
    return a, b


def pulse_propagator(w: PulseWaveform, atom: AtomParams) -> np.ndarray:
    """Time-ordered product ``U_N ... U_1 U_0`` of the waveform's slices."""
    c, s = slice_parameters(atom.delta, atom.omega_r, w.dt)
    a, b = _pulse_ck(w.phases, complex(c), float(s))
    return su2_from_ck(a, b)


def evolve_trajectory(
    w: PulseWaveform, atom: AtomParams, s0: StateVector | None = None
) -> list[tuple[float, StateVector]]:
    """State after each slice boundary, ``N + 1`` samples starting at ``t = 0``."""
    psi = (s0 or StateVector.ground()).as_array()
    c, s = slice_parameters(atom.delta, atom.omega_r, w.dt)
    c = complex(c)
    out = [(0.0, StateVector.from_array(psi))]
    for n, phi in enumerate(w.phases):
        u = su2_from_ck(np.conj(c), -1j * float(s) * np.exp(-1j * phi))
        psi = u @ psi
        # renormalise against roundoff drift over long pulses
        psi = psi / np.linalg.norm(psi)
        out.append(((n + 1) * w.dt, StateVector.from_array(psi)))
    return out


def free_evolution(delta: float, tau: float, extra_phase: float = 0.0) -> np.ndarray:
    """Dwell-time propagator with detuning accrual and an injected phase.

    ``diag(exp(-i theta / 2), exp(+i theta / 2))`` with
    ``theta = delta * tau - extra_phase``.
    """
    _check_finite(delta=delta, tau=tau, extra_phase=extra_phase)
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    theta = delta * tau - extra_phase
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def flip_reverse(w: PulseWaveform) -> PulseWaveform:
    """Time-reversed, sign-inverted profile ``-phi(tau - t)``.

    Its propagator is the transpose of the original for every atom.
    """
    return w.with_phases(-w.phases[::-1])


def rotation_axis_angle(u: np.ndarray) -> Rotation:
    """Bloch-sphere axis and angle of a 2x2 unitary.

    The global phase (including the SU(2) sign) is removed, so the angle lies
    in ``[0, pi]``. At ``angle == pi`` the axis is only defined up to sign; it
    is then chosen with its first nonzero component positive.
    """
    u = np.asarray(u, dtype=complex)
    det = np.linalg.det(u)
    u = u / np.sqrt(det)
    # u = cos(t/2) I - i sin(t/2) n.sigma
    cos_half = 0.5 * (u[0, 0] + u[1, 1]).real
    nx = -0.5 * (u[0, 1] + u[1, 0]).imag
    ny = 0.5 * (u[1, 0] - u[0, 1]).real
    nz = -0.5 * (u[0, 0] - u[1, 1]).imag
    vec = np.array([nx, ny, nz])
    if cos_half < 0:
        cos_half, vec = -cos_half, -vec
    sin_half = float(np.linalg.norm(vec))
    angle = 2.0 * math.atan2(sin_half, cos_half)
    if angle < DEGENERATE_ANGLE:
        return Rotation(np.zeros(3), angle, True)
    axis = vec / sin_half
    if abs(cos_half) < 1e-12:
        nonzero = np.flatnonzero(np.abs(axis) > 1e-12)
        if nonzero.size and axis[nonzero[0]] < 0:
            axis = -axis
    return Rotation(axis, angle, False)
