import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from raman_grape.ensemble import ThermalSpec, build_ensemble
from raman_grape.fidelity import FidelityKind, ObjectiveSpec
from raman_grape.grape import InitStrategy, OptimizeConfig, mirror_seed, optimize

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
OMEGA = 2 * math.pi * 310e3


def expm_slice(phi, delta, omega_r, dt):
    """Reference slice propagator from the rotating-frame Hamiltonian."""
    h = 0.5 * (omega_r * (math.cos(phi) * SX + math.sin(phi) * SY) + delta * SZ)
    return expm(-1j * h * dt)


def expm_pulse(phases, delta, omega_r, dt):
    u = np.eye(2, dtype=complex)
    for phi in phases:
        u = expm_slice(phi, delta, omega_r, dt) @ u
    return u


def rotation(axis, angle):
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * (n[0] * SX + n[1] * SY + n[2] * SZ)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


HOT_K = 120e-6


@pytest.fixture(scope="session")
def pulses():
    """Inversion, beamsplitter and antisymmetric mirror optimised for 120 uK, +-10 %."""
    out = {}
    t0 = time.perf_counter()
    inv = optimize(OptimizeConfig(
        ObjectiveSpec(FidelityKind.PP_INVERSION, build_ensemble(ThermalSpec(HOT_K), 0.10, 31, 5)),
        OMEGA, n_steps=100, duration=7.4, init=InitStrategy.random_smooth(2.0, 10),
        max_iters=2000, target_fidelity=0.995, n_starts=5, seed=0,
    ))
    out["inversion"] = (inv, time.perf_counter() - t0)

    t0 = time.perf_counter()
    ens = build_ensemble(ThermalSpec(HOT_K), 0.10, 81, 5)
    bs = optimize(OptimizeConfig(
        ObjectiveSpec(FidelityKind.PP_BEAMSPLITTER, ens, smoothness_weight=1e-6),
        OMEGA, n_steps=120, duration=12.0, init=InitStrategy.random_smooth(2.0, 10),
        max_iters=6000, target_fidelity=0.998, n_starts=4, seed=0,
    ))
    mirror = optimize(OptimizeConfig(
        ObjectiveSpec(FidelityKind.UR_180, ens, smoothness_weight=1e-6, antisymmetric=True),
        OMEGA, n_steps=240, duration=24.0, init=InitStrategy.from_waveform(mirror_seed(bs.waveform)),
        max_iters=1500, target_fidelity=0.995, seed=0,
    ))
    out["beamsplitter"], out["mirror"] = bs, mirror
    out["mz_time"] = time.perf_counter() - t0
    return out
