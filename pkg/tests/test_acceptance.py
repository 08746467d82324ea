"""Acceptance criteria for the package.

Each test records one PASS/FAIL line that is printed in the terminal summary.
The optimised pulses come from the session-scoped ``pulses`` fixture in conftest.
"""

import math
import time

import numpy as np

from raman_grape.dynamics import AtomParams, PulseWaveform, flip_reverse, pulse_propagator, rotation_axis_angle
from raman_grape.ensemble import ThermalSpec, build_ensemble, doppler_sigma
from raman_grape.fidelity import (
    FidelityKind,
    ObjectiveSpec,
    ensemble_fidelity,
    ensemble_objective,
    expand_antisymmetric,
    is_antisymmetric,
)
from raman_grape.grape import InitStrategy, OptimizeConfig, optimize
from raman_grape.interferometer import (
    FringeData,
    FringeFit,
    contrast_map,
    fit_fringe,
    flip_reverse_residual,
    flip_reverse_sequence,
    fringe_grid,
    fringe_scan,
    phase_budget,
    rect_sequence,
    rect_waveform,
    retime,
    spectral_scan,
    thermal_ensemble,
    transfer_halfwidth,
    waltz_waveform,
    wrap_phase,
)
from raman_grape.io import format_waveform, parse_waveform

TWO_PI = 2 * math.pi
OMEGA = TWO_PI * 310e3
OMEGA_SPECTRAL = TWO_PI * 270e3
HOT = ThermalSpec(120e-6)
H = 0.10


def record(log, n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    log.append(line)
    print(line)
    assert ok, line


def eval_ensemble(spec=HOT):
    return thermal_ensemble(spec, H, 61, 11)


def test_criterion_1_gradient_exactness(acceptance_log):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    n_cases = 120
    kinds = list(FidelityKind)
    for case in range(n_cases):
        kind = kinds[case % 3]
        anti = kind is FidelityKind.UR_180 and case % 2 == 0
        n = int(rng.integers(4, 40))
        ens = build_ensemble(ThermalSpec(rng.uniform(1e-6, 200e-6)), rng.uniform(0, 0.2), 5, 3)
        spec = ObjectiveSpec(kind, ens, rng.uniform(0, 1e-2), anti, rng.uniform(-np.pi, np.pi))
        dt = rng.uniform(0.05, 0.5) * math.pi / OMEGA
        x = rng.uniform(-np.pi, np.pi, n // 2 if anti else n)

        def total(v):
            phases = expand_antisymmetric(v, n) if anti else v
            return ensemble_objective(PulseWaveform(phases, dt, OMEGA), spec).total

        g = ensemble_objective(PulseWaveform(expand_antisymmetric(x, n) if anti else x, dt, OMEGA), spec).gradient
        fd = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = 1e-5
            fd[i] = (total(x + e) - total(x - e)) / 2e-5
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    elapsed = time.perf_counter() - t0
    record(acceptance_log, 1, worst <= 1e-6 and elapsed < 30,
           f"max relative gradient error {worst:.2e} over {n_cases} cases in {elapsed:.1f} s")


def test_criterion_2_inversion_replica(pulses, acceptance_log):
    rep, elapsed = pulses["inversion"]
    w = rep.waveform
    fine = ensemble_fidelity(w, FidelityKind.PP_INVERSION, eval_ensemble())
    shape_ok = w.n_steps == 100 and math.isclose(w.duration, 7.4 * math.pi / OMEGA, rel_tol=1e-12)
    record(acceptance_log, 2, shape_ok and rep.fidelity >= 0.99 and fine >= 0.99 and elapsed <= 600,
           f"inversion fidelity {rep.fidelity:.5f} (optimisation ensemble), {fine:.5f} "
           f"(61x11 evaluation ensemble), {elapsed:.1f} s")


def test_criterion_3_beamsplitter_and_mirror(pulses, acceptance_log):
    bs, mirror = pulses["beamsplitter"], pulses["mirror"]
    ens = eval_ensemble()
    f_bs = ensemble_fidelity(bs.waveform, FidelityKind.PP_BEAMSPLITTER, ens)
    f_m = ensemble_fidelity(mirror.waveform, FidelityKind.UR_180, ens)
    anti = is_antisymmetric(mirror.waveform.phases)
    ay = 0.0
    for d in np.linspace(-3, 3, 61) * doppler_sigma(HOT):
        for s in (0.9, 1.0, 1.1):
            rot = rotation_axis_angle(pulse_propagator(mirror.waveform, AtomParams(d, s * OMEGA)))
            if not rot.degenerate:
                ay = max(ay, abs(rot.axis[1]))
    ok = min(bs.fidelity, mirror.fidelity, f_bs, f_m) >= 0.99 and anti and ay <= 1e-8
    record(acceptance_log, 3, ok,
           f"beamsplitter {bs.fidelity:.5f}/{f_bs:.5f}, mirror {mirror.fidelity:.5f}/{f_m:.5f} "
           f"(optimisation/evaluation ensemble), antisymmetric={anti}, max |axis_y| {ay:.1e}")


def test_criterion_4_spectral_scan(pulses, acceptance_log):
    t0 = time.perf_counter()
    cold = ThermalSpec(35e-6)
    grid = np.linspace(-3, 3, 241) * OMEGA_SPECTRAL
    rect = spectral_scan(rect_waveform(math.pi, 0.0, OMEGA_SPECTRAL), cold, H, grid)
    waltz = spectral_scan(waltz_waveform(OMEGA_SPECTRAL), cold, H, grid)
    grape = spectral_scan(retime(pulses["inversion"][0].waveform, OMEGA_SPECTRAL), cold, H, grid)
    centre = int(np.argmin(np.abs(grid)))
    p_rect, p_waltz, p_grape = rect[centre, 1], waltz[centre, 1], grape[centre, 1]
    hw_w, hw_g = transfer_halfwidth(waltz), transfer_halfwidth(grape)
    elapsed = time.perf_counter() - t0
    ok = (abs(p_rect - 0.75) <= 0.08 and p_waltz >= 0.95 and p_grape >= 0.99
          and hw_g >= 2 * hw_w and elapsed < 300)
    record(acceptance_log, 4, ok,
           f"resonant transfer rect {p_rect:.4f}, WALTZ {p_waltz:.4f}, GRAPE {p_grape:.4f}; "
           f">=0.9 half-width ratio GRAPE/WALTZ {hw_g / hw_w:.2f}; {elapsed:.0f} s")


def test_criterion_5_hot_cloud_ordering(pulses, acceptance_log):
    hot = ThermalSpec(150e-6)
    p = {
        name: spectral_scan(w, hot, H, [0.0])[0, 1]
        for name, w in (
            ("rect", rect_waveform(math.pi, 0.0, OMEGA_SPECTRAL)),
            ("waltz", waltz_waveform(OMEGA_SPECTRAL)),
            ("grape", retime(pulses["inversion"][0].waveform, OMEGA_SPECTRAL)),
        )
    }
    ok = p["grape"] > p["waltz"] > p["rect"] and p["rect"] <= 0.65
    record(acceptance_log, 5, ok,
           f"150 uK resonant transfer GRAPE {p['grape']:.4f} > WALTZ {p['waltz']:.4f} > rect {p['rect']:.4f}")


def test_criterion_6_contrast_map(pulses, acceptance_log):
    t0 = time.perf_counter()
    deltas = np.linspace(-1, 1, 41) * OMEGA
    scales = 1 + np.linspace(-0.2, 0.2, 21)
    grape = contrast_map(flip_reverse_sequence(pulses["beamsplitter"].waveform, pulses["mirror"].waveform),
                         deltas, scales)
    rect_seq = rect_sequence(OMEGA)
    rect = contrast_map(rect_seq, deltas, scales)
    b_origin = contrast_map(rect_seq, [0.0], [1.0]).contrast[0, 0]
    b_edge = contrast_map(rect_seq, [OMEGA], [1.0]).contrast[0, 0]
    elapsed = time.perf_counter() - t0
    ok = (grape.area_fraction(0.9) > rect.area_fraction(0.9) and abs(b_origin - 1) <= 1e-12
          and b_edge < 0.6 and elapsed < 300)
    record(acceptance_log, 6, ok,
           f"B>=0.9 area GRAPE {grape.area_fraction(0.9):.3f} vs rect {rect.area_fraction(0.9):.3f}; "
           f"rect B(0) = {b_origin:.12f}, B(delta=Omega) = {b_edge:.3f}")


def test_criterion_7_contrast_ratio(pulses, acceptance_log):
    ens = eval_ensemble(ThermalSpec(94e-6))
    grape = fit_fringe(fringe_scan(flip_reverse_sequence(pulses["beamsplitter"].waveform,
                                                         pulses["mirror"].waveform), ens))
    rect = fit_fringe(fringe_scan(rect_sequence(OMEGA), ens))
    ratio = grape.contrast_B / rect.contrast_B
    record(acceptance_log, 7, ratio > 1.5,
           f"94 uK contrast GRAPE {grape.contrast_B:.4f} / rect {rect.contrast_B:.4f} = {ratio:.3f}")


def test_criterion_8_phase_budget(pulses, acceptance_log):
    rng = np.random.default_rng(8)
    worst_t = 0.0
    for _ in range(1000):
        w = PulseWaveform(rng.uniform(-np.pi, np.pi, int(rng.integers(1, 60))), rng.uniform(0.01, 0.5) / OMEGA * np.pi,
                          OMEGA)
        atom = AtomParams(rng.uniform(-3, 3) * OMEGA, rng.uniform(0.5, 1.5) * OMEGA)
        worst_t = max(worst_t, float(np.max(np.abs(pulse_propagator(flip_reverse(w), atom)
                                                   - pulse_propagator(w, atom).T))))
    bs = pulses["beamsplitter"].waveform
    ens = eval_ensemble()
    worst_rel = 0.0
    for p in ens:
        atom = AtomParams(p.delta, p.omega_scale * OMEGA)
        u1 = pulse_propagator(bs, atom)
        if min(abs(u1[0, 0]), abs(u1[1, 0])) > 1e-6:
            worst_rel = max(worst_rel, abs(flip_reverse_residual(u1, pulse_propagator(flip_reverse(bs), atom))))
    u1 = np.array([[1, -1], [1, 1]]) / math.sqrt(2)  # 90 deg about +y
    worst_rel = max(worst_rel, abs(flip_reverse_residual(u1, u1.T)))
    pb = phase_budget(flip_reverse_sequence(bs, pulses["mirror"].waveform), ens)
    ok = worst_t <= 1e-12 and worst_rel <= 1e-9 and pb.std <= 0.05
    record(acceptance_log, 8, ok,
           f"max |U(flip-reverse) - U^T| {worst_t:.1e}; max +pi relation residual {worst_rel:.1e}; "
           f"delta-phi std {pb.std:.1e} rad over {len(ens)} atoms")


def test_criterion_9_fringe_machinery(pulses, acceptance_log):
    rng = np.random.default_rng(9)
    worst_fit = 0.0
    for _ in range(200):
        a, b, ph = rng.uniform(0.5, 1.5), rng.uniform(0.05, 1), rng.uniform(-np.pi, np.pi)
        phi = fringe_grid(int(rng.choice([16, 32, 48])))
        fit = fit_fringe(FringeData(phi, FringeFit(a, b, ph, 0.0).model(phi)))
        worst_fit = max(worst_fit, abs(fit.offset_A - a), abs(fit.contrast_B - b), abs(wrap_phase(fit.phase - ph)))
    seq = flip_reverse_sequence(pulses["beamsplitter"].waveform, pulses["mirror"].waveform)
    ens = thermal_ensemble(HOT, H, 15, 5)
    base = fit_fringe(fringe_scan(seq, ens)).phase
    worst_lin = max(
        abs(wrap_phase(fit_fringe(fringe_scan(seq.with_inertial_phase(big), ens)).phase - base - big))
        for big in np.linspace(-3, 3, 13)
    )
    worst_res = 0.0
    for _ in range(20):
        atom_ens = thermal_ensemble(ThermalSpec(0.0), 0.0, 1, 1).shifted(rng.uniform(-1, 1) * OMEGA)
        worst_res = max(worst_res, fit_fringe(fringe_scan(seq, atom_ens)).residual_rms)
    ok = worst_fit <= 1e-9 and worst_lin <= 1e-9 and worst_res <= 1e-10
    record(acceptance_log, 9, ok,
           f"synthetic recovery error {worst_fit:.1e}; phase linearity error {worst_lin:.1e}; "
           f"single-atom residual {worst_res:.1e}")


def test_criterion_10_determinism_and_serialisation(pulses, acceptance_log):
    cfg = OptimizeConfig(
        ObjectiveSpec(FidelityKind.PP_INVERSION, build_ensemble(HOT, H, 11, 3)),
        OMEGA, n_steps=40, duration=4.0, init=InitStrategy.random_smooth(1.0, 5), max_iters=100,
        n_starts=2, seed=11,
    )
    texts = [format_waveform(optimize(cfg).waveform).encode() for _ in range(2)]
    identical = texts[0] == texts[1]
    roundtrip = True
    iq_err = 0.0
    for w in (pulses["inversion"][0].waveform, pulses["beamsplitter"].waveform, pulses["mirror"].waveform):
        text = format_waveform(w)
        back, _ = parse_waveform(text)
        roundtrip &= back.phases.tobytes() == w.phases.tobytes() and back.dt == w.dt
        roundtrip &= format_waveform(back) == text
        for line in text.splitlines()[6:]:
            _, _, i, q = (float(v) for v in line.split("\t"))
            iq_err = max(iq_err, abs(i * i + q * q - 1))
    ok = identical and roundtrip and iq_err <= 1e-12
    record(acceptance_log, 10, ok,
           f"seeded reruns byte-identical={identical}; roundtrip exact={roundtrip}; max |i^2+q^2-1| {iq_err:.1e}")
