"""Command-line front end.

    raman-grape <command> CONFIG [--out DIR]

Commands: optimize, fringe-scan, spectral-scan, temporal-scan, contrast-map,
export-waveform, verify. Each reads the ``[<command>]`` section of CONFIG.

Exit codes: 0 ok, 2 config error, 3 runtime or optimisation failure, 4 I/O
error (including missing or malformed waveform files).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .dynamics import (
    AtomParams,
    PulseWaveform,
    evolve_trajectory,
    flip_reverse,
    pulse_propagator,
    rotation_axis_angle,
)
from .ensemble import ThermalSpec, build_ensemble
from .fidelity import FidelityKind, ObjectiveSpec, ensemble_fidelity, is_antisymmetric
from .grape import InitStrategy, OptimizationError, OptimizeConfig, mirror_seed, optimize
from .interferometer import (
    PulseSequence,
    contrast_map,
    fit_fringe,
    fringe_scan,
    rect_sequence,
    rect_waveform,
    retime,
    spectral_scan,
    temporal_scan,
    thermal_ensemble,
    waltz_waveform,
    flip_reverse_sequence,
)
from .io import WaveformFormatError, read_waveform, write_table, write_waveform

log = logging.getLogger("raman_grape")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4
TWO_PI = 2.0 * math.pi

# --- schemas ------------------------------------------------------------------------

THERMAL_KEYS = {
    "temperature": ("temperature", None),
    "rabi_halfwidth": ("fraction", None),
    "n_delta": ("count", 61),
    "n_omega": ("count", 11),
    "delta_span": ("sigma", None),
}

PULSE_KEYS = {
    "pulse": ("choice:file|rect|waltz", "file"),
    "waveform": ("path", None),
    "area": ("angle", None),
    "phase": ("angle", None),
    "rabi_frequency": ("frequency", None),
}

SEQUENCE_KEYS = {
    "sequence": ("choice:rect|grape", "grape"),
    "beamsplitter": ("path", None),
    "mirror": ("path", None),
    "rabi_frequency": ("frequency", None),
    "dwell": ("time", None),
    "inertial_phase": ("angle", None),
    "dwell_phase": ("choice:averaged|coherent|off", "averaged"),
}

SCHEMAS: dict[str, dict[str, tuple[str, Any]]] = {
    "optimize": {
        "kind": ("choice:pp_inversion|pp_beamsplitter|ur_180", "pp_inversion"),
        "antisymmetric": ("bool", False),
        "target_axis_phase": ("angle", None),
        "rabi_frequency": ("frequency", None),
        "duration": ("duration", None),
        "n_steps": ("count", 100),
        "temperature": ("temperature", None),
        "rabi_halfwidth": ("fraction", None),
        "n_delta": ("count", 15),
        "n_omega": ("count", 5),
        "delta_span": ("sigma", None),
        "eval_n_delta": ("count", 61),
        "eval_n_omega": ("count", 11),
        "smoothness_weight": ("per_rad2", None),
        "init": ("choice:constant|random_smooth|from_file|mirror_seed", "random_smooth"),
        "init_phase": ("angle", None),
        "init_amplitude": ("angle", None),
        "init_correlation": ("count", 10),
        "init_waveform": ("path", None),
        "n_starts": ("count", 5),
        "max_iters": ("count", 2000),
        "target_fidelity": ("fraction", None),
        "grad_tol": ("per_rad", None),
        "history_size": ("count", 10),
        "seed": ("count", 0),
        "output": ("word", "pulse"),
    },
    "fringe-scan": {**SEQUENCE_KEYS, **THERMAL_KEYS, "n_phi": ("count", 32), "output": ("word", "fringe")},
    "spectral-scan": {
        **PULSE_KEYS, **THERMAL_KEYS,
        "detuning_min": ("frequency", None),
        "detuning_max": ("frequency", None),
        "n_detuning": ("count", 81),
        "output": ("word", "spectral"),
    },
    "temporal-scan": {
        **PULSE_KEYS, **THERMAL_KEYS,
        "tau_max": ("time", None),
        "n_tau": ("count", 101),
        "output": ("word", "temporal"),
    },
    "contrast-map": {
        **SEQUENCE_KEYS,
        "delta_max": ("frequency", None),
        "n_delta_grid": ("count", 41),
        "omega_error_max": ("fraction", None),
        "n_omega_grid": ("count", 21),
        "n_phi": ("count", 16),
        "output": ("word", "contrast_map"),
    },
    "export-waveform": {
        **PULSE_KEYS,
        "format": ("choice:waveform|iq", "waveform"),
        "output": ("word", "waveform"),
    },
    "verify": {
        "waveform": ("path", None),
        "n_random": ("count", 200),
        "seed": ("count", 0),
    },
}


def _q(cfg: dict, key: str, default: float | None = None) -> float:
    q = cfg.get(key)
    if q is None:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    return q.value


def _require(cfg: dict, key: str):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required key {key!r}")
    return cfg[key]


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def _thermal(cfg: dict) -> tuple[ThermalSpec, float]:
    h = _q(cfg, "rabi_halfwidth", 0.10)
    try:
        spec = ThermalSpec(_q(cfg, "temperature"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not 0 <= h < 1:
        raise ConfigError("rabi_halfwidth must lie in [0, 100) %")
    return spec, h


def _load_pulse(cfg: dict, base: Path) -> PulseWaveform:
    kind = cfg["pulse"]
    omega = cfg.get("rabi_frequency")
    if kind == "file":
        w, _ = read_waveform(_resolve(base, _require(cfg, "waveform")))
        return retime(w, omega.value) if omega is not None else w
    if omega is None:
        raise ConfigError(f"pulse = {kind} needs rabi_frequency")
    if kind == "rect":
        return rect_waveform(_q(cfg, "area", math.pi), _q(cfg, "phase", 0.0), omega.value)
    return waltz_waveform(omega.value)


def _load_sequence(cfg: dict, base: Path) -> PulseSequence:
    kw = dict(
        dwell=_q(cfg, "dwell", 100e-6),
        inertial_phase=_q(cfg, "inertial_phase", 0.0),
        dwell_phase=cfg["dwell_phase"],
    )
    if cfg["sequence"] == "rect":
        return rect_sequence(_q(cfg, "rabi_frequency"), **kw)
    bs, _ = read_waveform(_resolve(base, _require(cfg, "beamsplitter")))
    mirror, _ = read_waveform(_resolve(base, _require(cfg, "mirror")))
    if cfg.get("rabi_frequency") is not None:
        omega = cfg["rabi_frequency"].value
        bs, mirror = retime(bs, omega), retime(mirror, omega)
    return flip_reverse_sequence(bs, mirror, **kw)


# --- commands -------------------------------------------------------------------------


def cmd_optimize(cfg: dict, base: Path, out: Path) -> int:
    omega = _q(cfg, "rabi_frequency")
    duration = _require(cfg, "duration")
    dur_tpi = duration.value if duration.unit == "tpi" else duration.value * omega / math.pi
    spec, h = _thermal(cfg)
    span = _q(cfg, "delta_span", 3.0)
    ens = build_ensemble(spec, h, cfg["n_delta"], cfg["n_omega"], span) if spec.temperature > 0 \
        else build_ensemble(spec, h, 1, cfg["n_omega"], span)
    kind = FidelityKind(cfg["kind"])
    objective = ObjectiveSpec(
        kind, ens, _q(cfg, "smoothness_weight", 1e-4), cfg["antisymmetric"], _q(cfg, "target_axis_phase", 0.0)
    )
    if cfg["init"] == "constant":
        init = InitStrategy.constant(_q(cfg, "init_phase", 0.0))
    elif cfg["init"] == "random_smooth":
        init = InitStrategy.random_smooth(_q(cfg, "init_amplitude", 0.5), cfg["init_correlation"])
    else:
        w0, _ = read_waveform(_resolve(base, _require(cfg, "init_waveform")))
        # mirror_seed: init_waveform is a beamsplitter, doubled into an antisymmetric guess
        init = InitStrategy.from_waveform(mirror_seed(w0) if cfg["init"] == "mirror_seed" else w0)
    try:
        config = OptimizeConfig(
            objective=objective,
            omega_nominal=omega,
            n_steps=cfg["n_steps"],
            duration=dur_tpi,
            init=init,
            max_iters=cfg["max_iters"],
            target_fidelity=_q(cfg, "target_fidelity", 0.99),
            grad_tol=_q(cfg, "grad_tol", 1e-8),
            history_size=cfg["history_size"],
            seed=cfg["seed"],
            n_starts=cfg["n_starts"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = optimize(config)
    eval_ens = thermal_ensemble(spec, h, cfg["eval_n_delta"], cfg["eval_n_omega"], span)
    eval_fid = ensemble_fidelity(report.waveform, kind, eval_ens, objective.target_axis_phase)
    meta = {
        "kind": kind.value,
        "antisymmetric": objective.antisymmetric,
        "fidelity": report.fidelity,
        "eval_fidelity": eval_fid,
        "penalty": report.penalty,
        "seed": config.seed,
        "start": report.start,
        "termination": report.termination.value,
    }
    name = cfg["output"]
    write_waveform(out / f"{name}.wf.tsv", report.waveform, meta)
    write_table(
        out / f"{name}.report.tsv",
        ["iteration", "fidelity", "penalty", "total", "grad_norm_per_rad"],
        [(r.iteration, r.fidelity, r.penalty, r.total, r.grad_norm) for r in report.trace],
    )
    print(f"{name}: fidelity {report.fidelity:.6f} (evaluation ensemble {eval_fid:.6f}), "
          f"{report.iterations} iterations, {report.termination.value}")
    return EXIT_OK


def cmd_fringe_scan(cfg: dict, base: Path, out: Path) -> int:
    seq = _load_sequence(cfg, base)
    spec, h = _thermal(cfg)
    ens = thermal_ensemble(spec, h, cfg["n_delta"], cfg["n_omega"], _q(cfg, "delta_span", 3.0))
    data = fringe_scan(seq, ens, cfg["n_phi"])
    fit = fit_fringe(data)
    name = cfg["output"]
    write_table(out / f"{name}.fringe.tsv", ["phi_bs_rad", "p_e"], zip(data.phi_bs, data.p_e))
    write_table(
        out / f"{name}.fit.tsv",
        ["offset_A", "contrast_B", "phase_rad", "residual_rms"],
        [(fit.offset_A, fit.contrast_B, fit.phase, fit.residual_rms)],
    )
    print(f"{name}: A = {fit.offset_A:.6f}, B = {fit.contrast_B:.6f}, phase = {fit.phase:.6f} rad")
    return EXIT_OK


def cmd_spectral_scan(cfg: dict, base: Path, out: Path) -> int:
    w = _load_pulse(cfg, base)
    spec, h = _thermal(cfg)
    lo = _q(cfg, "detuning_min", -TWO_PI * 1e6)
    hi = _q(cfg, "detuning_max", TWO_PI * 1e6)
    grid = np.linspace(lo, hi, cfg["n_detuning"])
    rows = spectral_scan(w, spec, h, grid, n_delta=cfg["n_delta"], n_omega=cfg["n_omega"],
                         span=_q(cfg, "delta_span", 3.0))
    write_table(
        out / f"{cfg['output']}.spectral.tsv",
        ["delta_laser_hz", "delta_laser_rad_per_s", "p_e"],
        [(d / TWO_PI, d, p) for d, p in rows],
    )
    return EXIT_OK


def cmd_temporal_scan(cfg: dict, base: Path, out: Path) -> int:
    w = _load_pulse(cfg, base)
    spec, h = _thermal(cfg)
    taus = np.linspace(0.0, _q(cfg, "tau_max", w.duration), cfg["n_tau"])
    rows = temporal_scan(w, spec, h, taus, n_delta=cfg["n_delta"], n_omega=cfg["n_omega"],
                         span=_q(cfg, "delta_span", 3.0))
    write_table(out / f"{cfg['output']}.temporal.tsv", ["tau_s", "p_e"], rows)
    return EXIT_OK


def cmd_contrast_map(cfg: dict, base: Path, out: Path) -> int:
    seq = _load_sequence(cfg, base)
    dmax = _q(cfg, "delta_max", seq.omega_eff)
    emax = _q(cfg, "omega_error_max", 0.2)
    deltas = np.linspace(-dmax, dmax, cfg["n_delta_grid"])
    scales = 1.0 + np.linspace(-emax, emax, cfg["n_omega_grid"])
    cm = contrast_map(seq, deltas, scales, cfg["n_phi"])
    rows = [
        (cm.delta_over_omega[i], cm.omega_error[j], cm.contrast[i, j])
        for i in range(deltas.size)
        for j in range(scales.size)
    ]
    write_table(out / f"{cfg['output']}.contrast.tsv", ["delta_over_omega", "omega_error", "contrast_B"], rows)
    print(f"{cfg['output']}: contrast >= 0.9 over {cm.area_fraction(0.9):.3f} of the grid")
    return EXIT_OK


def cmd_export_waveform(cfg: dict, base: Path, out: Path) -> int:
    w = _load_pulse(cfg, base)
    name = cfg["output"]
    if cfg["format"] == "iq":
        write_table(out / f"{name}.iq.tsv", ["n", "i_value", "q_value"],
                    [(n, math.sin(p), math.cos(p)) for n, p in enumerate(w.phases)])
    else:
        write_waveform(out / f"{name}.wf.tsv", w, {"source": cfg["pulse"]})
    return EXIT_OK


def verify_waveform(w: PulseWaveform, n_random: int = 200, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Invariant checks on a waveform over random atoms; returns ``(name, ok, detail)``."""
    rng = np.random.default_rng(seed)
    om = w.omega_nominal
    atoms = [AtomParams(float(d), float(s) * om)
             for d, s in zip(rng.uniform(-3 * om, 3 * om, n_random), rng.uniform(0.5, 1.5, n_random))]
    fr = flip_reverse(w)
    unit_err = transpose_err = norm_err = 0.0
    for atom in atoms:
        u = pulse_propagator(w, atom)
        unit_err = max(unit_err, float(np.max(np.abs(u.conj().T @ u - np.eye(2)))))
        transpose_err = max(transpose_err, float(np.max(np.abs(pulse_propagator(fr, atom) - u.T))))
    for atom in atoms[:10]:
        traj = evolve_trajectory(w, atom)
        norm_err = max(norm_err, max(abs(abs(s.c_g) ** 2 + abs(s.c_e) ** 2 - 1) for _, s in traj))
    iq = np.max(np.abs(np.sin(w.phases) ** 2 + np.cos(w.phases) ** 2 - 1.0))
    checks = [
        ("unitarity", unit_err <= 1e-10, f"max |U^dag U - I| = {unit_err:.2e}"),
        ("flip-reverse transpose", transpose_err <= 1e-12, f"max error {transpose_err:.2e}"),
        ("trajectory normalisation", norm_err <= 1e-10, f"max error {norm_err:.2e}"),
        ("I/Q consistency", iq <= 1e-12, f"max |i^2 + q^2 - 1| = {iq:.2e}"),
    ]
    if is_antisymmetric(w.phases):
        ay = max(abs(rotation_axis_angle(pulse_propagator(w, a)).axis[1]) for a in atoms)
        checks.append(("antisymmetric xz axis", ay <= 1e-8, f"max |axis_y| = {ay:.2e}"))
    return checks


def cmd_verify(cfg: dict, base: Path, out: Path) -> int:
    w, _ = read_waveform(_resolve(base, _require(cfg, "waveform")))
    checks = verify_waveform(w, cfg["n_random"], cfg["seed"])
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_RUNTIME


COMMANDS: dict[str, Callable[[dict, Path, Path], int]] = {
    "optimize": cmd_optimize,
    "fringe-scan": cmd_fringe_scan,
    "spectral-scan": cmd_spectral_scan,
    "temporal-scan": cmd_temporal_scan,
    "contrast-map": cmd_contrast_map,
    "export-waveform": cmd_export_waveform,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raman-grape", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log optimiser progress")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", type=Path, help="INI file with a [<command>] section")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: next to config)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    base = args.config.resolve().parent
    out = args.out if args.out is not None else base
    try:
        cfg = load_config(args.config, args.command, SCHEMAS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, base, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WaveformFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OptimizationError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
