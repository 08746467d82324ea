"""Waveform files and result tables.

Waveform files are tab-separated text. Header lines start with ``#`` and hold
``key = value`` metadata; one column line follows, then one row per slice::

    # raman-grape waveform v1
    # omega_nominal_rad_per_s = 1947787.4452256716
    # rabi_frequency_hz = 310000.0
    # dt_s = 1.2e-07
    # n_steps = 100
    n	phi_rad	i_value	q_value
    0	0.123	0.1226...	0.9924...

Phases are written with ``repr``, the shortest decimal that parses back to the
same double, so a write/read cycle is bit-exact. ``i_value = sin(phi)`` and
``q_value = cos(phi)`` mirror the I/Q modulator programming; on reading they
must agree with the phase to 1e-12. Files with only ``n`` and ``phi_rad``
columns are accepted and the I/Q values regenerated.
"""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dynamics import PulseWaveform

MAGIC = "# raman-grape waveform v1"
IQ_TOL = 1e-12


class WaveformFormatError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_waveform(w: PulseWaveform, metadata: Mapping[str, object] | None = None) -> str:
    lines = [
        MAGIC,
        f"# omega_nominal_rad_per_s = {_fmt(w.omega_nominal)}",
        f"# rabi_frequency_hz = {_fmt(w.omega_nominal / (2 * math.pi))}",
        f"# dt_s = {_fmt(w.dt)}",
        f"# n_steps = {w.n_steps}",
    ]
    for key, value in (metadata or {}).items():
        lines.append(f"# {key} = {_fmt(value)}")
    lines.append("n\tphi_rad\ti_value\tq_value")
    for n, phi in enumerate(w.phases):
        lines.append(f"{n}\t{_fmt(phi)}\t{_fmt(math.sin(phi))}\t{_fmt(math.cos(phi))}")
    return "\n".join(lines) + "\n"


def write_waveform(path: Path, w: PulseWaveform, metadata: Mapping[str, object] | None = None) -> None:
    atomic_write(path, format_waveform(w, metadata))


def parse_waveform(text: str) -> tuple[PulseWaveform, dict[str, str]]:
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    columns: list[str] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        if columns is None:
            columns = line.split("\t")
            if columns[:2] != ["n", "phi_rad"]:
                raise WaveformFormatError(f"line {lineno}: expected columns 'n', 'phi_rad', got {columns}")
            continue
        fields = line.split("\t")
        if len(fields) != len(columns):
            raise WaveformFormatError(f"line {lineno}: expected {len(columns)} fields, got {len(fields)}")
        rows.append(fields)
    if columns is None or not rows:
        raise WaveformFormatError("no waveform rows found")
    for key in ("omega_nominal_rad_per_s", "dt_s"):
        if key not in meta:
            raise WaveformFormatError(f"missing header field {key!r}")

    try:
        idx = [int(r[0]) for r in rows]
        phases = np.array([float(r[1]) for r in rows])
        omega = float(meta["omega_nominal_rad_per_s"])
        dt = float(meta["dt_s"])
    except ValueError as exc:
        raise WaveformFormatError(str(exc)) from None
    if idx != list(range(len(rows))):
        raise WaveformFormatError("slice indices must run 0, 1, 2, ... in order")
    if "n_steps" in meta and int(meta["n_steps"]) != len(rows):
        raise WaveformFormatError(f"header says {meta['n_steps']} steps, file has {len(rows)}")

    if "i_value" in columns or "q_value" in columns:
        if not {"i_value", "q_value"} <= set(columns):
            raise WaveformFormatError("i_value and q_value must appear together")
        ci, cq = columns.index("i_value"), columns.index("q_value")
        try:
            iv = np.array([float(r[ci]) for r in rows])
            qv = np.array([float(r[cq]) for r in rows])
        except ValueError as exc:
            raise WaveformFormatError(str(exc)) from None
        bad = (
            (np.abs(iv - np.sin(phases)) > IQ_TOL)
            | (np.abs(qv - np.cos(phases)) > IQ_TOL)
            | (np.abs(iv**2 + qv**2 - 1.0) > IQ_TOL)
        )
        if np.any(bad):
            n = int(np.flatnonzero(bad)[0])
            raise WaveformFormatError(f"slice {n}: I/Q values inconsistent with phi = {phases[n]!r}")
    try:
        w = PulseWaveform(phases, dt, omega)
    except ValueError as exc:
        raise WaveformFormatError(str(exc)) from None
    return w, meta


def read_waveform(path: Path) -> tuple[PulseWaveform, dict[str, str]]:
    return parse_waveform(Path(path).read_text())


def format_table(columns: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Tab-separated table with a single header line."""
    out = ["\t".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match header")
        out.append("\t".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    atomic_write(path, format_table(columns, rows))


def read_table(path: Path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split("\t")
    data = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:] if ln.strip()])
    return cols, data.reshape(-1, len(cols))
