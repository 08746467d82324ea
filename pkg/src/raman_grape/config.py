"""Key-value run configuration with mandatory units.

A config is an INI file with a single section named after the command::

    [optimize]
    kind = pp_inversion
    rabi_frequency = 310 kHz
    duration = 7.4 tpi
    temperature = 120 uK
    rabi_halfwidth = 10 %
    n_steps = 100
    seed = 1

Physical quantities must carry a unit; bare numbers are rejected. Counts and
seeds are plain integers. Cyclic frequencies (Hz, kHz, MHz) are converted to
angular frequency. Unknown keys are an error.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

TWO_PI = 2.0 * math.pi

UNITS: dict[str, dict[str, float]] = {
    "frequency": {"Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": TWO_PI * 1e6, "rad/s": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "duration": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "tpi": 1.0},
    "temperature": {"K": 1.0, "mK": 1e-3, "uK": 1e-6, "nK": 1e-9},
    "angle": {"rad": 1.0, "mrad": 1e-3, "deg": math.pi / 180.0, "pi": math.pi},
    "fraction": {"%": 1e-2, "frac": 1.0},
    "sigma": {"sigma": 1.0},
    "per_rad": {"rad^-1": 1.0},
    "per_rad2": {"rad^-2": 1.0},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Quantity:
    """Parsed physical value in SI (angles in rad, frequencies in rad/s)."""

    value: float
    unit: str


def parse_quantity(text: str, dimension: str) -> Quantity:
    parts = text.split()
    if len(parts) != 2:
        raise ConfigError(f"{text!r}: expected '<number> <unit>' for a {dimension}")
    number, unit = parts
    table = UNITS[dimension]
    if unit not in table:
        raise ConfigError(f"{text!r}: unit {unit!r} is not a {dimension} unit (allowed: {', '.join(table)})")
    try:
        value = float(number)
    except ValueError:
        raise ConfigError(f"{text!r}: {number!r} is not a number") from None
    if not math.isfinite(value):
        raise ConfigError(f"{text!r}: value must be finite")
    factor = table[unit]
    # divide by exact powers of ten so "120 uK" equals the literal 120e-6
    if 0 < factor < 1:
        divisor = round(1 / factor)
        if abs(divisor * factor - 1) < 1e-12:
            return Quantity(value / divisor, unit)
    return Quantity(value * factor, unit)


def parse_count(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"{text!r} is not an integer") from None


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{text!r} is not a boolean")


# field kinds: a unit dimension, or one of "count", "bool", "word", "path"
Schema = Mapping[str, tuple[str, Any]]


def parse_section(items: Mapping[str, str], schema: Schema, where: str) -> dict[str, Any]:
    unknown = sorted(set(items) - set(schema))
    if unknown:
        raise ConfigError(f"[{where}]: unknown key(s) {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for key, (kind, default) in schema.items():
        if key not in items:
            out[key] = default
            continue
        raw = items[key].strip()
        try:
            if kind == "count":
                out[key] = parse_count(raw)
            elif kind == "bool":
                out[key] = parse_bool(raw)
            elif kind in ("word", "path"):
                if not raw:
                    raise ConfigError("empty value")
                out[key] = raw
            elif kind.startswith("choice:"):
                choices = kind.split(":", 1)[1].split("|")
                if raw not in choices:
                    raise ConfigError(f"{raw!r} is not one of {', '.join(choices)}")
                out[key] = raw
            else:
                out[key] = parse_quantity(raw, kind)
        except ConfigError as exc:
            raise ConfigError(f"[{where}] {key}: {exc}") from None
    return out


def load_config(path: Path, command: str, schema: Schema) -> dict[str, Any]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    sections = parser.sections()
    if sections != [command]:
        raise ConfigError(f"{path}: expected exactly one section [{command}], found {sections}")
    return parse_section(dict(parser[command]), schema, command)
