"""Plain-text configuration files.

INI layout with one section per parameter group (cavity, spins, drive, sim,
noise, detector, constants).  Keys are the dataclass field names.  Angular
frequencies (``omega_*``, ``g_single`` and lineshape offsets) are written in
Hz and converted to rad/s on load; decay rates and the drive amplitude stay
in 1/s.  The lineshape is a comma-separated list of ``offset_Hz:weight``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import (
    TWO_PI,
    CavityParams,
    DetectorSettings,
    DriveParams,
    NoiseSettings,
    PhysicalConstants,
    ReceiverConfig,
    SimSettings,
    SpinEnsembleParams,
    default_config,
)

SECTIONS = {
    "cavity": CavityParams,
    "spins": SpinEnsembleParams,
    "drive": DriveParams,
    "sim": SimSettings,
    "noise": NoiseSettings,
    "detector": DetectorSettings,
    "constants": PhysicalConstants,
}

# keys stored in Hz in files, rad/s in memory
ANGULAR = {
    ("cavity", "omega_c"),
    ("spins", "omega_s_center"),
    ("spins", "g_single"),
    ("drive", "omega_in"),
}

DEFAULT_CONFIG_PATH = Path(__file__).with_name("default.cfg")


def _init_fields(cls):
    return [f for f in fields(cls) if f.init]


def _format_value(section, key, value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if key == "lineshape":
        return ", ".join(f"{d / TWO_PI!r}:{w!r}" for d, w in value)
    if (section, key) in ANGULAR:
        value = value / TWO_PI
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_lineshape(text):
    out = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item:
            continue
        off, _, w = item.partition(":")
        if not _:
            raise ValueError(f"lineshape entry {item!r} is not offset_Hz:weight")
        out.append((float(off) * TWO_PI, float(w)))
    return tuple(out)


def _parse_value(section, key, text, field_type):
    text = text.strip()
    low = text.lower()
    if key == "lineshape":
        return _parse_lineshape(text)
    if low in ("none", ""):
        return None
    if "bool" in str(field_type):
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if key == "source":
        return text
    if key == "seed":
        return int(text)
    value = float(text)
    if (section, key) in ANGULAR:
        value *= TWO_PI
    return value


def config_to_text(config: ReceiverConfig) -> str:
    """Canonical text form; ``load`` of this text rebuilds ``config``."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, cls in SECTIONS.items():
        obj = getattr(config, section)
        parser[section] = {
            f.name: _format_value(section, f.name, getattr(obj, f.name))
            for f in _init_fields(cls)
        }
    buf = io.StringIO()
    buf.write("# angular frequencies in Hz, rates in 1/s, times in s, powers in W\n")
    parser.write(buf)
    return buf.getvalue()


def write_config(config: ReceiverConfig, path) -> None:
    Path(path).write_text(config_to_text(config))


def _apply(base: ReceiverConfig, entries):
    """Apply ``(section, key, text)`` triples to ``base``; collects every bad
    entry before raising :class:`ConfigError`."""
    groups = {s: {} for s in SECTIONS}
    bad = []
    for section, key, text in entries:
        path = f"{section}.{key}"
        cls = SECTIONS.get(section)
        if cls is None:
            bad.append((path, f"unknown section {section!r}"))
            continue
        known = {f.name: f.type for f in _init_fields(cls)}
        if key not in known:
            bad.append((path, "unknown key"))
            continue
        try:
            groups[section][key] = _parse_value(section, key, text, known[key])
        except ValueError as exc:
            bad.append((path, str(exc)))
    if bad:
        raise ConfigError(bad)

    drive_changes = groups.pop("drive")
    # the value named explicitly wins over the derived one
    if "source" not in drive_changes:
        if "power_in" in drive_changes and "amplitude" not in drive_changes:
            drive_changes["source"] = "power"
            drive_changes["amplitude"] = None
        elif "amplitude" in drive_changes and "power_in" not in drive_changes:
            drive_changes["source"] = "amplitude"
            drive_changes["power_in"] = None
    parts = {s: replace(getattr(base, s), **ch) for s, ch in groups.items()}
    parts["drive"] = replace(base.drive, **drive_changes)
    return ReceiverConfig(**parts)


def parse_config(text: str, base: ReceiverConfig | None = None) -> ReceiverConfig:
    """Parse config text; keys not present keep the values of ``base``
    (the built-in defaults when omitted)."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("<file>", str(exc).splitlines()[0])]) from exc
    entries = [(s, k, v) for s in parser.sections() for k, v in parser[s].items()]
    return _apply(base or default_config(), entries)


def load_config(path=None) -> ReceiverConfig:
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([(str(path), exc.strerror or str(exc))]) from exc
    return parse_config(text)


def parse_override(item: str):
    """``section.key=value`` -> (section, key, value)."""
    lhs, eq, value = item.partition("=")
    section, dot, key = lhs.strip().partition(".")
    if not eq or not dot or not section or not key:
        raise ConfigError([(item, "override must look like section.key=value")])
    return section, key, value


def apply_overrides(config: ReceiverConfig, overrides) -> ReceiverConfig:
    entries = [parse_override(o) for o in overrides]
    return _apply(config, entries) if entries else config


def seeded(config: ReceiverConfig, seed) -> ReceiverConfig:
    if seed is None:
        return config
    return replace(config, noise=replace(config.noise, seed=int(seed)))

