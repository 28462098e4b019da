"""Sectioned ``key = value`` configuration files.

Sections: actuator, circuit, noise, estimation, calibration, mux, scenario.
Every key is optional and defaults to the dataclass default; unknown
sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from pathlib import Path

from .actuator import ActuatorParams, ModelError, calibrate_force_coefficient
from .circuit import CircuitParams, NoiseParams
from .estimation import RmsConfig
from .evaluation.scenario import CalibrationSettings, Scenario, Setup
from .mux import MuxPlan

SECTIONS = ("actuator", "circuit", "noise", "estimation", "calibration", "mux", "scenario")

# derived k_f: static balance at this drive and load lands at this stroke fraction
ACTUATOR_EXTRA = {"equilibrium_fraction": None, "equilibrium_drive_kv": 4.0, "equilibrium_load_kg": 0.0478}


class ConfigError(ValueError):
    pass


def _keys(cls, skip=()):
    return {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}


SECTION_FIELDS = {
    "actuator": _keys(ActuatorParams),
    "circuit": _keys(CircuitParams, ("ripple",)),
    "noise": _keys(NoiseParams),
    "estimation": _keys(RmsConfig, ("fs", "f_sense")),
    "calibration": _keys(CalibrationSettings),
    "mux": _keys(MuxPlan),
    "scenario": _keys(Scenario),
}


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _coerce(raw: str, default, name: str):
    raw = raw.strip()
    if name == "overrides":
        out = {}
        for item in filter(None, (p.strip() for p in raw.split(","))):
            key, sep, val = item.partition(":")
            if not sep:
                raise ValueError(f"override {item!r} is not key:value")
            out[key.strip()] = float(val)
        return out
    if name == "order":
        return None if raw.lower() in ("", "none") else tuple(int(p) for p in raw.split(","))
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        return float(raw)
    if isinstance(default, tuple):
        items = [p.strip() for p in raw.split(",") if p.strip()]
        if default and isinstance(default[0], str):
            return tuple(items)
        return tuple(float(p) for p in items)
    return raw


def _default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def parse_config(text: str, source: str = "<config>") -> Setup:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from err
    values: dict[str, dict] = {s: {} for s in SECTIONS}
    extra = dict(ACTUATOR_EXTRA)
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        fields = SECTION_FIELDS[section]
        for key, raw in cp.items(section):
            if section == "actuator" and key in ACTUATOR_EXTRA:
                try:
                    extra[key] = float(raw)
                except ValueError as err:
                    raise ConfigError(f"{source}: [{section}] {key}: {err}") from err
                continue
            if key not in fields:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = _coerce(raw, _default(fields[key]), key)
            except ValueError as err:
                raise ConfigError(f"{source}: [{section}] {key}: {err}") from err
    try:
        return _build(values, extra)
    except (ModelError, TypeError) as err:
        raise ConfigError(f"{source}: {err}") from err


def _build(values: dict, extra: dict) -> Setup:
    act = ActuatorParams(**values["actuator"])
    if extra["equilibrium_fraction"] is not None:
        if "k_f" in values["actuator"]:
            raise ModelError("give either k_f or equilibrium_fraction, not both")
        kf = calibrate_force_coefficient(act, extra["equilibrium_drive_kv"], extra["equilibrium_load_kg"],
                                         extra["equilibrium_fraction"])
        act = act.with_(k_f=kf)
    circ = CircuitParams(ripple=NoiseParams(**values["noise"]), **values["circuit"])
    rms = RmsConfig(fs=circ.fs, f_sense=circ.f_sense, **values["estimation"])
    scenario = Scenario(**values["scenario"])
    scenario.validate()
    return Setup(act, circ, rms, CalibrationSettings(**values["calibration"]), MuxPlan(**values["mux"]), scenario)


def load_config(path) -> Setup:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {p}: {err}") from err
    return parse_config(text, str(p))


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    if isinstance(value, dict):
        return ", ".join(f"{k}:{_render(v)}" for k, v in value.items())
    if value is None:
        return "none"
    return str(value)


def default_config_text() -> str:
    """Every recognised key with its default value."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for name, f in SECTION_FIELDS[section].items():
            d = _default(f)
            if name == "overrides":
                lines.append(f"# {name} = actuator.tau_c:0.0, circuit.cmrr_db:40")
                continue
            lines.append(f"{name} = {_render(d)}")
        if section == "actuator":
            lines.append("# equilibrium_fraction = 0.6   # derive k_f instead of giving it")
            lines.append(f"# equilibrium_drive_kv = {ACTUATOR_EXTRA['equilibrium_drive_kv']}")
            lines.append(f"# equilibrium_load_kg = {ACTUATOR_EXTRA['equilibrium_load_kg']}")
        lines.append("")
    return "\n".join(lines)
