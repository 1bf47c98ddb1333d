"""Flat INI run configuration with strict validation and canonical emission.

Sections are [damping], [problem], [grid], [controls] and [output].  Every key
has a type and a default (except the six problem-defining ones), unknown keys
are rejected, and emit() writes every effective value so that a manifest
parses back to the identical config.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass
from typing import Any, Optional

from critwave.core import PROFILE_SHAPES, critical_exponent

REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class UnknownKey(ConfigError):
    pass


class TypeMismatch(ConfigError):
    pass


class ConstraintViolation(ConfigError):
    pass


@dataclass(frozen=True)
class Key:
    kind: str  # float, int, str, floats
    default: Any = REQUIRED
    check: Optional[tuple] = None  # (predicate, message)


def _pos(x):
    return x > 0


SCHEMA = {
    "damping": {
        "a0": Key("float", check=(_pos, "must be > 0")),
        "alpha": Key("float"),
        "beta": Key("float", check=(lambda x: x > -1, "must be > -1")),
    },
    "problem": {
        "dim": Key("int", check=(lambda x: x >= 1, "must be >= 1")),
        "p": Key("float", check=(lambda x: x > 1, "must be > 1")),
        "epsilon": Key("float", check=(lambda x: x >= 0, "must be >= 0")),
        "u0_shape": Key("str", "bump", (lambda x: x in PROFILE_SHAPES, f"must be one of {PROFILE_SHAPES}")),
        "u0_amplitude": Key("float", 1.0),
        "u0_radius": Key("float", 1.0, (_pos, "must be > 0")),
        "u1_shape": Key("str", "zero", (lambda x: x in PROFILE_SHAPES, f"must be one of {PROFILE_SHAPES}")),
        "u1_amplitude": Key("float", 0.0),
        "u1_radius": Key("float", 1.0, (_pos, "must be > 0")),
        "R0": Key("float", 1.0, (_pos, "must be > 0")),
    },
    "grid": {
        "dr": Key("float", 0.0078125, (_pos, "must be > 0")),
        "halo": Key("int", 8, (lambda x: x >= 4, "must be >= 4")),
        "verify_r_max": Key("float", 100.0, (_pos, "must be > 0")),
        "verify_t_max": Key("float", 100.0, (_pos, "must be > 0")),
        "verify_n_r": Key("int", 512, (lambda x: x >= 8, "must be >= 8")),
        "verify_n_t": Key("int", 64, (lambda x: x >= 2, "must be >= 2")),
    },
    "controls": {
        "t_max": Key("float", 200.0, (_pos, "must be > 0")),
        "blowup_threshold": Key("float", 1e6, (lambda x: x > 1, "must be > 1")),
        "record_every": Key("int", 128, (lambda x: x >= 1, "must be >= 1")),
        "cfl": Key("float", 0.5, (lambda x: 0 < x <= 0.9, "must lie in (0, 0.9]")),
        "delta0": Key("float", 0.0, (lambda x: x >= 0, "must be >= 0 (0 selects the default)")),
        "seed": Key("int", 0),
        "corpus_size": Key("int", 100, (lambda x: x >= 1, "must be >= 1")),
        "sweep_eps": Key("floats", (0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625),
                         (lambda xs: len(xs) >= 2 and all(x > 0 for x in xs), "needs >= 2 positive values")),
        "probe_R": Key("floats", (1.0, 2.0, 4.0, 8.0),
                       (lambda xs: len(xs) >= 1 and all(x > 0 for x in xs), "needs positive values")),
        "energy_convention": Key("str", "printed",
                                 (lambda x: x in ("printed", "consistent"), "must be printed or consistent")),
    },
    "output": {
        "output_dir": Key("str", ""),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values[section][key]`` holds typed values."""

    values: dict

    def __getitem__(self, dotted: str):
        sec, key = dotted.split(".")
        return self.values[sec][key]

    def section(self, name: str) -> dict:
        return dict(self.values[name])

    def emit(self) -> str:
        return emit(self)

    def sha256(self) -> str:
        return hashlib.sha256(emit(self).encode("utf-8")).hexdigest()

    def as_dict(self) -> dict:
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
                for s, kv in self.values.items()}

    def with_value(self, dotted: str, raw: str) -> "RunConfig":
        sec, key = dotted.split(".")
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals[sec][key] = _convert(f"{sec}.{key}", SCHEMA[sec][key], raw)
        return _validate(vals, None)


def format_float(x: float) -> str:
    return "%.17g" % x


def _convert(path: str, spec: Key, raw: str):
    raw = raw.strip()
    try:
        if spec.kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if spec.kind == "int":
            return int(raw)
        if spec.kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise TypeMismatch(path, f"expected {spec.kind}, got {raw!r}") from None


def parse_config(text: str, subcommand: Optional[str] = None) -> RunConfig:
    """Parse and validate INI text; ``subcommand`` enables command-specific constraints."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str  # keys are case-sensitive (R0)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise TypeMismatch("<document>", f"malformed INI: {exc}") from None
    vals = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise UnknownKey(sec, "unknown section")
    for sec, keys in SCHEMA.items():
        vals[sec] = {}
        present = cp[sec] if cp.has_section(sec) else {}
        for key in present:
            if key not in keys:
                raise UnknownKey(f"{sec}.{key}", "unknown key")
        for key, spec in keys.items():
            path = f"{sec}.{key}"
            if key in present:
                vals[sec][key] = _convert(path, spec, present[key])
            elif spec.default is REQUIRED:
                raise ConstraintViolation(path, "required key is missing")
            else:
                vals[sec][key] = spec.default
    return _validate(vals, subcommand)


def _validate(vals: dict, subcommand: Optional[str]) -> RunConfig:
    for sec, keys in SCHEMA.items():
        for key, spec in keys.items():
            if spec.check is not None and not spec.check[0](vals[sec][key]):
                raise ConstraintViolation(f"{sec}.{key}", spec.check[1])
    prob, damp = vals["problem"], vals["damping"]
    for name in ("u0", "u1"):
        if prob[f"{name}_shape"] != "zero" and prob[f"{name}_amplitude"] != 0:
            if prob[f"{name}_radius"] > prob["R0"] * (1 + 1e-12):
                raise ConstraintViolation(f"problem.{name}_radius", "exceeds R0")
    if damp["alpha"] >= prob["dim"]:
        raise ConstraintViolation("damping.alpha", "must be below dim")
    if subcommand in ("sweep", "testfn"):
        if damp["alpha"] >= 0:
            raise ConstraintViolation("damping.alpha", "blow-up experiments require alpha < 0")
        pc = critical_exponent(prob["dim"], damp["alpha"])
        if prob["p"] > pc * (1 + 1e-12):
            raise ConstraintViolation("problem.p", f"must not exceed p_c = {pc:g} for blow-up experiments")
    if subcommand == "verify-weight" and damp["alpha"] >= 0:
        raise ConstraintViolation("damping.alpha", "weight calibration requires alpha < 0")
    return RunConfig(vals)


def emit(cfg: RunConfig) -> str:
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key, spec in keys.items():
            v = cfg.values[sec][key]
            if spec.kind == "float":
                s = format_float(v)
            elif spec.kind == "floats":
                s = ", ".join(format_float(x) for x in v)
            else:
                s = str(v)
            lines.append(f"{key} = {s}")
        lines.append("")
    return "\n".join(lines)
