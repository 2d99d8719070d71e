"""Run configuration: a flat INI document with strict validation.

Sections and keys (only ``initial.P0`` is required)::

    [model]    M, m, lambda, rho0, w0, sigma
    [grid]     N (one or three ints), L (one or three floats)
    [initial]  X0, P0 (scalar means along x), beta0 = zero | steady | gaussian,
               amplitude (re, im), width, center, velocity
    [run]      solver = direct | reduced | both, dt, T_max, snapshot_every,
               reduced_dt, output, seed
    [kernel]   times, s_fractions, oracle
    [sweep]    parameter, values
    [analyze]  trajectory, snapshots
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace

from .model import ModelParams, PotentialSpec, sound_speed
from .spectral import GaussianPacket, InitialField, SpectralGrid, SteadyField, ZeroField


class ConfigError(ValueError):
    """Invalid configuration; ``key`` and ``line`` locate the problem."""

    def __init__(self, message, key=None, line=None):
        loc = f" (key {key!r}" + (f", line {line}" if line else "") + ")" if key else ""
        super().__init__(message + loc)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    M: float = 10.0
    m: float = 0.5
    lam: float = 1.0
    rho0: float = 0.01
    w0: float = 1.0
    sigma: float = 1.0
    N: tuple = (64, 64, 64)
    L: tuple = (64.0, 64.0, 64.0)
    X0: tuple = (0.0, 0.0, 0.0)
    P0: tuple = (5.0, 0.0, 0.0)
    beta0: str = "zero"
    amplitude: tuple = (0.1, 0.0)
    width: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    solver: str = "direct"
    dt: float = 0.01
    T_max: float = 30.0
    snapshot_every: float = 1.0
    reduced_dt: float = 0.1
    output: str = ""
    seed: int = 0
    times: tuple = (1.0, 5.0, 10.0)
    s_fractions: tuple = (0.0, 0.5)
    oracle: bool = False
    parameter: str = "speed_over_cs"
    values: tuple = ()
    trajectory: str = ""
    snapshots: str = ""
    warnings: tuple = field(default=(), compare=False)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.M, self.m, self.lam, self.rho0,
                           PotentialSpec("gaussian", self.w0, self.sigma))

    @property
    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.N, self.L)

    @property
    def initial_field(self) -> InitialField:
        if self.beta0 == "zero":
            return ZeroField()
        if self.beta0 == "steady":
            return SteadyField(tuple(self.velocity))
        return GaussianPacket(complex(*self.amplitude), self.width, tuple(self.center))

    @property
    def speed_margin(self) -> float:
        """``c_s - |P0|/M``; positive for subsonic initial data."""
        return sound_speed(self.params) - math.hypot(*self.P0) / self.M

    def with_speed(self, ratio: float) -> "RunConfig":
        """Copy with ``|P0| = ratio * c_s * M`` along the current direction (x if zero)."""
        n = math.hypot(*self.P0)
        d = [p / n for p in self.P0] if n > 0 else [1.0, 0.0, 0.0]
        mag = ratio * sound_speed(self.params) * self.M
        return replace(self, P0=tuple(mag * x for x in d))


# key -> (section, attribute, kind, constraint)
_SCHEMA = {
    ("model", "M"): ("M", "float", "pos"),
    ("model", "m"): ("m", "float", "pos"),
    ("model", "lambda"): ("lam", "float", "pos"),
    ("model", "rho0"): ("rho0", "float", "nonneg"),
    ("model", "w0"): ("w0", "float", None),
    ("model", "sigma"): ("sigma", "float", "pos"),
    ("grid", "N"): ("N", "int3", "pos"),
    ("grid", "L"): ("L", "float3", "pos"),
    ("initial", "X0"): ("X0", "vec3", None),
    ("initial", "P0"): ("P0", "vec3x", None),
    ("initial", "beta0"): ("beta0", "choice:zero,steady,gaussian", None),
    ("initial", "amplitude"): ("amplitude", "vec2", None),
    ("initial", "width"): ("width", "float", "pos"),
    ("initial", "center"): ("center", "vec3", None),
    ("initial", "velocity"): ("velocity", "vec3", None),
    ("run", "solver"): ("solver", "choice:direct,reduced,both", None),
    ("run", "dt"): ("dt", "float", "pos"),
    ("run", "T_max"): ("T_max", "float", "pos"),
    ("run", "snapshot_every"): ("snapshot_every", "float", "nonneg"),
    ("run", "reduced_dt"): ("reduced_dt", "float", "pos"),
    ("run", "output"): ("output", "str", None),
    ("run", "seed"): ("seed", "int", "nonneg"),
    ("kernel", "times"): ("times", "floats", "pos"),
    ("kernel", "s_fractions"): ("s_fractions", "floats", "unit"),
    ("kernel", "oracle"): ("oracle", "bool", None),
    ("sweep", "parameter"): ("parameter", "choice:speed_over_cs,rho0,M", None),
    ("sweep", "values"): ("values", "floats", None),
    ("analyze", "trajectory"): ("trajectory", "str", None),
    ("analyze", "snapshots"): ("snapshots", "str", None),
}
REQUIRED = (("initial", "P0"),)
_SECTIONS = sorted({s for s, _ in _SCHEMA})


def _line_index(text: str) -> dict:
    """Maps ``(section, key)`` to the line where the key is set."""
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:#;]+?)\s*[=:]", line)
        if m and section is not None and not line.startswith(("#", ";")):
            out.setdefault((section, m.group(1).strip()), i)
    return out


def _floats(raw: str):
    parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
    return tuple(float(p) for p in parts)


def _convert(raw: str, kind: str, key: str, line):
    try:
        if kind == "float":
            val = float(raw)
        elif kind == "int":
            val = int(raw)
        elif kind == "str":
            val = raw.strip()
        elif kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            val = low in ("true", "yes", "1")
        elif kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split(",")
            val = raw.strip().lower()
            if val not in options:
                raise ConfigError(f"expected one of {options}, got {raw!r}", key, line)
        elif kind == "floats":
            val = _floats(raw)
        else:
            vals = _floats(raw)
            if kind == "vec3x" and len(vals) == 1:
                vals = (vals[0], 0.0, 0.0)
            elif kind in ("int3", "float3") and len(vals) == 1:
                vals = vals * 3
            want = 2 if kind == "vec2" else 3
            if len(vals) != want:
                raise ConfigError(f"expected {want} values, got {len(vals)}", key, line)
            if kind == "int3":
                if any(v != int(v) for v in vals):
                    raise ValueError(raw)
                vals = tuple(int(v) for v in vals)
            val = vals
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {kind}", key, line) from None
    return val


def _check_range(val, constraint, key, line):
    items = val if isinstance(val, tuple) else (val,)
    for x in items:
        if isinstance(x, float) and not math.isfinite(x):
            raise ConfigError(f"value {x} is not finite", key, line)
        if constraint == "pos" and not x > 0:
            raise ConfigError(f"value {x} out of range: must be positive", key, line)
        if constraint == "nonneg" and not x >= 0:
            raise ConfigError(f"value {x} out of range: must be non-negative", key, line)
        if constraint == "unit" and not 0 <= x <= 1:
            raise ConfigError(f"value {x} out of range: must lie in [0, 1]", key, line)


def parse_config(text: str) -> RunConfig:
    """Parses and validates a configuration document."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", exc.option, exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    lines = _line_index(text)
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", section,
                              _find_section_line(text, section))
    values, seen = {}, set()
    for section in cp.sections():
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            if (section, key) not in _SCHEMA:
                raise ConfigError(f"unknown key in [{section}]", key, line)
            attr, kind, constraint = _SCHEMA[(section, key)]
            val = _convert(raw, kind, key, line)
            _check_range(val, constraint, key, line)
            values[attr] = val
            seen.add((section, key))
    for section, key in REQUIRED:
        if (section, key) not in seen:
            raise ConfigError(f"missing required key in [{section}]", key)
    cfg = RunConfig(**values)
    return _validate(cfg, lines)


def _find_section_line(text, section):
    for i, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == f"[{section}]":
            return i
    return None


def _validate(cfg: RunConfig, lines) -> RunConfig:
    warnings = []
    margin = cfg.speed_margin
    if margin <= 0:
        warnings.append(f"initial speed is not subsonic (c_s - |P0|/M = {margin:.6g})")
    if cfg.beta0 == "steady" and not math.hypot(*cfg.velocity) < sound_speed(cfg.params):
        raise ConfigError("steady initial field needs a subsonic velocity", "velocity",
                          lines.get(("initial", "velocity")))
    if cfg.parameter == "speed_over_cs" and any(not 0 <= v < 1 for v in cfg.values):
        raise ConfigError("speed ratios must lie in [0, 1)", "values",
                          lines.get(("sweep", "values")))
    return replace(cfg, warnings=tuple(warnings))


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ", ".join(_fmt(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def serialize_config(cfg: RunConfig) -> str:
    """Text that :func:`parse_config` maps back to an equal config."""
    by_section = {}
    for (section, key), (attr, _, _) in _SCHEMA.items():
        by_section.setdefault(section, []).append((key, getattr(cfg, attr)))
    out = []
    for section in ("model", "grid", "initial", "run", "kernel", "sweep", "analyze"):
        out.append(f"[{section}]")
        for key, val in by_section[section]:
            text = _fmt(val)
            if text == "" and section in ("sweep", "analyze", "run"):
                continue
            out.append(f"{key} = {text}")
        out.append("")
    return "\n".join(out)


def config_fields():
    return [f.name for f in fields(RunConfig)]
