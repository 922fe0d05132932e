"""Experiment configuration: flat ``section.key = value`` text files.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored; keys are dotted (``section.name``). Vectors are comma
separated (``wave.direction = 1, 0``). ``time.l`` is either a number or
``h/<n>`` for a step proportional to the mesh size. Unknown keys are
errors. Every key has a default mirroring the plane-wave experiment.
"""
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .assembly import PenaltyParams, PhysicalParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeometrySpec:
    kind: str = "annulus"  # annulus | msh
    R0: float = 1.0
    R: float = 2.0
    n_radial: int = 3
    n_angular: int = 18
    path: str = ""
    refine: int = 0


@dataclass(frozen=True)
class TimeSpec:
    T: float = 1.0
    l: str = "h/20"
    gamma: float = 0.5
    delta: float = 0.0

    def step(self, h):
        s = self.l.strip().replace(" ", "")
        if s.startswith("h/"):
            return h / float(s[2:])
        if s.startswith("h*"):
            return h * float(s[2:])
        return float(s)


@dataclass(frozen=True)
class WaveSpec:
    kind: str = "plane"  # plane | pulse | zero
    direction: tuple = (1.0, 0.0)
    source: tuple = (2.0, 0.0)
    mode: str = "as-written"


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "zero"  # zero | random | standing
    seed: int = 0


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "output"
    energy_stride: int = 1
    snapshot_stride: int = 0


@dataclass(frozen=True)
class SimulationConfig:
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    physics: PhysicalParams = field(default_factory=PhysicalParams)
    penalty: PenaltyParams = field(default_factory=PenaltyParams)
    degree: int = 1
    time: TimeSpec = field(default_factory=TimeSpec)
    wave: WaveSpec = field(default_factory=WaveSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    levels: int = 4
    base_dir: str = "."

    def resolve_path(self, p):
        if p.startswith("builtin:"):
            return p
        path = Path(p)
        return str(path if path.is_absolute() else Path(self.base_dir) / path)


# key -> (section attribute, field name, type)
_SECTIONS = {
    "geometry": ("geometry", GeometrySpec),
    "physics": ("physics", PhysicalParams),
    "penalty": ("penalty", PenaltyParams),
    "time": ("time", TimeSpec),
    "wave": ("wave", WaveSpec),
    "initial": ("initial", InitialSpec),
    "output": ("output", OutputSpec),
}
_ALIASES = {"physics.lambda": "physics.lam"}
_TOP = {"fem.degree": "degree", "study.levels": "levels"}


def _convert(kind, text, key):
    try:
        if kind is float:
            return float(text)
        if kind is int:
            return int(text)
        if kind is tuple:
            return tuple(float(v) for v in text.split(","))
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def _field_types(cls):
    defaults = cls()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}


def parse_config(text, base_dir="."):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        values[key] = (val, lineno)

    sections = {name: {} for name in _SECTIONS}
    top = {}
    for key, (val, lineno) in values.items():
        if key in _TOP:
            top[_TOP[key]] = _convert(int, val, key)
            continue
        sec, _, name = key.partition(".")
        if sec not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        types = _field_types(_SECTIONS[sec][1])
        if name not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        sections[sec][name] = _convert(types[name], val, key)

    try:
        parts = {attr: cls(**sections[sec]) for sec, (attr, cls) in _SECTIONS.items()}
        cfg = SimulationConfig(**parts, **top, base_dir=str(base_dir))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def validate(cfg):
    g = cfg.geometry
    if g.kind not in ("annulus", "msh"):
        raise ConfigError(f"geometry.kind must be annulus or msh, got {g.kind!r}")
    if g.kind == "msh":
        if not g.path:
            raise ConfigError("geometry.path is required for geometry.kind = msh")
        p = cfg.resolve_path(g.path)
        if not p.startswith("builtin:") and not os.path.exists(p):
            raise ConfigError(f"mesh file not found: {p}")
    if cfg.wave.kind not in ("plane", "pulse", "zero"):
        raise ConfigError(f"wave.kind must be plane, pulse or zero, got {cfg.wave.kind!r}")
    if cfg.wave.mode not in ("as-written", "cylindrical"):
        raise ConfigError(f"wave.mode must be as-written or cylindrical, got {cfg.wave.mode!r}")
    if cfg.initial.kind not in ("zero", "random", "standing"):
        raise ConfigError(f"initial.kind must be zero, random or standing, got {cfg.initial.kind!r}")
    if not 1 <= cfg.degree <= 4:
        raise ConfigError("fem.degree must be between 1 and 4")
    try:
        step = cfg.time.step(1.0)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad time.l {cfg.time.l!r}") from None
    if not step > 0 or step == float("inf"):
        raise ConfigError(f"time.l must be positive and finite, got {cfg.time.l!r}")
    if cfg.time.gamma < 0.5 or cfg.time.delta < 0:
        raise ConfigError("time.gamma must be >= 1/2 and time.delta >= 0")
    if cfg.output.energy_stride < 1 or cfg.output.snapshot_stride < 0:
        raise ConfigError("output strides must be positive (snapshot_stride 0 disables)")


def load_config(path):
    if path.startswith("builtin:"):
        return preset(path.split(":", 1)[1])
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(c)) for c in v)
    return str(v)


def serialize_config(cfg):
    lines = []
    for sec, (attr, cls) in _SECTIONS.items():
        obj = getattr(cfg, attr)
        for f in fields(cls):
            name = "lambda" if (sec, f.name) == ("physics", "lam") else f.name
            lines.append(f"{sec}.{name} = {_fmt(getattr(obj, f.name))}")
    lines.append(f"fem.degree = {cfg.degree}")
    lines.append(f"study.levels = {cfg.levels}")
    return "\n".join(lines) + "\n"


def preset(name):
    """Configurations of the two published experiments."""
    if name == "example1":
        return SimulationConfig()
    if name == "example2":
        return SimulationConfig(
            geometry=GeometrySpec(kind="msh", path="builtin:lshape", R=3.0),
            wave=WaveSpec(kind="pulse", source=(2.0, 0.0), mode="as-written"),
        )
    raise ConfigError(f"unknown preset {name!r}")


def with_overrides(cfg, output_dir=None, levels=None, snapshot_stride=None):
    if output_dir is not None:
        cfg = replace(cfg, output=replace(cfg.output, dir=output_dir))
    if snapshot_stride is not None:
        cfg = replace(cfg, output=replace(cfg.output, snapshot_stride=snapshot_stride))
    if levels is not None:
        cfg = replace(cfg, levels=levels)
    return cfg
