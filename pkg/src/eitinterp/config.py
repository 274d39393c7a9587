"""Experiment configuration read from a flat ``[experiment]`` INI section."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

METHODS = ("linear", "geometric")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    m: int = 32
    m_values: tuple[int, ...] = (8, 16, 24, 32, 40)
    forward_refinement: int = 6
    reconstruction_refinement: int = 5
    pixel_level: int = 0
    coverage: float = 0.5
    phantom: str = "fig1"
    sigma0: float = 1.0
    noise: float = 0.001
    figure_noise: tuple[float, ...] = (1e-5, 1e-3)
    seed: int = 0
    symmetrize_noise: bool = False
    methods: tuple[str, ...] = METHODS
    radii: tuple[float, ...] = (0.7, 0.8, 0.9)
    out: str = "runs/default"

    def __post_init__(self):
        if self.forward_refinement == self.reconstruction_refinement:
            raise ConfigError(
                "forward and reconstruction refinement are equal: refusing to commit an inverse crime"
            )
        for m in (self.m, *self.m_values):
            if m < 5:
                raise ConfigError(f"electrode count must be at least 5, got {m}")
        for r in self.radii:
            if not 0 < r < 1:
                raise ConfigError(f"bound radius {r} outside (0, 1)")
        for meth in self.methods:
            if meth not in METHODS:
                raise ConfigError(f"unknown interpolation method {meth!r}")
        if self.noise < 0 or any(d < 0 for d in self.figure_noise):
            raise ConfigError("noise levels must be non-negative")
        if self.sigma0 <= 0:
            raise ConfigError("reference conductivity must be positive")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_text(self) -> str:
        lines = ["[experiment]"]
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name: str, raw: str, default):
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        items = [s.strip() for s in raw.split(",") if s.strip()]
        kind = type(default[0]) if default else str
        try:
            return tuple(kind(s) for s in items)
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from None
    try:
        return type(default)(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read ``path`` (if given) over the defaults, then apply non-None overrides."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if "experiment" not in parser:
            raise ConfigError(f"{path}: missing [experiment] section")
        defaults = {f.name: f.default for f in dataclasses.fields(ExperimentConfig)}
        for key, raw in parser["experiment"].items():
            if key not in defaults:
                raise ConfigError(f"{path}: unknown key {key!r}")
            values[key] = _convert(key, raw, defaults[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
