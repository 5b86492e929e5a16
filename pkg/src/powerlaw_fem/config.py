"""Run configuration: flat ``key = value`` files plus command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields

from .manufactured import CASES
from .params import PowerLawParams, check_admissible
from .solver import SolverConfig

COMMANDS = ("solve", "convergence", "verify")
_SECTION = "run"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    r: float = 2.0
    d: int = 2
    n: int = 2
    levels: int = 3
    case: str = "M1"
    tolerance: float = 1e-10
    linear_tolerance: float = 1e-10
    max_iterations: int = 200
    damping: float | None = None
    epsilon_reg: float | None = None
    out: str = "."

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {', '.join(COMMANDS)}, got {self.command!r}")
        if self.d != 2:
            raise ConfigError(f"only d = 2 is implemented, got d = {self.d}")
        try:
            check_admissible(self.r, self.d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n < 1:
            raise ConfigError(f"n must be at least 1, got {self.n}")
        if self.levels < 1:
            raise ConfigError(f"levels must be at least 1, got {self.levels}")
        if self.command == "convergence" and self.levels < 3:
            raise ConfigError(f"a convergence study needs levels >= 3, got {self.levels}")
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; known: {', '.join(CASES)}")
        if self.epsilon_reg is not None and not self.epsilon_reg >= 0:
            raise ConfigError(f"epsilon_reg must be >= 0, got {self.epsilon_reg}")
        try:
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def params(self) -> PowerLawParams:
        return PowerLawParams.from_r(self.r, self.d, self.epsilon_reg)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            damping=self.damping,
            linear_tolerance=self.linear_tolerance,
        )


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() in ("", "none", "default") else float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r} in {path}")
        values[key] = _convert(key, raw.strip())
    return values


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then file values, then non-None ``overrides``."""
    values = read_config_file(path) if path is not None else {}
    for key, val in (overrides or {}).items():
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        if val is not None:
            values[key] = val
    return RunConfig(**values).validate()
