"""Run configuration: defaults, an optional key=value file, and command-line overrides."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

MIN_STEPS = 100


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """All physical inputs in units hbar = m = 1.

    ``hbar`` and ``mass`` only rescale energy-valued outputs for display.
    """

    tf: float = 1.0
    theta0: float = 0.0
    thetaf: float = math.pi / 2
    h_over_h0: float = 2.0
    field: str = "invariant"          # invariant | y-axis
    omega0: float = 1.0
    omegaf: float = 0.1
    omega0_tf: float | None = None    # if set, overrides tf = omega0_tf / omega0 for the oscillator
    kappa: float = 1.0
    N: int = 8
    seed: int = 1
    steps: int = 2000
    dt: float = 1e-3                  # Wegner flow step
    s_max: float | None = None        # Wegner horizon (default from the spectral gap)
    t_end: float = 10.0               # Toda / KdV time span
    x_half: float = 20.0              # KdV domain [-x_half, x_half]
    points: int = 2048
    psi_times: str = "0,0.5,1"        # wavefunction dump times as fractions of tf
    cd_times: str = "0.25,0.5,0.75"   # fractions of tf
    hbar: float = 1.0
    mass: float = 1.0
    out: str = "out"

    def __post_init__(self):
        positive = ("tf", "omega0", "omegaf", "kappa", "dt", "t_end", "x_half", "hbar", "mass", "h_over_h0")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("omega0_tf", "s_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.steps < MIN_STEPS:
            raise ConfigError(f"steps must be >= {MIN_STEPS}, got {self.steps}")
        if self.N < 2:
            raise ConfigError("N must be >= 2")
        if self.points < 16:
            raise ConfigError("points must be >= 16")
        if self.field not in ("invariant", "y-axis"):
            raise ConfigError(f"field must be 'invariant' or 'y-axis', got {self.field!r}")
        self.fractions("psi_times")
        self.fractions("cd_times")

    def fractions(self, name: str) -> list[float]:
        try:
            vals = [float(v) for v in getattr(self, name).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        if any(v < 0 or v > 1 for v in vals):
            raise ConfigError(f"{name} entries must lie in [0, 1]")
        return vals

    @property
    def oscillator_tf(self) -> float:
        return self.tf if self.omega0_tf is None else self.omega0_tf / self.omega0


def _field_types() -> dict[str, type]:
    hints = {"float": float, "int": int, "str": str, "float | None": float}
    return {f.name: hints[f.type] for f in fields(RunConfig)}


def coerce(key: str, value: str):
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    if value.strip().lower() in ("none", ""):
        return None
    try:
        return types[key](value.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {types[key].__name__}") from None


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = coerce(key, value)
    return out


def build_config(file: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults, then the file, then overrides (None means not given)."""
    values = read_config_file(file) if file else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(_field_types())
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return replace(RunConfig(), **values)
