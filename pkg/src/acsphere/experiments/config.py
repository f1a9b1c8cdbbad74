"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..flow import StepperConfig
from ..interface import Thresholds


@dataclass
class ExperimentConfig:
    """Every tunable of the experiment drivers, with defaults.

    ``direction`` is ``q``, ``e1``, ``-e1``, ``orbit`` (use ``theta1`` and
    ``theta2``) or five comma-separated numbers; it is normalized and scaled by
    ``r``.  ``r_max = none`` uses ``0.1 * ||u_crit||_{L^2}``.  ``quad_t > 0``
    makes ``flow`` also estimate the quadratic-error constant at that time.
    """

    n_eta: int = 64
    n_phi1: int = 64
    n_phi2: int = 64
    eps: tuple = (0.05,)
    profile_n: int = 512
    k_max: int = 6
    lift3d: bool = False
    scheme: str = "convex_split"
    dt: float | None = None
    S: float = 2.0
    t_end: float = 20.0
    tol_stationary: float = 1e-8
    log_every: int = 10
    snapshot_every: int = 0
    symmetrize: bool = False
    direction: str = "q"
    r: float = 0.1
    r_max: float | None = None
    theta1: float = np.pi / 4
    theta2: float = np.pi / 4
    orbit_n: int = 8
    quad_t: float = 0.0
    sweep_tol: float = 1e-6
    sweep_t_end: float = 80.0
    plateau_band: float = 0.02
    constant_band: float = 0.05
    area_band: float = 0.10
    fit_residual: float = 0.01
    torus_decisive: float = 0.5
    seed: int = 0
    toy_jitter: float = 1e-3
    output_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        if any(e <= 0 for e in self.eps) or not self.eps:
            raise ConfigurationError(f"eps must be a nonempty list of positive numbers, got {self.eps}")
        if self.r <= 0:
            raise ConfigurationError(f"r must be positive, got {self.r}")
        if self.orbit_n < 1:
            raise ConfigurationError("orbit_n must be >= 1")

    @property
    def dims(self) -> tuple:
        return (self.n_eta, self.n_phi1, self.n_phi2)

    def stepper(self, eps: float | None = None, **overrides) -> StepperConfig:
        kw = dict(eps=self.eps[0] if eps is None else eps, dt=self.dt, scheme=self.scheme,
                  S=self.S, t_end=self.t_end, tol_stationary=self.tol_stationary,
                  log_every=self.log_every, snapshot_every=self.snapshot_every)
        kw.update(overrides)
        return StepperConfig(**kw)

    def thresholds(self) -> Thresholds:
        return Thresholds(self.constant_band, self.area_band, self.fit_residual,
                          self.torus_decisive)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        """Resolved configuration in the same ``key = value`` format."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(float(x)) for x in v)
            elif v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name: str, typ: str, raw: str):
    raw = raw.strip()
    try:
        if "None" in typ and raw.lower() == "none":
            return None
        if typ.startswith("bool"):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ.startswith("int"):
            return int(raw)
        if typ.startswith("float"):
            return float(raw)
        if typ.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigurationError(f"bad value for {name} ({typ}): {raw!r}") from None


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    types = {f.name: str(f.type) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, types[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    if path is None:
        return parse_config("", **overrides)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)
