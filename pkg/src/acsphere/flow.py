"""Energy-stable time stepping of the parabolic Allen-Cahn equation

    d_t u = Lap u - W'(u) / eps^2

on the toroidal grid, with diagnostics and unstable-manifold initialization.

Schemes
-------
``convex_split``
    ``(1 + dt S / eps^2 - dt Lap) u+ = u + (dt / eps^2) (S u - W'(u))``.
    With the finite-difference Laplacian the system matrix is an M-matrix,
    which gives a discrete maximum principle, and ``S >= max |W''| / 2``
    makes every step energy decreasing.
``imex``
    ``(1 - dt Lap) u+ = u - (dt / eps^2) W'(u)``; requires ``dt <= eps^2 / 2``.
``secant``
    Discrete-gradient (average vector field) scheme
    ``(u+ - u) / dt = Lap (u+ + u) / 2 - [W(u+) - W(u)] / (eps^2 (u+ - u))``,
    solved by a stabilized fixed-point iteration.  Its discrete energy law
    ``E(u+) - E(u) = -dt * eps * |(u+ - u) / dt|^2`` holds to solver accuracy.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, EnergyIncreaseError, NumericalError
from .geometry import (HelmholtzSolver, Symmetrizer, TorusGrid, dirichlet_form, dirichlet_pairing,
                       integrate, laplace_beltrami)
from .potential import DoubleWell
from .snapshot import write_snapshot
from .stationary import RadialProfile, lift_profile

log = logging.getLogger(__name__)

SCHEMES = ("convex_split", "imex", "secant")
LOG_HEADER = ["step", "time", "energy", "area_proxy", "dissipation", "discrepancy", "max_abs_u"]
NORMALIZATION_AREA = 5 * np.pi
# largest |u| accepted as round-off above the invariant interval [-1, 1]
ROUNDOFF_BOUND = 1.0 + 8 * np.finfo(float).eps
# energies are indistinguishable from zero below this
ENERGY_FLOOR = 1e-20


def energy_split(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
                 angular: str = "fd") -> tuple[float, float]:
    """Dirichlet part ``(eps/2) int |grad u|^2`` and potential part ``int W(u)/eps``."""
    W = W or DoubleWell()
    u = grid.check_field(u)
    return 0.5 * eps * dirichlet_form(grid, u, angular), integrate(grid, W.W(u)) / eps


def energy(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
           angular: str = "fd") -> float:
    """The Allen-Cahn energy ``int (eps/2)|grad u|^2 + W(u)/eps``."""
    d, p = energy_split(grid, u, eps, W, angular)
    return d + p


def energy_change(grid: TorusGrid, u, v, eps: float, W: DoubleWell | None = None,
                  angular: str = "fd") -> float:
    """``E(v) - E(u)`` assembled from the increment ``v - u``.

    Uses ``|grad v|^2 - |grad u|^2 = grad(v - u) . grad(v + u)`` and the secant
    slope of W, so the round-off scales with ``|v - u|`` instead of ``|E|``.
    Near a critical point, where one step changes E by less than an ulp of E,
    this still resolves the sign of the change.
    """
    W = W or DoubleWell()
    d = v - u
    return (0.5 * eps * dirichlet_pairing(grid, d, v + u, angular)
            + integrate(grid, d * _secant_slope(W, u, v)) / eps)


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping parameters.

    ``dt=None`` resolves to ``0.1 eps^2``.  ``symmetrize`` holds isometry
    generators; the field is projected onto their invariant subspace after
    every step.  ``tol_stationary`` is relative to the initial energy and
    applies to the dissipation rate ``int eps |d_t u|^2``; 0 disables the
    stationarity stop.
    """

    eps: float = 0.05
    dt: float | None = None
    scheme: str = "convex_split"
    S: float = 2.0
    t_end: float = 10.0
    snapshot_every: int = 0
    symmetrize: tuple = ()
    tol_stationary: float = 1e-8
    log_every: int = 1
    angular: str = "fd"
    check_energy: bool = True
    energy_rtol: float = 1e-12

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.S < 0:
            raise ConfigurationError(f"stabilization S must be nonnegative, got {self.S}")
        if self.scheme == "imex" and self.step_size > 0.5 * self.eps**2:
            raise ConfigurationError(
                f"imex needs dt <= eps^2/2 = {0.5 * self.eps**2:.3g}, got {self.step_size:.3g}")
        if self.log_every < 1 or self.snapshot_every < 0:
            raise ConfigurationError("log_every must be >= 1 and snapshot_every >= 0")

    @property
    def step_size(self) -> float:
        return 0.1 * self.eps**2 if self.dt is None else float(self.dt)


@dataclass(frozen=True, eq=False)
class FlowState:
    """A time slice of the flow.  ``dissipated`` accumulates
    ``sum dt * int eps |(u+ - u)/dt|^2`` over the steps taken."""

    time: float
    field: np.ndarray = field(repr=False)
    energy: float
    step_count: int = 0
    dissipated: float = 0.0
    last_rate: float = np.nan

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.field)))


@dataclass
class EnergyLog:
    """Rows of flow diagnostics, one per logged step."""

    sigma: float
    rows: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def append(self, **row) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> None:
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(LOG_HEADER)
                for r in self.rows:
                    w.writerow([r["step"]] + [repr(float(r[k])) for k in LOG_HEADER[1:]])
        except OSError as exc:
            raise OSError(f"cannot write energy log {path}: {exc}") from exc


class Stepper:
    """Reusable stepping machinery for one grid and configuration."""

    def __init__(self, grid: TorusGrid, cfg: StepperConfig, W: DoubleWell | None = None):
        self.grid = grid
        self.cfg = cfg
        self.W = W or DoubleWell()
        self.solver = HelmholtzSolver(grid, cfg.angular)
        self.symmetrizer = Symmetrizer(grid, cfg.symmetrize) if cfg.symmetrize else None
        self.clipped = 0
        self.max_increase = -np.inf
        self.peak = 0.0
        if cfg.scheme == "convex_split" and cfg.S < 0.5 * float(self.W.ddW(1.0)):
            log.warning("S=%g is below max|W''|/2; energy decrease is not guaranteed", cfg.S)

    def energy(self, u) -> float:
        return energy(self.grid, u, self.cfg.eps, self.W, self.cfg.angular)

    def advance(self, u: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        dt, e2 = cfg.step_size, cfg.eps**2
        k = dt / e2
        if cfg.scheme == "imex":
            out = self.solver.solve(u - k * self.W.dW(u), dt)
        elif cfg.scheme == "convex_split":
            out = self.solver.solve(u + k * (cfg.S * u - self.W.dW(u)), dt, shift=k * cfg.S)
        else:
            out = self._secant(u, dt, k)
        if self.symmetrizer is not None:
            out = self.symmetrizer(out)
        return out

    def _secant(self, u, dt, k, tol=1e-14, max_iter=200):
        S = max(self.cfg.S, 1.0)
        half = 0.5 * dt
        rhs0 = u + half * laplace_beltrami(self.grid, u, self.cfg.angular)
        v = u.copy()
        for _ in range(max_iter):
            b = rhs0 + k * (S * v - _secant_slope(self.W, u, v))
            nv = self.solver.solve(b, half, shift=k * S)
            if np.max(np.abs(nv - v)) < tol:
                return nv
            v = nv
        raise NumericalError("secant scheme fixed-point iteration did not converge")

    def step(self, state: FlowState) -> FlowState:
        cfg = self.cfg
        dt = cfg.step_size
        new = self.advance(state.field)
        m = float(np.max(np.abs(new)))
        if not np.isfinite(m) or m > ROUNDOFF_BOUND:
            raise NumericalError(f"maximum principle violated: max|u| = {m!r}")
        if m > 1.0:
            # far from the layer the exact solution is within an ulp of +-1;
            # the step is exact-arithmetic bounded, so this is round-off
            new = np.clip(new, -1.0, 1.0)
            self.clipped += 1
        e_new = self.energy(new)
        change = energy_change(self.grid, state.field, new, cfg.eps, self.W, cfg.angular)
        self.max_increase = max(self.max_increase, change)
        self.peak = max(self.peak, min(m, 1.0))
        slack = cfg.energy_rtol * abs(state.energy) + ENERGY_FLOOR
        if cfg.check_energy and change > slack:
            raise EnergyIncreaseError(
                f"energy increased from {state.energy!r} to {e_new!r} at step "
                f"{state.step_count + 1} (scheme {cfg.scheme}, dt={dt:.3g})")
        delta = new - state.field
        rate = cfg.eps * integrate(self.grid, delta * delta) / dt**2
        return FlowState(state.time + dt, new, e_new, state.step_count + 1,
                         state.dissipated + dt * rate, rate)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _secant_slope(W: DoubleWell, a, b):
    """``(W(b) - W(a)) / (b - a)`` as the mean of W' on the segment (exact for
    polynomial W' up to degree 7)."""
    if W.is_standard and max(np.max(np.abs(a)), np.max(np.abs(b))) <= W.t_max:
        # (1 - t^2)^2 / 4 factors exactly
        return 0.25 * (a + b) * (a * a + b * b - 2.0)
    d = b - a
    out = np.zeros_like(a)
    for x, w in zip(_GL_NODES, _GL_WEIGHTS):
        out += 0.5 * w * W.dW(a + 0.5 * (x + 1.0) * d)
    return out


def make_state(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
               angular: str = "fd", time: float = 0.0) -> FlowState:
    u = np.array(grid.check_field(u), dtype=float)
    return FlowState(time, u, energy(grid, u, eps, W, angular))


def step(grid: TorusGrid, state: FlowState, cfg: StepperConfig,
         W: DoubleWell | None = None) -> FlowState:
    return Stepper(grid, cfg, W).step(state)


def default_r_max(grid: TorusGrid, profile: RadialProfile) -> float:
    u = lift_profile(profile, grid)
    return 0.1 * np.sqrt(integrate(grid, u * u))


def init_unstable(grid: TorusGrid, profile: RadialProfile, basis, a, eps: float | None = None,
                  W: DoubleWell | None = None, r_max: float | None = None,
                  angular: str = "fd") -> FlowState:
    """``u0 = u_crit + sum_j a_j phi_j``, the linear approximation of the
    unstable-manifold point with coordinates ``a``, at time 0."""
    eps = profile.eps if eps is None else eps
    a = np.asarray(a, dtype=float)
    if a.shape != (len(basis),):
        raise ConfigurationError(f"need {len(basis)} unstable coordinates, got shape {a.shape}")
    r_max = default_r_max(grid, profile) if r_max is None else r_max
    if np.linalg.norm(a) > r_max:
        raise ConfigurationError(f"|a| = {np.linalg.norm(a):.4g} exceeds r_max = {r_max:.4g}")
    u = lift_profile(profile, grid)
    for aj, phi in zip(a, basis):
        if aj != 0.0:
            u = u + aj * phi
    m = float(np.max(np.abs(u)))
    if m >= 1.0:
        raise ConfigurationError(f"initial amplitude too large: max|u0| = {m:.6f} >= 1")
    return make_state(grid, u, eps, W or profile.W, angular)


def run(grid: TorusGrid, state: FlowState, cfg: StepperConfig, W: DoubleWell | None = None,
        snapshot_dir=None, stop=None, on_log=None, max_steps: int | None = None):
    """Integrate until ``t_end``, stationarity, or ``stop(state)`` is true.

    Returns the final state and the :class:`EnergyLog`.  Rows are logged every
    ``cfg.log_every`` steps and always for the first and last state.
    ``on_log(state, row)`` is called for every logged row.
    """
    from .interface import discrepancy

    stepper = Stepper(grid, cfg, W)
    W = stepper.W
    sigma = W.sigma
    elog = EnergyLog(sigma)
    e0 = state.energy
    tol = cfg.tol_stationary * abs(e0) if cfg.tol_stationary > 0 else -1.0
    snap_dir = Path(snapshot_dir) if snapshot_dir is not None else None
    if snap_dir is not None:
        snap_dir.mkdir(parents=True, exist_ok=True)

    def record(s: FlowState):
        row = dict(step=s.step_count, time=s.time, energy=s.energy,
                   area_proxy=s.energy / (2 * sigma), dissipation=s.last_rate,
                   discrepancy=discrepancy(grid, s.field, cfg.eps, W, cfg.angular),
                   max_abs_u=s.max_abs)
        elog.append(**row)
        if on_log is not None:
            on_log(s, row)

    def snapshot(s: FlowState):
        if snap_dir is not None:
            write_snapshot(snap_dir / f"snap_{s.step_count:08d}.bin", grid.shape, cfg.eps,
                           s.time, s.field)

    record(state)
    snapshot(state)
    reason = "t_end"
    dt = cfg.step_size
    while state.time < cfg.t_end - 0.5 * dt:
        if max_steps is not None and state.step_count >= max_steps:
            reason = "max_steps"
            break
        state = stepper.step(state)
        if state.step_count % cfg.log_every == 0:
            record(state)
        if cfg.snapshot_every and state.step_count % cfg.snapshot_every == 0:
            snapshot(state)
        if state.last_rate <= tol:
            reason = "stationary"
            break
        if stop is not None and stop(state):
            reason = "stop"
            break
    if not elog.rows or elog.rows[-1]["step"] != state.step_count:
        record(state)
    if snap_dir is not None and cfg.snapshot_every and state.step_count % cfg.snapshot_every:
        snapshot(state)
    elog.notes.update(reason=reason, steps=state.step_count, dissipated=state.dissipated,
                      scheme=cfg.scheme, dt=dt, clipped_steps=stepper.clipped,
                      max_energy_increase=stepper.max_increase, peak_abs_u=stepper.peak)
    return state, elog


def crossings(log: EnergyLog, sigma: float, area: float = NORMALIZATION_AREA) -> int:
    """Number of times the logged energy passes the level ``2 sigma area``."""
    e = log.column("energy") - 2 * sigma * area
    s = np.sign(e)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def normalize_time(log: EnergyLog, sigma: float, area: float = NORMALIZATION_AREA) -> float:
    """Time at which the energy equals ``2 sigma area`` (linear interpolation).

    The energy is nonincreasing along the log, so the first crossing is the
    only one.
    """
    level = 2 * sigma * area
    e = log.column("energy")
    t = log.column("time")
    if e.size == 0 or not (e.min() <= level <= e.max()):
        lo, hi = (e.min(), e.max()) if e.size else (np.nan, np.nan)
        raise NumericalError(
            f"energy level {level:.6g} not crossed; log spans [{lo:.6g}, {hi:.6g}]")
    hit = np.nonzero(e == level)[0]
    if hit.size:
        return float(t[hit[0]])
    i = int(np.nonzero(e < level)[0][0])
    # e[i-1] > level > e[i]
    w = (e[i - 1] - level) / (e[i - 1] - e[i])
    return float(t[i - 1] + w * (t[i] - t[i - 1]))
