"""Symmetric critical points of the Allen-Cahn energy as 1D boundary-value
problems.

Two reductions are used:

* ``eta`` profiles u(eta) on (0, pi/2), odd under eta -> pi/2 - eta; these
  vanish on the Clifford torus eta = pi/4.
* ``geodesic`` profiles u(r), r the distance to a pole y, odd under
  r -> pi - r; these vanish on the equator y^perp.

In both cases the equation ``eps^2 Lap u = W'(u)`` is solved on the half
interval with an odd ghost cell, then reflected, so the symmetry holds
bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .errors import ConfigurationError, ConvergenceError
from .geometry import RadialGrid, TorusGrid
from .potential import DoubleWell, heteroclinic

NEWTON_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A 1D critical point together with its grid and solver diagnostics."""

    coordinate: str
    grid: RadialGrid
    values: np.ndarray
    eps: float
    W: DoubleWell = field(default_factory=DoubleWell)
    residual: float = np.nan
    iterations: int = 0

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def n(self) -> int:
        return self.grid.n

    @classmethod
    def constant(cls, value: float, eps: float, n: int = 64, coordinate: str = "eta",
                 W: DoubleWell | None = None) -> "RadialProfile":
        g = RadialGrid(coordinate, n)
        return cls(coordinate, g, np.full(n, float(value)), eps, W or DoubleWell(), 0.0, 0)

    def energy_split(self) -> tuple[float, float]:
        """(Dirichlet part, potential part) of the S^3 energy of the profile."""
        dir_ = 0.5 * self.eps * self.grid.dirichlet(self.values)
        pot = self.grid.integrate(self.W.W(self.values)) / self.eps
        return dir_, pot

    def energy(self) -> float:
        return sum(self.energy_split())

    def area_proxy(self) -> float:
        return self.energy() / (2.0 * self.W.sigma)

    def equation_residual(self) -> np.ndarray:
        return self.eps**2 * self.grid.laplacian(self.values) - self.W.dW(self.values)

    def equipartition_defect(self) -> float:
        """Quadrature of |eps |u'|^2 / 2 - W(u) / eps| over S^3."""
        g = self.grid
        d2 = np.diff(self.values) ** 2 / g.h**2
        # split each face term evenly between its two cells, as in the 3D version
        jf = g.face_metric[1:-1]
        nodal = np.zeros(g.n)
        nodal[:-1] += 0.5 * jf * d2 * g.h
        nodal[1:] += 0.5 * jf * d2 * g.h
        nodal /= g.cell_volume
        dens = 0.5 * self.eps * nodal - self.W.W(self.values) / self.eps
        return g.integrate(np.abs(dens))

    def to_csv(self, path) -> None:
        name = "eta" if self.coordinate == "eta" else "r"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([name, "value"])
            for x, v in zip(self.nodes, self.values):
                w.writerow([repr(float(x)), repr(float(v))])


def _check(eps, n, length):
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if n < 8 or n % 2:
        raise ConfigurationError(f"profile resolution must be an even integer >= 8, got {n}")
    # a layer of width 2 sqrt(2) eps needs >= 3 cells; coarser grids pin the
    # layer and Newton finds a spurious lattice solution
    if length / n > 2 * np.sqrt(2) * eps / 3:
        raise ConfigurationError(
            f"n={n} does not resolve the transition layer at eps={eps}; "
            f"need n >= {int(np.ceil(3 * length / (2 * np.sqrt(2) * eps)))}")


def _newton_half(grid: RadialGrid, W: DoubleWell, eps: float, u0: np.ndarray,
                 max_iter: int = 100):
    """Damped Newton for ``eps^2 L u - W'(u) = 0`` on the lower half with odd ghost."""
    m = grid.n // 2
    lo, up = grid.couplings()
    lo, up = lo[:m].copy(), up[:m].copy()
    # the neighbour across the midpoint face holds -u_{m-1}
    diag_lap = -(lo + up)
    diag_lap[0] = -up[0]
    diag_lap[-1] = -lo[-1] - 2.0 * up[-1]

    def lap(u):
        out = diag_lap * u
        out[1:] += lo[1:] * u[:-1]
        out[:-1] += up[:-1] * u[1:]
        return out

    def F(u):
        return eps**2 * lap(u) - W.dW(u)

    u = u0.copy()
    r = F(u)
    res = float(np.max(np.abs(r)))
    for it in range(1, max_iter + 1):
        if res < NEWTON_TOL:
            return u, res, it - 1
        ab = np.zeros((3, m))
        ab[0, 1:] = eps**2 * up[:-1]
        ab[1] = eps**2 * diag_lap - W.ddW(u)
        ab[2, :-1] = eps**2 * lo[1:]
        du = solve_banded((1, 1), ab, -r)
        step = 1.0
        norm0 = float(np.linalg.norm(r))
        while step > 1e-6:
            trial = u + step * du
            rt = F(trial)
            if np.linalg.norm(rt) < (1 - 1e-4 * step) * norm0 or float(np.max(np.abs(rt))) < NEWTON_TOL:
                break
            step *= 0.5
        u, r = trial, rt
        res = float(np.max(np.abs(r)))
    if res < NEWTON_TOL:
        return u, res, max_iter
    raise ConvergenceError(
        f"Newton did not converge for eps={eps}, n={grid.n}: residual {res:.3e}", residual=res
    )


def _solve(coordinate, W, eps, n, max_iter):
    W = W or DoubleWell()
    g = RadialGrid(coordinate, n)
    _check(eps, n, g.length)
    m = n // 2
    mid = 0.5 * g.length
    seed = heteroclinic(W, eps, mid - g.nodes[:m])
    half, res, its = _newton_half(g, W, eps, seed, max_iter)
    if np.any(half <= 0):
        raise ConvergenceError(
            f"{coordinate} solution changes sign on the half interval (wrong branch); "
            f"eps={eps} may be too large", residual=res)
    # 1 - u can fall below the double-precision spacing at 1 (about 1e-19 for
    # the ground state at eps = 0.05); round-off excess is clipped
    if np.max(half) > 1 + 1e-12:
        raise ConvergenceError(f"{coordinate} solution leaves [-1, 1]", residual=res)
    half = np.minimum(half, 1.0)
    values = np.concatenate([half, -half[::-1]])
    return RadialProfile(coordinate, g, values, float(eps), W, res, its)


def solve_torus_symmetric(W: DoubleWell | None, eps: float, n: int = 512,
                          max_iter: int = 100) -> RadialProfile:
    """Positive solution on eta in (0, pi/4) vanishing at pi/4, reflected oddly.

    ``n`` counts cells on the whole interval (0, pi/2) and must be even, so
    the nodal surface eta = pi/4 is a cell face.
    """
    return _solve("eta", W, eps, n, max_iter)


def solve_ground_state(W: DoubleWell | None, eps: float, n: int = 512,
                       max_iter: int = 100) -> RadialProfile:
    """Radial solution positive for r < pi/2 and odd under r -> pi - r."""
    return _solve("geodesic", W, eps, n, max_iter)


def _interpolant(p: RadialProfile):
    # even extension: smooth functions on S^3 are even in the distance to the
    # focal sets eta = 0, pi/2 (resp. r = 0, pi)
    x = np.concatenate([-p.nodes[:2][::-1], p.nodes, 2 * p.grid.length - p.nodes[-2:][::-1]])
    v = np.concatenate([p.values[:2][::-1], p.values, p.values[-2:][::-1]])
    return PchipInterpolator(x, v, extrapolate=False)


def lift_profile(p: RadialProfile, grid: TorusGrid, pole=None) -> np.ndarray:
    """Evaluate a profile on the 3D grid.

    Eta profiles broadcast exactly when ``grid.n_eta == p.n``; otherwise both
    kinds use monotone cubic (PCHIP) interpolation, which cannot overshoot
    the data and so keeps |u| < 1.
    """
    if p.coordinate == "eta":
        if pole is not None:
            raise ConfigurationError("eta profiles do not take a pole")
        if grid.n_eta == p.n:
            col = p.values.copy()
        else:
            col = _interpolant(p)(grid.eta)
            if grid.n_eta % 2 == 0:
                h = grid.n_eta // 2
                col[h:] = -col[:h][::-1]
        return np.broadcast_to(col[:, None, None], grid.shape).copy()
    y = np.asarray(pole if pole is not None else [], dtype=float)
    if y.shape != (4,) or abs(np.linalg.norm(y) - 1.0) > 1e-12:
        raise ConfigurationError(f"geodesic lift needs a unit 4-vector pole, got {pole}")
    x = grid.embedding()
    c = np.tensordot(y, x, axes=1)
    r = np.arccos(np.clip(c, -1.0, 1.0))
    return _interpolant(p)(r)
