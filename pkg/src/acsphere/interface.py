"""Diagnostics of the diffuse interface carried by a field.

The energy density ``e = eps |grad u|^2 / 2 + W(u) / eps`` defines a measure
whose mass divided by ``2 sigma`` approximates the area of the interface.
From a field slice we extract that mass, the discrepancy, the nodal set, a
best-fit equator, and a statistic separating the Clifford torus
``T_c = {x1^2 + x2^2 = 1/2}`` from its rotated copies
``T_+- = {x1 x2 = +- x3 x4}``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import TorusGrid, gradient_squared, integrate
from .potential import DoubleWell, heteroclinic

KINDS = ("constant_plus", "constant_minus", "sphere", "torus", "unresolved")
TORUS_AREA = 2 * np.pi**2
SPHERE_AREA = 4 * np.pi


def energy_density(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
                   angular: str = "fd") -> np.ndarray:
    W = W or DoubleWell()
    u = grid.check_field(u)
    return 0.5 * eps * gradient_squared(grid, u, angular) + W.W(u) / eps


def discrepancy(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
                angular: str = "fd") -> float:
    """``int |eps |grad u|^2 / 2 - W(u) / eps|``."""
    W = W or DoubleWell()
    u = grid.check_field(u)
    d = 0.5 * eps * gradient_squared(grid, u, angular) - W.W(u) / eps
    return integrate(grid, np.abs(d))


def _embed(eta, p1, p2) -> np.ndarray:
    ce, se = np.cos(eta), np.sin(eta)
    return np.stack([ce * np.cos(p1), ce * np.sin(p1), se * np.cos(p2), se * np.sin(p2)], axis=-1)


def extract_nodal(grid: TorusGrid, u) -> np.ndarray:
    """Zero crossings of ``u`` along grid lines, as points of S^3, shape (N, 4).

    Every pair of neighbouring nodes (in eta, and periodically in phi1, phi2)
    whose values change sign contributes the linearly interpolated zero.
    """
    u = grid.check_field(u)
    eta, p1, p2 = grid.eta, grid.phi1, grid.phi2
    pts = []
    for axis, coord, h, periodic in ((0, eta, grid.h_eta, False),
                                     (1, p1, grid.h_phi1, True),
                                     (2, p2, grid.h_phi2, True)):
        if periodic:
            a, b = u, np.roll(u, -1, axis=axis)
        else:
            a, b = u[:-1], u[1:]
        mask = (a < 0) != (b < 0)
        idx = np.nonzero(mask)
        if idx[0].size == 0:
            continue
        ua, ub = a[idx], b[idx]
        t = ua / (ua - ub)
        c = [eta[idx[0]], p1[idx[1]], p2[idx[2]]]
        c[axis] = coord[idx[axis]] + t * h
        pts.append(_embed(*c))
    if not pts:
        return np.zeros((0, 4))
    return np.concatenate(pts)


class EquatorFit(NamedTuple):
    y: np.ndarray
    residual: float
    resolved: bool


def fit_equator(points, grid: TorusGrid | None = None, u=None,
                min_gap: float = 1e-3) -> EquatorFit:
    """Unit normal of the hyperplane through 0 closest to ``points``.

    ``y`` is the eigenvector of the smallest eigenvalue of ``sum x x^T``;
    ``residual`` is that eigenvalue divided by the number of points.  Given a
    field, ``y`` is oriented so that ``u > 0`` on ``<x, y> > 0``.
    ``resolved`` is false when the two smallest eigenvalues are closer than
    ``min_gap`` (per point), since then ``y`` is not determined.
    """
    x = np.asarray(points, dtype=float).reshape(-1, 4)
    n = x.shape[0]
    if n < 10:
        return EquatorFit(np.full(4, np.nan), np.nan, False)
    lam, vec = np.linalg.eigh(x.T @ x)
    y = vec[:, 0]
    # deterministic sign before the field-based orientation
    k = int(np.argmax(np.abs(y)))
    if y[k] < 0:
        y = -y
    if u is not None and grid is not None:
        xs = grid.embedding()
        proj = np.tensordot(y, xs, axes=1)
        if integrate(grid, grid.check_field(u) * proj) < 0:
            y = -y
    resolved = (lam[1] - lam[0]) / n >= min_gap
    return EquatorFit(y, float(lam[0] / n), bool(resolved))


# -- torus discrimination ------------------------------------------------------

# orthogonal map taking T_c onto T_+ (x1 x2 = x3 x4)
_R_PLUS = np.array([[1, 0, 1, 0],
                    [1, 0, -1, 0],
                    [0, 1, 0, 1],
                    [0, -1, 0, 1]], dtype=float) / np.sqrt(2.0)
_R_MINUS = np.diag([1.0, 1.0, 1.0, -1.0]) @ _R_PLUS


def synthetic_layer(grid: TorusGrid, eps: float, which: str = "c",
                    W: DoubleWell | None = None) -> np.ndarray:
    """Heteroclinic profile of the signed distance to T_c, T_+ or T_-."""
    W = W or DoubleWell()
    x = grid.embedding().reshape(4, -1)
    if which == "+":
        x = _R_PLUS.T @ x
    elif which == "-":
        x = _R_MINUS.T @ x
    elif which != "c":
        raise ValueError(f"unknown torus {which!r}")
    eta = np.arctan2(np.hypot(x[2], x[3]), np.hypot(x[0], x[1]))
    return heteroclinic(W, eps, np.pi / 4 - eta).reshape(grid.shape)


def _raw_statistic(grid, dens):
    x = grid.embedding()
    fc = x[0] ** 2 + x[1] ** 2 - 0.5
    fp = x[0] * x[1] - x[2] * x[3]
    fm = x[0] * x[1] + x[2] * x[3]
    mass = integrate(grid, dens)
    m = [integrate(grid, dens * f * f) / mass for f in (fc, fp, fm)]
    return 0.5 * (m[1] + m[2]) - m[0]


_CALIBRATION: dict = {}


def _calibration(grid, eps, W, angular):
    key = (grid.shape, float(eps), W, angular)
    hit = _CALIBRATION.get(key)
    if hit is None:
        vals = [_raw_statistic(grid, energy_density(grid, synthetic_layer(grid, eps, w, W),
                                                    eps, W, angular))
                for w in ("c", "+")]
        hit = (vals[0], vals[1])
        if len(_CALIBRATION) > 32:
            _CALIBRATION.clear()
        _CALIBRATION[key] = hit
    return hit


class TorusStatistic(NamedTuple):
    value: float
    confident: bool


def torus_statistic(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
                    angular: str = "fd", min_contrast: float = 1.0) -> TorusStatistic:
    """Signed statistic, about +1 for a layer on T_c and -1 on T_+ or T_-.

    Pairs the energy measure with the squares of the defining quadratics of
    the three tori and rescales using synthetic layers at T_c and T_+ on the
    same grid.  ``confident`` is false when the energy measure is close to
    uniform (coefficient of variation below ``min_contrast``), i.e. there is
    no layer to speak of.
    """
    W = W or DoubleWell()
    dens = energy_density(grid, u, eps, W, angular)
    mass = integrate(grid, dens)
    if not mass > 0:
        return TorusStatistic(0.0, False)
    mean = mass / (2 * np.pi**2)
    cv = np.sqrt(integrate(grid, (dens - mean) ** 2) / (2 * np.pi**2)) / mean
    a, b = _calibration(grid, eps, W, angular)
    s = -1.0 + 2.0 * (_raw_statistic(grid, dens) - b) / (a - b)
    return TorusStatistic(float(np.clip(s, -1.0, 1.0)), bool(cv >= min_contrast))


# -- classification ------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    constant_band: float = 0.05
    area_band: float = 0.10
    fit_residual: float = 0.01
    torus_decisive: float = 0.5


@dataclass
class InterfaceReport:
    area_proxy: float
    discrepancy: float
    nodal_points: np.ndarray = field(repr=False)
    kind: str
    equator_normal: np.ndarray | None
    fit_residual: float
    eta_histogram: np.ndarray = field(repr=False)
    torus_statistic: float
    statistic_confident: bool = True
    multiplicity: float = np.nan
    time: float = np.nan
    thresholds: Thresholds = field(default_factory=Thresholds)
    shifted_time: float = np.nan

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
            elif isinstance(v, (np.floating, np.bool_)):
                d[k] = v.item()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=True)


def eta_histogram(grid: TorusGrid, dens, bins: int = 16) -> np.ndarray:
    """Energy-measure density per unit eta on ``bins`` equal eta intervals."""
    per_layer = grid.check_field(dens).sum(axis=(1, 2)) * grid.eta_weights
    edges = np.linspace(0.0, 0.5 * np.pi, bins + 1)
    h, _ = np.histogram(grid.eta, bins=edges, weights=per_layer)
    return h / np.diff(edges)


def classify(grid: TorusGrid, u, eps: float, W: DoubleWell | None = None,
             thresholds: Thresholds | None = None, angular: str = "fd",
             time: float = np.nan) -> InterfaceReport:
    """Label a field slice as a constant, a sphere, a torus, or unresolved."""
    W = W or DoubleWell()
    th = thresholds or Thresholds()
    u = grid.check_field(u)
    dens = energy_density(grid, u, eps, W, angular)
    # the energy (not the density quadrature) defines the area proxy
    from .flow import energy

    area = energy(grid, u, eps, W, angular) / (2 * W.sigma)
    disc = discrepancy(grid, u, eps, W, angular)
    pts = extract_nodal(grid, u)
    fit = fit_equator(pts, grid, u)
    stat = torus_statistic(grid, u, eps, W, angular)
    hist = eta_histogram(grid, dens)

    def near(target):
        return abs(area / target - 1.0) <= th.area_band

    if np.max(np.abs(u - 1.0)) < th.constant_band:
        kind, mult = "constant_plus", np.nan
    elif np.max(np.abs(u + 1.0)) < th.constant_band:
        kind, mult = "constant_minus", np.nan
    elif fit.resolved and fit.residual < th.fit_residual and near(SPHERE_AREA):
        kind, mult = "sphere", area / SPHERE_AREA
    elif stat.confident and abs(stat.value) >= th.torus_decisive and near(TORUS_AREA):
        kind, mult = "torus", area / TORUS_AREA
    else:
        kind, mult = "unresolved", np.nan
    y = fit.y if kind == "sphere" else None
    return InterfaceReport(area, disc, pts, kind, y, fit.residual, hist, stat.value,
                           stat.confident, mult, time, th)


def write_reports(path, reports) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
