"""Second variation of the Allen-Cahn energy at symmetric critical points.

For an eta-only background u(eta) the operator ``-Lap + W''(u)/eps^2``
separates in Fourier modes ``cos/sin(k1 phi1) cos/sin(k2 phi2)``; each mode
leaves a symmetric Sturm-Liouville problem in eta, solved densely as a
tridiagonal eigenproblem.  Geodesic backgrounds separate in spherical
harmonics of degree l on the equatorial S^2.

Sign convention: reported eigenvalues ``mu`` belong to ``-Lap + W''/eps^2``,
so ``mu < 0`` marks an unstable direction and the Morse index counts them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, NumericalError, SpectrumCutoffError
from .geometry import Isometry, TorusGrid, _trig_tables, apply_isometry, integrate
from .stationary import RadialProfile

CONVENTION = "mu = eigenvalue of -Lap + W''(u)/eps^2; mu < 0 is unstable"


def _symbol(k: int, n_phi: int | None) -> float:
    if n_phi is None:
        return float(k * k)
    h = 2 * np.pi / n_phi
    return float((2.0 * np.sin(0.5 * k * h) / h) ** 2)


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """The 1D operator of one separated mode.

    For ``coordinate='eta'`` the mode is ``(k1, k2)``; for ``'geodesic'`` it is
    the harmonic degree ``(l, 0)``.  ``n_phi`` selects the finite-difference
    angular symbol of a 3D grid with that many angular nodes; ``None`` uses
    the exact symbol k^2.
    """

    k1: int
    k2: int
    background: RadialProfile
    n_phi: tuple | None = None

    @property
    def eps(self) -> float:
        return self.background.eps

    def tridiagonal(self):
        """Diagonal and off-diagonal of ``D^{1/2} (-A) D^{-1/2}``, D = cell volumes."""
        p = self.background
        g = p.grid
        lo, up = g.couplings()
        a1, a2 = g.angular_factors()
        if p.coordinate == "eta":
            n1, n2 = self.n_phi if self.n_phi is not None else (None, None)
            ang = _symbol(self.k1, n1) * a1 + _symbol(self.k2, n2) * a2
        else:
            ang = self.k1 * (self.k1 + 1) * a1
        d = lo + up + ang + p.W.ddW(p.values) / p.eps**2
        jf = g.face_metric[1:-1]
        v = g.cell_volume
        e = -jf / (g.h * np.sqrt(v[:-1] * v[1:]))
        return d, e

    def matrix(self) -> np.ndarray:
        """Dense -A in the unweighted basis (for symmetry checks)."""
        p = self.background
        lo, up = p.grid.couplings()
        d, _ = self.tridiagonal()
        n = d.size
        m = np.diag(d)
        m[np.arange(1, n), np.arange(n - 1)] = -lo[1:]
        m[np.arange(n - 1), np.arange(1, n)] = -up[:-1]
        return m

    @property
    def multiplicity(self) -> int:
        if self.background.coordinate == "geodesic":
            return 2 * self.k1 + 1
        return (2 if self.k1 else 1) * (2 if self.k2 else 1)


def mode_spectrum(op: ModeOperator, count: int):
    """Lowest ``count`` eigenpairs ``(mu, f)`` of ``-A``.

    Eigenfunctions are normalized by ``sum f^2 V = 1`` (V the 1D cell volumes,
    i.e. the weighted inner product) and signed positive at their largest
    entry.
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    d, e = op.tridiagonal()
    count = min(count, d.size)
    mu, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
    f = vec / np.sqrt(op.background.grid.cell_volume)[:, None]
    out = []
    for j in range(count):
        g = f[:, j]
        g = g / np.sqrt(np.dot(g * g, op.background.grid.cell_volume))
        if g[np.argmax(np.abs(g))] < 0:
            g = -g
        out.append((float(mu[j]), g))
    return out


@dataclass
class SpectrumEntry:
    mu: float
    mode: tuple
    function: np.ndarray = field(repr=False)
    multiplicity: int = 1


@dataclass
class SpectrumResult:
    """Negative spectrum (and a margin above it) of a critical point."""

    profile: RadialProfile = field(repr=False)
    entries: list
    morse_index: int
    k_max: int
    n_phi: tuple | None = None
    kernel_tol: float = 0.0
    convention: str = CONVENTION

    @property
    def unstable(self) -> list:
        return [e for e in self.entries if e.mu < -self.kernel_tol]

    def eigenvalues(self) -> np.ndarray:
        """Unstable eigenvalues repeated by multiplicity, ascending."""
        vals = [e.mu for e in self.unstable for _ in range(e.multiplicity)]
        return np.sort(np.array(vals))

    def entry(self, mode, index: int = 0) -> SpectrumEntry:
        hits = [e for e in self.entries if e.mode == tuple(mode)]
        return hits[index]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.convention}\n")
            w = csv.writer(fh)
            w.writerow(["k1", "k2", "lambda", "multiplicity"])
            for e in self.entries:
                w.writerow([e.mode[0], e.mode[1], repr(e.mu), e.multiplicity])


def morse_index(profile: RadialProfile, k_max: int = 4, per_mode: int = 3,
                n_phi: tuple | None = None, kernel_tol: float = 0.0) -> SpectrumResult:
    """Count unstable directions of the critical point ``profile``.

    Scans all modes with ``0 <= k1, k2 <= k_max`` (eta) or ``l <= k_max``
    (geodesic), keeping ``per_mode`` eigenvalues of each.  Eigenvalues below
    ``-kernel_tol`` count as unstable.  Raises if the cutoff shell still has
    an unstable mode; eigenvalues increase with k^2, so a clean shell proves
    the scan is complete.
    """
    if k_max < 3:
        raise ConfigurationError(f"k_max must be >= 3, got {k_max}")
    if profile.coordinate == "eta":
        modes = [(k1, k2) for k1 in range(k_max + 1) for k2 in range(k_max + 1)]
    else:
        modes = [(l, 0) for l in range(k_max + 1)]
    entries = []
    for mode in modes:
        op = ModeOperator(mode[0], mode[1], profile, n_phi)
        for mu, f in mode_spectrum(op, per_mode):
            entries.append(SpectrumEntry(mu, mode, f, op.multiplicity))
    shell = [e for e in entries if max(e.mode) == k_max and e.mu < -kernel_tol]
    if shell:
        raise SpectrumCutoffError(
            f"unstable eigenvalue {shell[0].mu:.4g} at mode {shell[0].mode} on the "
            f"cutoff shell k_max={k_max}; increase k_max"
        )
    entries.sort(key=lambda e: (e.mu, e.mode))
    index = sum(e.multiplicity for e in entries if e.mu < -kernel_tol)
    return SpectrumResult(profile, entries, index, k_max, n_phi, kernel_tol)


# -- 3D basis -----------------------------------------------------------------


def _column(p: RadialProfile, f: np.ndarray, grid: TorusGrid, parity: tuple) -> np.ndarray:
    """Evaluate a 1D eigenfunction on ``grid.eta``; exact when the grids match."""
    if grid.n_eta == p.n:
        return f.copy()
    x = p.nodes
    lo_s, hi_s = parity
    xe = np.concatenate([-x[:2][::-1], x, 2 * p.grid.length - x[-2:][::-1]])
    fe = np.concatenate([lo_s * f[:2][::-1], f, hi_s * f[-2:][::-1]])
    return PchipInterpolator(xe, fe)(grid.eta)


def _normalized(grid, f):
    return f / np.sqrt(integrate(grid, f * f))


def unstable_basis(spec: SpectrumResult, grid: TorusGrid) -> list:
    """Oriented L^2-orthonormal basis phi_1..phi_5 of the unstable space.

    * phi_1 > 0 is the principal eigenfunction (mode (0, 0));
    * phi_2 = g(eta) cos(phi1), phi_3 = g(eta) sin(phi1) with g > 0 near the
      torus, so phi_2 is even under x2 -> -x2 and rotations act on
      (phi_2, phi_3) by the standard rotation matrix;
    * phi_4, phi_5 are phi_2, phi_3 composed with the swap s, taken as exact
      grid permutations.
    """
    p = spec.profile
    if p.coordinate != "eta" or spec.morse_index != 5:
        raise NumericalError(
            f"an oriented basis needs an eta background of index 5 (got index {spec.morse_index})")
    e0 = spec.entry((0, 0))
    e1 = spec.entry((1, 0))
    if not (e0.mu < -spec.kernel_tol and e1.mu < -spec.kernel_tol):
        raise NumericalError("unexpected unstable modes; cannot orient the basis")
    g0 = _column(p, e0.function, grid, (1, 1))
    g1 = _column(p, e1.function, grid, (1, -1))
    if np.any(e0.function <= 0):
        raise NumericalError("principal eigenfunction is not positive")
    # fix the sign of the (1, 0) factor by its value next to the torus
    if g1[np.searchsorted(grid.eta, np.pi / 4) - 1] < 0:
        g1 = -g1
    c1, s1 = _trig_tables(grid.n_phi1)
    c1, s1 = c1[None, :, None], s1[None, :, None]
    phi1 = _normalized(grid, np.broadcast_to(g0[:, None, None], grid.shape).copy())
    phi2 = _normalized(grid, g1[:, None, None] * c1 * np.ones(grid.n_phi2))
    phi3 = _normalized(grid, g1[:, None, None] * s1 * np.ones(grid.n_phi2))
    s = Isometry.swap_s()
    phi4 = apply_isometry(grid, s, phi2)
    phi5 = apply_isometry(grid, s, phi3)
    return [phi1, phi2, phi3, phi4, phi5]
