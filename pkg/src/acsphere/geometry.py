"""Toroidal discretization of the round 3-sphere.

Points of S^3 are written as

    x(eta, phi1, phi2) = (cos eta cos phi1, cos eta sin phi1,
                          sin eta cos phi2, sin eta sin phi2)

with eta in (0, pi/2) and periodic phi1, phi2.  The metric is
``d eta^2 + cos^2 eta d phi1^2 + sin^2 eta d phi2^2`` and the volume
density is ``J(eta) = cos eta sin eta``.

Fields are plain ``numpy`` arrays of shape ``(n_eta, n_phi1, n_phi2)``;
flattening in C order gives the index ``(i_eta * n_phi1 + i_phi1) * n_phi2 + i_phi2``.

The eta direction is a cell-centred finite-volume discretization.  Face
metric factors vanish at eta = 0 and eta = pi/2, so the polar ghost values
never enter the stencil; the resulting operator is symmetric with respect to
the quadrature weights.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import GridError, IsometryError

FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global FFT_WORKERS
    FFT_WORKERS = max(1, int(n))


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Cell-centred grid on S^3 in toroidal (Hopf) coordinates.

    Use :func:`build_grid` to construct; it validates the dimensions.
    """

    n_eta: int
    n_phi1: int
    n_phi2: int
    h_eta: float = field(init=False)
    h_phi1: float = field(init=False)
    h_phi2: float = field(init=False)
    eta: np.ndarray = field(init=False, repr=False)
    eta_faces: np.ndarray = field(init=False, repr=False)
    phi1: np.ndarray = field(init=False, repr=False)
    phi2: np.ndarray = field(init=False, repr=False)
    face_metric: np.ndarray = field(init=False, repr=False)
    cell_volume: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = 0.5 * np.pi / self.n_eta
        faces = np.arange(self.n_eta + 1) * h
        faces[-1] = 0.5 * np.pi
        eta = (np.arange(self.n_eta) + 0.5) * h
        jf = np.cos(faces) * np.sin(faces)
        jf[0] = jf[-1] = 0.0
        # exact integral of cos*sin over each cell: the weights sum to 1/2
        vol = 0.5 * (np.sin(faces[1:]) ** 2 - np.sin(faces[:-1]) ** 2)
        set_ = object.__setattr__
        set_(self, "h_eta", h)
        set_(self, "h_phi1", 2 * np.pi / self.n_phi1)
        set_(self, "h_phi2", 2 * np.pi / self.n_phi2)
        set_(self, "eta", eta)
        set_(self, "eta_faces", faces)
        set_(self, "phi1", np.arange(self.n_phi1) * (2 * np.pi / self.n_phi1))
        set_(self, "phi2", np.arange(self.n_phi2) * (2 * np.pi / self.n_phi2))
        set_(self, "face_metric", jf)
        set_(self, "cell_volume", vol)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_eta, self.n_phi1, self.n_phi2)

    @property
    def size(self) -> int:
        return self.n_eta * self.n_phi1 * self.n_phi2

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.shape

    @property
    def eta_weights(self) -> np.ndarray:
        """Quadrature weight of one node in each eta layer."""
        return self.cell_volume * self.h_phi1 * self.h_phi2

    @property
    def weights(self) -> np.ndarray:
        return np.broadcast_to(self.eta_weights[:, None, None], self.shape)

    def mesh(self):
        return np.meshgrid(self.eta, self.phi1, self.phi2, indexing="ij")

    def embedding(self) -> np.ndarray:
        """Node positions in R^4, shape ``(4, n_eta, n_phi1, n_phi2)``.

        Built from trig tables that are exactly symmetric, so grid isometries
        map coordinate functions to (signed) coordinate functions bit for bit.
        """
        ce = np.cos(self.eta)
        if self.n_eta % 2 == 0:
            ce[self.n_eta // 2:] = np.sin(self.eta[: self.n_eta // 2])[::-1]
        se = ce[::-1]
        c1, s1 = _trig_tables(self.n_phi1)
        c2, s2 = _trig_tables(self.n_phi2)
        return np.stack(
            [ce[:, None, None] * c1[None, :, None] * np.ones(self.n_phi2),
             ce[:, None, None] * s1[None, :, None] * np.ones(self.n_phi2),
             se[:, None, None] * c2[None, None, :] * np.ones((self.n_phi1, 1)),
             se[:, None, None] * s2[None, None, :] * np.ones((self.n_phi1, 1))]
        )

    def coordinate(self, k: int) -> np.ndarray:
        """The ambient coordinate function x_{k+1} restricted to the grid."""
        return self.embedding()[k]

    def constant(self, c: float) -> np.ndarray:
        return np.full(self.shape, float(c))

    def check_field(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.size != self.size:
            raise GridError(f"field has {f.size} values, grid has {self.size}")
        return f.reshape(self.shape)


def _trig_tables(n: int):
    """cos/sin of 2 pi j / n with the reflection symmetries of the circle exact.

    Each orbit {j, -j, n/2 - j, n/2 + j} takes its value from one
    representative, so phi -> -phi and phi -> pi - phi act by exact sign flips.
    """
    t = 2 * np.pi * np.arange(n) / n
    c, s = np.cos(t), np.sin(t)
    h = n // 2
    j = np.arange(n)
    orbit = np.stack([j, (-j) % n, (h - j) % n, (h + j) % n])
    csign = np.array([1, 1, -1, -1])[:, None]
    ssign = np.array([1, -1, 1, -1])[:, None]
    pick = np.argmin(orbit, axis=0)
    rep = orbit[pick, j]
    cs = csign[pick, 0] * c[rep]
    ss = ssign[pick, 0] * s[rep]
    # orbit members that coincide with conflicting signs are exact zeros
    for k in range(4):
        same = orbit[k] == rep
        cs[same & (csign[k, 0] != csign[pick, 0])] = 0.0
        ss[same & (ssign[k, 0] != ssign[pick, 0])] = 0.0
    return cs, ss


def build_grid(n_eta: int, n_phi1: int, n_phi2: int) -> TorusGrid:
    dims = (n_eta, n_phi1, n_phi2)
    if any(int(d) != d for d in dims):
        raise GridError(f"grid dimensions must be integers, got {dims}")
    if min(dims) < 4:
        raise GridError(f"every grid dimension must be >= 4, got {dims}")
    if n_phi1 % 2 or n_phi2 % 2:
        raise GridError(
            f"angular dimensions must be even so that phi -> pi - phi is a "
            f"node permutation, got n_phi1={n_phi1}, n_phi2={n_phi2}"
        )
    return TorusGrid(int(n_eta), int(n_phi1), int(n_phi2))


def integrate(grid: TorusGrid, f) -> float:
    """Quadrature of ``f`` against the volume measure of S^3.

    Summation order is fixed (angular sums first, then eta), so the result is
    reproducible run to run.
    """
    f = grid.check_field(f)
    if not np.all(np.isfinite(f)):
        raise ValueError("cannot integrate a field with non-finite values")
    return float(np.dot(f.sum(axis=(1, 2)), grid.eta_weights))


def inner(grid: TorusGrid, f, g) -> float:
    return integrate(grid, np.asarray(f) * np.asarray(g))


# -- Laplace-Beltrami ----------------------------------------------------------


def _eta_coefficients(grid: TorusGrid):
    """Lower/upper finite-volume coupling in eta: (L f)_i = lo_i (f_{i-1}-f_i) + up_i (f_{i+1}-f_i)."""
    jf = grid.face_metric
    v = grid.cell_volume
    lo = jf[:-1] / (grid.h_eta * v)
    up = jf[1:] / (grid.h_eta * v)
    return lo, up


def _angular_factors(grid: TorusGrid):
    return 1.0 / np.cos(grid.eta) ** 2, 1.0 / np.sin(grid.eta) ** 2


def angular_symbol(n: int, h: float, angular: str) -> np.ndarray:
    """Eigenvalues of -d^2/dphi^2 on the full FFT frequency set ``fftfreq(n)*n``."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    if angular == "fd":
        return (2.0 * np.sin(0.5 * k * h) / h) ** 2
    if angular == "spectral":
        return k.astype(float) ** 2
    raise ValueError(f"angular must be 'fd' or 'spectral', got {angular!r}")


def _eta_laplacian(grid: TorusGrid, f: np.ndarray) -> np.ndarray:
    lo, up = _eta_coefficients(grid)
    out = np.zeros_like(f)
    d = np.diff(f, axis=0)  # f_{i+1} - f_i on interior faces
    out[:-1] += up[:-1, None, None] * d
    out[1:] -= lo[1:, None, None] * d
    return out


def laplace_beltrami(grid: TorusGrid, f, angular: str = "fd") -> np.ndarray:
    """Discrete Laplace-Beltrami operator.

    ``angular='fd'`` uses centred second differences in phi1, phi2;
    ``angular='spectral'`` differentiates exactly in Fourier space.
    """
    f = grid.check_field(f)
    a1, a2 = _angular_factors(grid)
    out = _eta_laplacian(grid, f)
    if angular == "fd":
        d1 = (np.roll(f, -1, axis=1) - 2 * f + np.roll(f, 1, axis=1)) / grid.h_phi1**2
        d2 = (np.roll(f, -1, axis=2) - 2 * f + np.roll(f, 1, axis=2)) / grid.h_phi2**2
    elif angular == "spectral":
        k1 = angular_symbol(grid.n_phi1, grid.h_phi1, "spectral")
        k2 = angular_symbol(grid.n_phi2, grid.h_phi2, "spectral")[: grid.n_phi2 // 2 + 1]
        fh = scipy.fft.rfftn(f, axes=(1, 2), workers=FFT_WORKERS)
        d1 = scipy.fft.irfftn(-k1[None, :, None] * fh, s=grid.shape[1:], axes=(1, 2),
                              workers=FFT_WORKERS)
        d2 = scipy.fft.irfftn(-k2[None, None, :] * fh, s=grid.shape[1:], axes=(1, 2),
                              workers=FFT_WORKERS)
    else:
        raise ValueError(f"angular must be 'fd' or 'spectral', got {angular!r}")
    return out + a1[:, None, None] * d1 + a2[:, None, None] * d2


def dirichlet_form(grid: TorusGrid, f, angular: str = "fd") -> float:
    """``-<f, Laplacian f>``, i.e. the discrete integral of |grad f|^2.

    Assembled as a sum of nonnegative squares so it stays accurate near
    constants.
    """
    f = grid.check_field(f)
    a1, a2 = _angular_factors(grid)
    dphi = grid.h_phi1 * grid.h_phi2
    jf = grid.face_metric[1:-1]
    de = np.diff(f, axis=0)
    total = np.dot((de * de).sum(axis=(1, 2)), jf) / grid.h_eta
    v = grid.cell_volume
    if angular == "fd":
        d1 = np.roll(f, -1, axis=1) - f
        d2 = np.roll(f, -1, axis=2) - f
        total += np.dot((d1 * d1).sum(axis=(1, 2)), v * a1) / grid.h_phi1**2
        total += np.dot((d2 * d2).sum(axis=(1, 2)), v * a2) / grid.h_phi2**2
    else:
        fh = scipy.fft.fftn(f, axes=(1, 2), workers=FFT_WORKERS)
        p = (np.abs(fh) ** 2) / (grid.n_phi1 * grid.n_phi2)
        k1 = angular_symbol(grid.n_phi1, grid.h_phi1, angular)
        k2 = angular_symbol(grid.n_phi2, grid.h_phi2, angular)
        total += np.dot((p * k1[None, :, None]).sum(axis=(1, 2)), v * a1)
        total += np.dot((p * k2[None, None, :]).sum(axis=(1, 2)), v * a2)
    return float(total * dphi)


def dirichlet_pairing(grid: TorusGrid, f, g, angular: str = "fd") -> float:
    """The bilinear form ``int grad f . grad g`` of :func:`dirichlet_form`."""
    f, g = grid.check_field(f), grid.check_field(g)
    a1, a2 = _angular_factors(grid)
    dphi = grid.h_phi1 * grid.h_phi2
    jf = grid.face_metric[1:-1]
    total = np.dot((np.diff(f, axis=0) * np.diff(g, axis=0)).sum(axis=(1, 2)), jf) / grid.h_eta
    v = grid.cell_volume
    if angular == "fd":
        for axis, a, h in ((1, a1, grid.h_phi1), (2, a2, grid.h_phi2)):
            df = np.roll(f, -1, axis=axis) - f
            dg = np.roll(g, -1, axis=axis) - g
            total += np.dot((df * dg).sum(axis=(1, 2)), v * a) / h**2
    else:
        fh = scipy.fft.fftn(f, axes=(1, 2), workers=FFT_WORKERS)
        gh = scipy.fft.fftn(g, axes=(1, 2), workers=FFT_WORKERS)
        p = (fh.conj() * gh).real / (grid.n_phi1 * grid.n_phi2)
        k1 = angular_symbol(grid.n_phi1, grid.h_phi1, angular)
        k2 = angular_symbol(grid.n_phi2, grid.h_phi2, angular)
        total += np.dot((p * k1[None, :, None]).sum(axis=(1, 2)), v * a1)
        total += np.dot((p * k2[None, None, :]).sum(axis=(1, 2)), v * a2)
    return float(total * dphi)


def gradient_squared(grid: TorusGrid, f, angular: str = "fd") -> np.ndarray:
    """Nodal |grad f|^2 whose quadrature reproduces :func:`dirichlet_form` (fd)."""
    f = grid.check_field(f)
    a1, a2 = _angular_factors(grid)
    jf = grid.face_metric
    v = grid.cell_volume
    de2 = np.diff(f, axis=0) ** 2 / grid.h_eta
    g = np.zeros_like(f)
    g[:-1] += 0.5 * (jf[1:-1] / v[:-1])[:, None, None] * de2
    g[1:] += 0.5 * (jf[1:-1] / v[1:])[:, None, None] * de2
    if angular == "fd":
        d1 = (np.roll(f, -1, axis=1) - f) ** 2
        d2 = (np.roll(f, -1, axis=2) - f) ** 2
        g += a1[:, None, None] * 0.5 * (d1 + np.roll(d1, 1, axis=1)) / grid.h_phi1**2
        g += a2[:, None, None] * 0.5 * (d2 + np.roll(d2, 1, axis=2)) / grid.h_phi2**2
    else:
        fh = scipy.fft.fftn(f, axes=(1, 2), workers=FFT_WORKERS)
        k1 = np.fft.fftfreq(grid.n_phi1, d=1.0 / grid.n_phi1)
        k2 = np.fft.fftfreq(grid.n_phi2, d=1.0 / grid.n_phi2)
        g1 = scipy.fft.ifftn(1j * k1[None, :, None] * fh, axes=(1, 2), workers=FFT_WORKERS).real
        g2 = scipy.fft.ifftn(1j * k2[None, None, :] * fh, axes=(1, 2), workers=FFT_WORKERS).real
        g += a1[:, None, None] * g1**2 + a2[:, None, None] * g2**2
    return g


class HelmholtzSolver:
    """Solves ``(Id - c * Laplacian) f = b`` exactly for the discrete operator.

    The operator is diagonalized by FFT in (phi1, phi2); every Fourier mode
    leaves a tridiagonal system in eta, solved by a batched Thomas sweep.
    Factorizations are cached per ``c``.
    """

    def __init__(self, grid: TorusGrid, angular: str = "fd"):
        self.grid = grid
        self.angular = angular
        n2r = grid.n_phi2 // 2 + 1
        self._k1 = angular_symbol(grid.n_phi1, grid.h_phi1, angular)
        self._k2 = angular_symbol(grid.n_phi2, grid.h_phi2, angular)[:n2r]
        self._cache: dict[tuple[float, float], tuple] = {}

    def _factor(self, c: float, shift: float):
        key = (float(c), float(shift))
        if key in self._cache:
            return self._cache[key]
        grid = self.grid
        lo, up = _eta_coefficients(grid)
        a1, a2 = _angular_factors(grid)
        diag = (1.0 + shift + c * (lo + up))[:, None, None] + c * (
            a1[:, None, None] * self._k1[None, :, None] + a2[:, None, None] * self._k2[None, None, :]
        )
        sub = -c * lo
        sup = -c * up
        n = grid.n_eta
        cp = np.empty_like(diag)
        inv = np.empty_like(diag)
        inv[0] = 1.0 / diag[0]
        cp[0] = sup[0] * inv[0]
        for i in range(1, n):
            den = diag[i] - sub[i] * cp[i - 1]
            if np.any(den <= 0):
                raise AssertionError("Helmholtz system lost diagonal dominance")
            inv[i] = 1.0 / den
            cp[i] = sup[i] * inv[i]
        fac = (sub, cp, inv)
        if len(self._cache) > 8:
            self._cache.clear()
        self._cache[key] = fac
        return fac

    def solve(self, b, c: float, shift: float = 0.0) -> np.ndarray:
        """Return f with ``(1 + shift) f - c * Lap f = b``."""
        if not c > 0:
            raise ValueError(f"Helmholtz coefficient must be positive, got {c}")
        grid = self.grid
        b = grid.check_field(b)
        sub, cp, inv = self._factor(c, shift)
        d = scipy.fft.rfftn(b, axes=(1, 2), workers=FFT_WORKERS)
        n = grid.n_eta
        d[0] *= inv[0]
        for i in range(1, n):
            d[i] -= sub[i] * d[i - 1]
            d[i] *= inv[i]
        for i in range(n - 2, -1, -1):
            d[i] -= cp[i] * d[i + 1]
        return scipy.fft.irfftn(d, s=grid.shape[1:], axes=(1, 2), workers=FFT_WORKERS)

    def apply(self, f, c: float, shift: float = 0.0) -> np.ndarray:
        """The forward operator ``(1 + shift) f - c * Lap f`` (same angular choice)."""
        return (1.0 + shift) * self.grid.check_field(f) - c * laplace_beltrami(
            self.grid, f, angular=self.angular
        )


def helmholtz_solve(grid: TorusGrid, b, c: float, angular: str = "spectral") -> np.ndarray:
    return HelmholtzSolver(grid, angular).solve(b, c)


# -- isometries ----------------------------------------------------------------


def _rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class Isometry:
    """An isometry of S^3 (an orthogonal 4x4 matrix) acting on fields.

    ``apply_isometry(P, f)`` returns ``sign * f o P^{-1}``.  ``sign = -1``
    encodes the combined action ``f -> -f o s`` used for odd symmetries.
    """

    matrix: np.ndarray
    label: str = ""
    sign: int = 1

    @classmethod
    def identity(cls):
        return cls(np.eye(4), "id")

    @classmethod
    def rho(cls, theta: float):
        m = np.eye(4)
        m[:2, :2] = _rot(theta)
        return cls(m, f"rho({theta:.6g})")

    @classmethod
    def tau(cls, theta: float):
        m = np.eye(4)
        m[2:, 2:] = _rot(theta)
        return cls(m, f"tau({theta:.6g})")

    @classmethod
    def swap_s(cls):
        m = np.zeros((4, 4))
        m[0, 2] = m[1, 3] = m[2, 0] = m[3, 1] = 1.0
        return cls(m, "s")

    @classmethod
    def reflect(cls, v):
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if v.shape != (4,) or not np.isclose(nv, 1.0, atol=1e-12):
            raise IsometryError(f"reflection vector must be a unit 4-vector, got {v}")
        v = v / nv
        return cls(np.eye(4) - 2.0 * np.outer(v, v), f"r({np.round(v, 6).tolist()})")

    def negated(self):
        return Isometry(self.matrix, f"-{self.label}", -self.sign)

    def inverse(self):
        return Isometry(self.matrix.T.copy(), f"{self.label}^-1", self.sign)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        """Composition: ``(P @ Q)`` acts as P after Q."""
        return Isometry(self.matrix @ other.matrix, f"{self.label}*{other.label}",
                        self.sign * other.sign)

    def key(self):
        return (tuple(np.round(self.matrix, 9).ravel().tolist()), self.sign)

    def act_on_point(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix.T

    def act_on_direction(self, a) -> np.ndarray:
        """Action on unstable-manifold coordinates ``a = (a1, ..., a5)``.

        ``(a2, a3, a4, a5)`` transform like ``(x1, x2, x3, x4)``; ``a1`` is
        fixed; the overall ``sign`` multiplies everything.
        """
        a = np.asarray(a, dtype=float)
        out = np.empty(5)
        out[0] = a[0]
        out[1:] = self.matrix @ a[1:]
        return self.sign * out


_PERM_CACHE: dict = {}


def isometry_permutation(grid: TorusGrid, P: Isometry) -> np.ndarray:
    """Flat source indices ``src`` with ``apply(P, f).ravel() == sign * f.ravel()[src]``."""
    key = (grid.shape, P.key()[0])
    hit = _PERM_CACHE.get(key)
    if hit is not None:
        return hit
    x = grid.embedding().reshape(4, -1)
    y = P.matrix.T @ x  # P^{-1} x
    r12 = np.hypot(y[0], y[1])
    r34 = np.hypot(y[2], y[3])
    eta = np.arctan2(r34, r12)
    p1 = np.mod(np.arctan2(y[1], y[0]), 2 * np.pi)
    p2 = np.mod(np.arctan2(y[3], y[2]), 2 * np.pi)
    fi = eta / grid.h_eta - 0.5
    fj = p1 / grid.h_phi1
    fk = p2 / grid.h_phi2
    i, j, k = np.rint(fi), np.rint(fj), np.rint(fk)
    bad = max(np.max(np.abs(fi - i)), _circ_err(fj, j, grid.n_phi1), _circ_err(fk, k, grid.n_phi2))
    if bad > 1e-6 or np.min(i) < 0 or np.max(i) >= grid.n_eta:
        raise IsometryError(
            f"isometry {P.label} is not commensurate with grid {grid.shape} "
            f"(max index offset {bad:.3g})"
        )
    src = ((i.astype(np.int64) * grid.n_phi1 + np.mod(j, grid.n_phi1).astype(np.int64))
           * grid.n_phi2 + np.mod(k, grid.n_phi2).astype(np.int64))
    if len(np.unique(src)) != src.size:
        raise IsometryError(f"isometry {P.label} does not permute grid nodes")
    if len(_PERM_CACHE) > 256:
        _PERM_CACHE.clear()
    _PERM_CACHE[key] = src
    return src


def _circ_err(f, r, n):
    d = np.abs(f - r)
    return float(np.max(np.minimum(d, np.abs(d - n))))


def apply_isometry(grid: TorusGrid, P: Isometry, f) -> np.ndarray:
    f = grid.check_field(f)
    src = isometry_permutation(grid, P)
    out = f.ravel()[src].reshape(grid.shape)
    return -out if P.sign < 0 else out


def generate_group(generators) -> list[Isometry]:
    """Finite group generated by ``generators`` (closure under composition)."""
    elems = {Isometry.identity().key(): Isometry.identity()}
    frontier = list(elems.values())
    while frontier:
        new = []
        for g, h in itertools.product(frontier, generators):
            p = h @ g
            if p.key() not in elems:
                elems[p.key()] = p
                new.append(p)
        frontier = new
        if len(elems) > 4096:
            raise IsometryError("generated group is too large (not finite?)")
    return list(elems.values())


class Symmetrizer:
    """Projection onto fields invariant under a finite group of isometries.

    After averaging over the group the result is made *bitwise* invariant by
    copying each orbit representative's value (with the appropriate sign).
    """

    def __init__(self, grid: TorusGrid, generators):
        self.grid = grid
        self.group = generate_group(list(generators))
        srcs = np.stack([isometry_permutation(grid, g) for g in self.group])
        signs = np.array([g.sign for g in self.group], dtype=float)
        self._signs = signs
        rep_idx = np.argmin(srcs, axis=0)
        n = srcs.shape[1]
        rep = srcs[rep_idx, np.arange(n)]
        rep_sign = signs[rep_idx]
        # nodes fixed by an element with sign -1 must vanish
        conflict = np.zeros(n, dtype=bool)
        for s, sg in zip(srcs, signs):
            conflict |= (s == rep) & (sg != rep_sign)
        # average only at orbit representatives, then scatter
        reps, inverse = np.unique(rep, return_inverse=True)
        self._gather = srcs[:, reps]
        self._inverse = inverse
        self._rep_sign = np.where(conflict, 0.0, rep_sign)

    def __call__(self, f) -> np.ndarray:
        flat = self.grid.check_field(f).ravel()
        terms = [flat[s] if sg > 0 else -flat[s] for s, sg in zip(self._gather, self._signs)]
        # pairwise sums: for an invariant field and a group of order 2^k every
        # partial sum is exact, so the projection is idempotent bit for bit
        while len(terms) > 1:
            nxt = [a + b for a, b in zip(terms[0::2], terms[1::2])]
            if len(terms) % 2:
                nxt.append(terms[-1])
            terms = nxt
        avg = terms[0] / len(self._signs)
        return (self._rep_sign * avg[self._inverse]).reshape(self.grid.shape)


# -- 1D radial grids ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell-centred 1D grid for eta-only or geodesic-radius-only functions.

    ``coordinate='eta'``: eta in (0, pi/2), density cos(eta) sin(eta);
    ``coordinate='geodesic'``: r in (0, pi), density sin(r)^2.
    """

    coordinate: str
    n: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)
    faces: np.ndarray = field(init=False, repr=False)
    face_metric: np.ndarray = field(init=False, repr=False)
    cell_volume: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.coordinate == "eta":
            length = 0.5 * np.pi
        elif self.coordinate == "geodesic":
            length = np.pi
        else:
            raise ValueError(f"unknown radial coordinate {self.coordinate!r}")
        h = length / self.n
        faces = np.arange(self.n + 1) * h
        faces[-1] = length
        if self.coordinate == "eta":
            jf = np.cos(faces) * np.sin(faces)
            vol = 0.5 * (np.sin(faces[1:]) ** 2 - np.sin(faces[:-1]) ** 2)
        else:
            jf = np.sin(faces) ** 2
            prim = 0.5 * faces - 0.25 * np.sin(2 * faces)
            vol = np.diff(prim)
        jf[0] = jf[-1] = 0.0
        s = object.__setattr__
        s(self, "h", h)
        s(self, "faces", faces)
        s(self, "nodes", (np.arange(self.n) + 0.5) * h)
        s(self, "face_metric", jf)
        s(self, "cell_volume", vol)

    @property
    def length(self) -> float:
        return self.faces[-1]

    @property
    def measure(self) -> float:
        """Angular measure multiplying the 1D integral to give an S^3 integral."""
        return 4 * np.pi**2 if self.coordinate == "eta" else 4 * np.pi

    def couplings(self):
        lo = self.face_metric[:-1] / (self.h * self.cell_volume)
        up = self.face_metric[1:] / (self.h * self.cell_volume)
        return lo, up

    def laplacian(self, f) -> np.ndarray:
        lo, up = self.couplings()
        d = np.diff(f)
        out = np.zeros_like(f, dtype=float)
        out[:-1] += up[:-1] * d
        out[1:] -= lo[1:] * d
        return out

    def integrate(self, f) -> float:
        return float(np.dot(f, self.cell_volume)) * self.measure

    def dirichlet(self, f) -> float:
        return float(np.dot(np.diff(f) ** 2, self.face_metric[1:-1]) / self.h) * self.measure

    def angular_factors(self):
        """Coefficients multiplying k1^2, k2^2 (eta) or l(l+1) (geodesic)."""
        if self.coordinate == "eta":
            return 1.0 / np.cos(self.nodes) ** 2, 1.0 / np.sin(self.nodes) ** 2
        return 1.0 / np.sin(self.nodes) ** 2, None
