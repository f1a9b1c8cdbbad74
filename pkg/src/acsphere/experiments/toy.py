"""Finite-dimensional gradient flow on S^1 x S^2 where the Morse index
increases along a flow line.

Coordinates ``(x, y, z, w, u)`` with ``x^2 + y^2 = 1 = z^2 + w^2 + u^2`` and
``F = y (u + 2)``.  Along the meridian ``(cos a, sin a, 0, 0, -1)`` the flow
reduces to ``a' = -cos a``, solved by ``a(t) = gd(-t)`` (Gudermannian), which
runs from the index-1 point at a = pi/2 to the index-2 point at a = -pi/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

CRITICAL_POINTS = {
    (0.0, -1.0, 0.0, 0.0, 1.0): 0,
    (0.0, 1.0, 0.0, 0.0, -1.0): 1,
    (0.0, -1.0, 0.0, 0.0, -1.0): 2,
    (0.0, 1.0, 0.0, 0.0, 1.0): 3,
}


def F(p) -> float:
    return p[1] * (p[4] + 2.0)


def euclidean_gradient(p) -> np.ndarray:
    return np.array([0.0, p[4] + 2.0, 0.0, 0.0, p[1]])


def euclidean_hessian(p) -> np.ndarray:
    h = np.zeros((5, 5))
    h[1, 4] = h[4, 1] = 1.0
    return h


def _projector(p) -> np.ndarray:
    a, b = np.asarray(p[:2]), np.asarray(p[2:])
    P = np.zeros((5, 5))
    P[:2, :2] = np.eye(2) - np.outer(a, a)
    P[2:, 2:] = np.eye(3) - np.outer(b, b)
    return P


def _normalize(p) -> np.ndarray:
    p = np.array(p, dtype=float)
    p[:2] /= np.linalg.norm(p[:2])
    p[2:] /= np.linalg.norm(p[2:])
    return p


def riemannian_gradient(p) -> np.ndarray:
    return _projector(p) @ euclidean_gradient(p)


def riemannian_hessian(p) -> np.ndarray:
    """Hessian on the 3-dimensional tangent space, in an orthonormal basis.

    For a product of round spheres, ``Hess F = P H P - <x_i, grad_i F> P_i``
    on each factor.
    """
    p = np.asarray(p, dtype=float)
    P = _projector(p)
    g = euclidean_gradient(p)
    shape = np.zeros((5, 5))
    shape[:2, :2] = np.dot(p[:2], g[:2]) * P[:2, :2]
    shape[2:, 2:] = np.dot(p[2:], g[2:]) * P[2:, 2:]
    H = P @ euclidean_hessian(p) @ P - shape
    lam, vec = np.linalg.eigh(P)
    T = vec[:, lam > 0.5]  # orthonormal tangent basis
    return T.T @ H @ T


def morse_index(p) -> int:
    lam = np.linalg.eigvalsh(riemannian_hessian(p))
    if np.min(np.abs(lam)) < 1e-12:
        raise ValueError("degenerate critical point")
    return int(np.sum(lam < 0))


def flow(p0, t_end: float, t_eval=None):
    """Integrate ``p' = -grad F(p)``.

    The vector field is evaluated at the normalized point; otherwise the
    manifold is unstable for the ambient ODE near the index-1 point.
    """

    def rhs(_, p):
        return -riemannian_gradient(_normalize(p))

    sol = solve_ivp(rhs, (0.0, t_end), np.asarray(p0, dtype=float), t_eval=t_eval,
                    rtol=1e-12, atol=1e-14, method="DOP853")
    return sol.t, np.array([_normalize(p) for p in sol.y.T])


def meridian(t) -> np.ndarray:
    """Exact flow line ``(cos a, sin a, 0, 0, -1)`` with ``a = gd(-t)``."""
    a = 2.0 * np.arctan(np.tanh(-np.asarray(t, dtype=float) / 2.0))
    t = np.atleast_1d(a)
    return np.stack([np.cos(t), np.sin(t), 0 * t, 0 * t, -np.ones_like(t)], axis=-1)


@dataclass
class ToyResult:
    indices: dict
    meridian_error: float
    meridian_endpoint_error: float
    jitter_endpoint: np.ndarray
    jitter_nearest: tuple
    jitter_index: int


def run_toy(jitter: float = 1e-3, seed: int = 0, T: float = 20.0) -> ToyResult:
    indices = {}
    for p, expected in CRITICAL_POINTS.items():
        if np.linalg.norm(riemannian_gradient(p)) > 1e-14:
            raise AssertionError(f"{p} is not critical")
        indices[p] = morse_index(p)
    # the meridian: start on the exact orbit near the index-1 point
    ts = np.linspace(0.0, 2 * T, 401)
    _, ys = flow(meridian(-T)[0], 2 * T, ts)
    exact = meridian(ts - T)
    merr = float(np.max(np.linalg.norm(ys - exact, axis=1)))
    end_err = float(np.linalg.norm(ys[-1] - np.array([0.0, -1.0, 0.0, 0.0, -1.0])))
    # a generic perturbation leaves the meridian and ends at the minimum
    rng = np.random.default_rng(seed)
    p0 = np.array([0.0, 1.0, 0.0, 0.0, -1.0]) + jitter * rng.standard_normal(5)
    p0 = _normalize(p0)
    _, yj = flow(p0, 4 * T)
    end = yj[-1]
    nearest = min(CRITICAL_POINTS, key=lambda c: np.linalg.norm(end - np.array(c)))
    return ToyResult(indices, merr, end_err, end, nearest, CRITICAL_POINTS[nearest])
