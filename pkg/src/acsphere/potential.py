"""Symmetric double-well potentials, the layer constant sigma, and the
one-dimensional heteroclinic profile."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import ConfigurationError


def _std_w(t):
    return 0.25 * (1.0 - t * t) ** 2


def _std_dw(t):
    return t * t * t - t


def _std_ddw(t):
    return 3.0 * t * t - 1.0


@dataclass(frozen=True)
class DoubleWell:
    """A symmetric double-well potential W with wells at +-1.

    Outside ``[-t_max, t_max]`` the potential is continued by its second-order
    Taylor polynomial at ``+-t_max``, which keeps W and W' continuous and W''
    bounded.

    Parameters
    ----------
    w, dw, ddw : callable
        W, W' and W'' on ``[-t_max, t_max]``; vectorized over numpy arrays.
    t_max : float
        Clamp bound (default 2).
    scale : float
        Multiplies all three evaluators; ``scale=4`` gives ``4W``.
    """

    w: Callable = _std_w
    dw: Callable = _std_dw
    ddw: Callable = _std_ddw
    t_max: float = 2.0
    scale: float = 1.0
    name: str = "standard"

    def __post_init__(self):
        if not self.scale > 0 or not self.t_max > 1:
            raise ConfigurationError("double well needs scale > 0 and t_max > 1")
        t = np.linspace(-self.t_max, self.t_max, 801)
        wt = self.W(t)
        inner = t[(np.abs(t) > 1e-3) & (np.abs(t) < 1 - 1e-3)]
        checks = {
            "W >= 0": np.all(wt >= -1e-14),
            "W(+-1) = 0": abs(self.W(1.0)) < 1e-14 and abs(self.W(-1.0)) < 1e-14,
            "W even": np.allclose(wt, wt[::-1], atol=1e-13),
            "W'(0) = 0": abs(self.dW(0.0)) < 1e-14,
            "t W'(t) < 0 on 0 < |t| < 1": np.all(inner * self.dW(inner) < 0),
            "W''(+-1) > 0": self.ddW(1.0) > 0 and self.ddW(-1.0) > 0,
        }
        failed = [k for k, ok in checks.items() if not ok]
        if failed:
            raise ConfigurationError(f"not a symmetric double well: {', '.join(failed)}")

    @classmethod
    def standard(cls) -> "DoubleWell":
        """``W(t) = (1 - t^2)^2 / 4``."""
        return cls()

    @property
    def is_standard(self) -> bool:
        return self.w is _std_w and self.scale == 1.0

    def _inside(self, t) -> bool:
        return t.size == 0 or float(np.max(np.abs(t))) <= self.t_max

    def _split(self, t):
        tc = np.clip(t, -self.t_max, self.t_max)
        return tc, t - tc

    def _scaled(self, v):
        return v if self.scale == 1.0 else self.scale * v

    def W(self, t):
        t = np.asarray(t, dtype=float)
        if self._inside(t):
            return self._scaled(self.w(t))
        tc, d = self._split(t)
        return self._scaled(self.w(tc) + d * self.dw(tc) + 0.5 * d * d * self.ddw(tc))

    def dW(self, t):
        t = np.asarray(t, dtype=float)
        if self._inside(t):
            return self._scaled(self.dw(t))
        tc, d = self._split(t)
        return self._scaled(self.dw(tc) + d * self.ddw(tc))

    def ddW(self, t):
        t = np.asarray(t, dtype=float)
        return self._scaled(self.ddw(np.clip(t, -self.t_max, self.t_max)))

    @cached_property
    def sigma(self) -> float:
        return sigma(self)


def sigma(W: DoubleWell) -> float:
    """``int_{-1}^{1} sqrt(W(t)/2) dt``, the energy of one layer divided by 2.

    Adaptive quadrature to absolute error below 1e-10.  For the standard well
    the value is ``sqrt(2)/3``.
    """
    val, err = quad(lambda t: np.sqrt(max(float(W.W(t)), 0.0) / 2.0), -1.0, 1.0,
                    epsabs=1e-13, epsrel=1e-13, limit=200)
    if err > 1e-10:
        raise ArithmeticError(f"sigma quadrature error estimate {err:.2e} too large")
    return float(val)


def heteroclinic(W: DoubleWell, eps: float, t):
    """The monotone layer H with ``H(0) = 0`` and ``H(+-inf) = +-1``.

    For the standard well this is ``tanh(t / (eps sqrt 2))``.  Otherwise the
    first-order equation ``eps H' = sqrt(2 W(H))`` is integrated outward from 0
    (it is odd for even W).
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    t = np.asarray(t, dtype=float)
    if W.is_standard:
        return np.tanh(t / (eps * np.sqrt(2.0)))
    s = np.abs(t) / eps
    smax = float(np.max(s)) if s.size else 0.0
    if smax == 0.0:
        return np.zeros_like(t)

    def rhs(_, h):
        return np.sqrt(2.0 * np.maximum(W.W(h), 0.0))

    knots, inv = np.unique(s.ravel(), return_inverse=True)
    sol = solve_ivp(rhs, (0.0, smax), [0.0], t_eval=knots,
                    rtol=1e-12, atol=1e-14, method="DOP853")
    h = np.minimum(sol.y[0], 1.0)[inv]
    return (np.sign(t).ravel() * h).reshape(t.shape)
