"""Characteristic root and explicit dual eigenfunction of the age-structured model."""
from __future__ import annotations

import logging

import numpy as np
from scipy import integrate, optimize

from .grid import Grid
from .kernels import TotalRate

log = logging.getLogger(__name__)

X_CUT = 40.0


def euler_lotka_root(K: TotalRate, x_cut: float = X_CUT) -> float:
    """The ``lambda > -1`` solving ``int K(x) exp(-(1 + lambda) x) dx = 1``."""
    norm = K.l1_norm(x_cut)
    if not norm > 1.0:
        raise ValueError(f"||K||_1 = {norm:.6g} must exceed 1")
    h = lambda lam: K.laplace(1.0 + lam, x_cut) - 1.0  # noqa: E731
    lo = -1.0 + 1e-12
    hi = 1.0
    while h(hi) > 0.0:
        lo, hi = hi, 2.0 * hi + 1.0
    root = optimize.brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(h(root)) > 1e-12:
        raise ValueError(f"Euler-Lotka residual {abs(h(root)):.2e} above 1e-12")
    return float(root)


def renewal_dual(K: TotalRate, lam: float, g: Grid, x_cut: float = X_CUT) -> np.ndarray:
    """``psi(x) = int_0^inf K(x + s) exp(-(1 + lambda) s) ds`` on the grid nodes.

    Closed forms are used for exponential and indicator rates; otherwise each
    node is an adaptive quadrature truncated at ``x + x_cut``.
    """
    x = g.nodes
    s = 1.0 + lam
    if K.kind == "exponential":
        c, r = K.params
        return c * np.exp(-r * x) / (r + s)
    if K.kind == "indicator":
        c, a, b = K.params
        lo = np.maximum(a, x)
        return np.where(x <= b, c * (np.exp(-s * (lo - x)) - np.exp(-s * (b - x))) / s, 0.0)
    log.warning("renewal dual: tail beyond x + %g neglected for rate kind %r", x_cut, K.kind)
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        out[i] = integrate.quad(lambda t: float(K(xi + t)) * np.exp(-s * t), 0.0, x_cut,
                                epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return out


def renewal_dual_residual(K: TotalRate, lam: float, g: Grid, psi) -> float:
    """Sup norm of ``psi' - psi + K psi(0) - lambda psi`` with forward differences."""
    psi = np.asarray(psi, dtype=float)
    dpsi = np.diff(psi) / g.dx
    r = dpsi - psi[:-1] + K(g.nodes[:-1]) * psi[0] - lam * psi[:-1]
    return float(np.max(np.abs(r)))
