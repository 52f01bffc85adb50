"""Truncated node grid on the half-line with quadrature weights and weighted norms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform node grid ``x_i = i L / (N - 1)`` on ``[0, L]``.

    Attributes
    ----------
    L : float
        Truncation length.
    N : int
        Number of nodes.
    nodes : ndarray
        Node positions, ``nodes[0] == 0`` and ``nodes[-1] == L``.
    dx : float
        Node spacing.
    quad_weights : ndarray
        Trapezoid weights; they double as finite-volume cell widths.
    """

    L: float
    N: int
    nodes: np.ndarray = field(repr=False)
    dx: float
    quad_weights: np.ndarray = field(repr=False)

    def is_dyadic(self) -> bool:
        half = np.arange((self.N - 1) // 2 + 1)
        return bool(np.all(self.nodes[2 * half] == 2.0 * self.nodes[half]))

    def tail_slice(self, fraction: float = 0.05) -> slice:
        start = int(np.floor((1.0 - fraction) * (self.N - 1)))
        return slice(start, self.N)


def make_grid(L: float, N: int) -> Grid:
    L = float(L)
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    if not np.isfinite(L) or L <= 0.0:
        raise ValueError(f"L must be positive, got {L}")
    N = int(N)
    # i*L is exact for the sizes we use, so nodes[2i] == 2*nodes[i] bit for bit
    nodes = np.arange(N, dtype=float) * L / (N - 1)
    nodes[-1] = L
    dx = L / (N - 1)
    w = np.full(N, dx)
    w[0] = w[-1] = 0.5 * dx
    nodes.setflags(write=False)
    w.setflags(write=False)
    return Grid(L=L, N=N, nodes=nodes, dx=dx, quad_weights=w)


_KINDS = ("poly_bracket", "poly_homog", "homog_pair", "custom")


@dataclass(frozen=True)
class WeightSpec:
    """Weight function ``xi(x)`` used in ``L^1(xi)`` norms.

    ``poly_bracket`` is ``(1 + x^2)^(alpha/2)``, ``poly_homog`` is ``x^alpha``,
    ``homog_pair`` is ``x^alpha + x^beta`` and ``custom`` carries node values.
    """

    kind: str
    alpha: float = 0.0
    beta: float | None = None
    values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.kind == "homog_pair":
            if self.beta is None or not np.isfinite(self.beta):
                raise ValueError("homog_pair needs a finite beta")
            if not (0.0 <= self.alpha < 1.0 < self.beta):
                raise ValueError("homog_pair needs 0 <= alpha < 1 < beta")
        if self.kind == "custom":
            if self.values is None:
                raise ValueError("custom weight needs a value vector")
            object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @classmethod
    def bracket(cls, alpha: float) -> "WeightSpec":
        return cls("poly_bracket", alpha)

    @classmethod
    def homog(cls, alpha: float) -> "WeightSpec":
        return cls("poly_homog", alpha)

    @classmethod
    def pair(cls, alpha: float, beta: float) -> "WeightSpec":
        return cls("homog_pair", alpha, beta)

    @classmethod
    def custom(cls, values) -> "WeightSpec":
        return cls("custom", values=values)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "poly_bracket":
            return (1.0 + x * x) ** (0.5 * self.alpha)
        if self.kind == "poly_homog":
            return _power(x, self.alpha)
        if self.kind == "homog_pair":
            return _power(x, self.alpha) + _power(x, self.beta)
        if self.values.shape != x.shape:
            raise ValueError("custom weight length does not match the grid")
        return self.values


def _power(x: np.ndarray, p: float) -> np.ndarray:
    # 0**0 = 1, and 0**p = 0 for p > 0; negative p at x = 0 is left infinite
    with np.errstate(divide="ignore"):
        return np.power(x, p)


def _check(f, g: Grid, name: str = "f") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.N,):
        raise ValueError(f"{name} has shape {f.shape}, grid has {g.N} nodes")
    return f


def weighted_norm(f, g: Grid, w: WeightSpec) -> float:
    f = _check(f, g)
    return float(np.sum(g.quad_weights * np.abs(f) * w.evaluate(g.nodes)))


def cumulative(f, g: Grid) -> np.ndarray:
    """Running quadrature ``G(x_i) = sum_{j <= i} w_j f_j``."""
    f = _check(f, g)
    return np.cumsum(g.quad_weights * f)


def weak_norm(f, g: Grid, alpha: float) -> float:
    G = cumulative(f, g)
    return weighted_norm(np.abs(G), g, WeightSpec.bracket(alpha - 1.0))


def moment(f, g: Grid, p: float) -> float:
    f = _check(f, g)
    return float(np.sum(g.quad_weights * f * _power(g.nodes, p)))


def pairing(f, phi, g: Grid) -> float:
    f = _check(f, g)
    phi = _check(phi, g, "phi")
    return float(np.sum(g.quad_weights * f * phi))


def tail_mass(f, g: Grid, fraction: float = 0.05) -> float:
    """Mass ``sum w |f|`` carried by the last ``fraction`` of the nodes."""
    f = _check(f, g)
    s = g.tail_slice(fraction)
    return float(np.sum(g.quad_weights[s] * np.abs(f[s])))
