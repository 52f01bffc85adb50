"""Fragmentation rates, offspring distributions and the quantities derived from them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable
import logging

import numpy as np
from scipy import integrate, optimize

log = logging.getLogger(__name__)
_TAIL_WARNED: set = set()

Z_GRID = np.linspace(0.0, 1.0, 4096)
COMPAT_TOL = 1e-10
ALPHA_MAX = 200.0


def _quad(func, a: float, b: float, points=None) -> float:
    val, _ = integrate.quad(func, a, b, epsabs=1e-14, epsrel=1e-13, limit=400,
                            points=points)
    return val


@dataclass(frozen=True)
class OffspringDist:
    """Scale-invariant law of daughter sizes, either atomic or with a density.

    Atomic laws hold ``(z, mass)`` pairs with ``z`` in ``(0, 1]``.  Densities are
    kept both as a callable and as a table on the 4096-point grid ``Z_GRID``.
    """

    kind: str
    atoms: tuple = ()
    func: Callable | None = field(default=None, repr=False, compare=False)
    table: np.ndarray | None = field(default=None, repr=False, compare=False)
    label: str = ""
    tabulated_only: bool = False

    def __post_init__(self):
        if self.kind == "atoms":
            if not self.atoms:
                raise ValueError("atomic offspring law needs at least one atom")
            for z, m in self.atoms:
                if not (0.0 < z <= 1.0):
                    raise ValueError(f"atom location {z} outside (0, 1]")
                if m < 0.0:
                    raise ValueError(f"negative atom mass {m}")
        elif self.kind == "density":
            if self.table is None or self.table.shape != Z_GRID.shape:
                raise ValueError("density table must live on the 4096-point z-grid")
            finite = self.table[np.isfinite(self.table)]
            if np.any(finite < 0.0):
                raise ValueError("offspring density takes negative values")
        else:
            raise ValueError(f"unknown offspring kind {self.kind!r}")
        err = abs(offspring_moment(self, 1.0) - 1.0)
        if err > COMPAT_TOL:
            raise ValueError(f"compatibility violated: |int z p(dz) - 1| = {err:.3e}")

    # constructors
    @classmethod
    def from_atoms(cls, pairs, label: str = "atoms") -> "OffspringDist":
        pairs = tuple((float(z), float(m)) for z, m in pairs)
        return cls("atoms", atoms=pairs, label=label)

    @classmethod
    def from_density(cls, func: Callable, label: str = "density") -> "OffspringDist":
        with np.errstate(divide="ignore", invalid="ignore"):
            table = np.asarray(func(Z_GRID), dtype=float)
        if table.shape != Z_GRID.shape:
            table = np.array([func(z) for z in Z_GRID], dtype=float)
        return cls("density", func=func, table=table, label=label)

    @classmethod
    def from_table(cls, values, label: str = "tabulated", normalize: bool = False) -> "OffspringDist":
        """Density given by its values on ``Z_GRID``.

        With ``normalize`` the table is rescaled so that the trapezoid value of
        ``int z p`` is exactly 1; otherwise it must already be within 1e-10.
        """
        table = np.asarray(values, dtype=float)
        if table.shape != Z_GRID.shape:
            raise ValueError("density table must live on the 4096-point z-grid")
        if normalize:
            table = table / integrate.trapezoid(Z_GRID * table, Z_GRID)
        func = lambda z: np.interp(z, Z_GRID, table)  # noqa: E731
        return cls("density", func=func, table=table, label=label, tabulated_only=True)

    @classmethod
    def mitosis(cls) -> "OffspringDist":
        return cls.from_atoms([(0.5, 2.0)], label="mitosis")

    @classmethod
    def binary(cls, sigma: float) -> "OffspringDist":
        """Two daughters of relative sizes ``sigma`` and ``1 - sigma``."""
        if not 0.0 < sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if sigma == 0.5:
            return cls.mitosis()
        return cls.from_atoms([(sigma, 1.0), (1.0 - sigma, 1.0)], label=f"binary({sigma})")

    @classmethod
    def uniform(cls) -> "OffspringDist":
        return cls.from_density(lambda z: np.full_like(np.asarray(z, dtype=float), 2.0),
                                label="uniform")

    @classmethod
    def power(cls, theta: float) -> "OffspringDist":
        """Density ``(theta + 2) z^theta``, normalised so that ``int z p = 1``."""
        if theta <= -1.0:
            raise ValueError("theta must exceed -1 for an integrable density")
        c = theta + 2.0
        return cls.from_density(lambda z: c * np.power(np.asarray(z, dtype=float), theta),
                                label=f"power({theta})")

    # evaluation
    def __call__(self, z):
        if self.kind != "density":
            raise TypeError("atomic offspring laws have no pointwise density")
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(self.func(z), dtype=float)
        return np.where((z >= 0.0) & (z <= 1.0), out, 0.0)

    @property
    def z0(self) -> float:
        """Infimum of the support."""
        if self.kind == "atoms":
            return min(z for z, m in self.atoms if m > 0.0)
        positive = np.nonzero(self.table > 0.0)[0]
        k = positive[0]
        return 0.0 if k == 0 else float(Z_GRID[k - 1])

    def mass_below(self, u: float) -> float:
        """``int_0^u p(dz)``, closed at ``u`` for atoms."""
        if u <= 0.0:
            return 0.0
        if self.kind == "atoms":
            return sum(m for z, m in self.atoms if z <= u)
        u = min(u, 1.0)
        if self.tabulated_only:
            sel = Z_GRID <= u
            return float(integrate.trapezoid(self.table[sel], Z_GRID[sel]))
        return _quad(lambda z: float(self(z)), 0.0, u)


def offspring_moment(p: OffspringDist, alpha: float) -> float:
    """Moment ``int_0^1 z^alpha p(dz)``."""
    if alpha < 0.0:
        raise ValueError("alpha must be nonnegative")
    if p.kind == "atoms":
        return float(sum(m * z ** alpha for z, m in p.atoms))
    if p.tabulated_only:
        return float(integrate.trapezoid(Z_GRID ** alpha * p.table, Z_GRID))
    return _quad(lambda z: z ** alpha * float(p(z)), 0.0, 1.0)


def offspring_count(p: OffspringDist) -> float:
    return offspring_moment(p, 0.0)


def offspring_density_variation(p: OffspringDist) -> float:
    """Total variation of the tabulated density (finite differences on ``Z_GRID``)."""
    if p.kind != "density":
        raise ValueError("density variation is undefined for atomic offspring laws")
    t = p.table
    start = 0 if np.isfinite(t[0]) else 1
    return float(np.sum(np.abs(np.diff(t[start:]))))


def critical_exponent(p: OffspringDist, K0: float, K1: float) -> float:
    """Root ``alpha*`` of ``p_alpha = K0 / K1`` on ``[0, ALPHA_MAX]``."""
    if not 0.0 < K0 <= K1:
        raise ValueError("need 0 < K0 <= K1")
    if p.kind == "atoms" and all(z == 1.0 for z, m in p.atoms if m > 0.0):
        raise ValueError("p_alpha is constant for a Dirac at z = 1; no critical exponent")
    target = K0 / K1
    h = lambda a: offspring_moment(p, a) - target  # noqa: E731
    lo, hi = h(0.0), h(ALPHA_MAX)
    if lo == 0.0:
        return 0.0
    if np.sign(lo) == np.sign(hi):
        raise ValueError(f"no sign change of p_alpha - K0/K1 on [0, {ALPHA_MAX}]")
    root = optimize.brentq(h, 0.0, ALPHA_MAX, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                           maxiter=500)
    if abs(h(root)) > 1e-10:
        raise ValueError(f"critical exponent residual {abs(h(root)):.2e} too large")
    return float(root)


_RATE_KINDS = ("constant", "power", "bounded_power", "exponential", "indicator", "custom")


@dataclass(frozen=True)
class TotalRate:
    """Total fragmentation rate ``K(x)`` with the constants of its sandwich bound.

    ``K0 x^gamma 1_{x >= x1} <= K(x) <= K1 max(1, x^gamma)`` and ``K`` vanishes
    exactly on ``[0, x0)``.
    """

    kind: str
    K0: float
    K1: float
    gamma: float = 0.0
    x0: float = 0.0
    x1: float = 0.0
    params: tuple = ()
    func: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _RATE_KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if self.K0 < 0.0 or self.K1 <= 0.0 or self.K0 > self.K1:
            raise ValueError("need 0 <= K0 <= K1 and K1 > 0")
        if self.gamma < 0.0 or self.x0 < 0.0 or self.x1 < self.x0:
            raise ValueError("need gamma >= 0 and 0 <= x0 <= x1")

    @classmethod
    def constant(cls, K0: float) -> "TotalRate":
        if K0 <= 0.0:
            raise ValueError("constant rate must be positive")
        return cls("constant", K0, K0, params=(K0,))

    @classmethod
    def power(cls, gamma: float, scale: float = 1.0) -> "TotalRate":
        if gamma <= 0.0 or scale <= 0.0:
            raise ValueError("power rate needs gamma > 0 and a positive scale")
        return cls("power", scale, scale, gamma=gamma, params=(scale,))

    @classmethod
    def bounded_power(cls, gamma: float, K0: float, K1: float, x0: float, x1: float) -> "TotalRate":
        """``K0 x^gamma`` switched on by a smoothstep ramp between ``x0`` and ``x1``."""
        if K0 <= 0.0:
            raise ValueError("K0 must be positive")
        return cls("bounded_power", K0, K1, gamma=gamma, x0=x0, x1=x1)

    @classmethod
    def exponential(cls, c: float, r: float = 1.0) -> "TotalRate":
        """``c exp(-r x)``, the usual birth rate of the renewal model."""
        if c <= 0.0 or r <= 0.0:
            raise ValueError("exponential rate needs c > 0 and r > 0")
        return cls("exponential", 0.0, c, params=(c, r))

    @classmethod
    def indicator(cls, c: float, a: float, b: float) -> "TotalRate":
        if c <= 0.0 or not 0.0 <= a < b:
            raise ValueError("indicator rate needs c > 0 and 0 <= a < b")
        return cls("indicator", 0.0, c, x0=a, x1=a, params=(c, a, b))

    @classmethod
    def custom(cls, func: Callable, K0: float, K1: float, gamma: float = 0.0,
               x0: float = 0.0, x1: float = 0.0) -> "TotalRate":
        return cls("custom", K0, K1, gamma=gamma, x0=x0, x1=x1, func=func)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "constant":
            return np.full_like(x, self.params[0])
        if k == "power":
            return self.params[0] * np.power(x, self.gamma)
        if k == "bounded_power":
            if self.x1 > self.x0:
                s = np.clip((x - self.x0) / (self.x1 - self.x0), 0.0, 1.0)
                ramp = s * s * (3.0 - 2.0 * s)
            else:
                ramp = (x > self.x0).astype(float)
            return self.K0 * np.power(x, self.gamma) * ramp
        if k == "exponential":
            c, r = self.params
            return c * np.exp(-r * x)
        if k == "indicator":
            c, a, b = self.params
            return np.where((x >= a) & (x <= b), c, 0.0)
        return np.asarray(self.func(x), dtype=float) * np.ones_like(x)

    @property
    def at_zero(self) -> float:
        return float(self(np.array([0.0]))[0])

    @property
    def lower_bound(self) -> float:
        """``K_*``: the infimum of ``K``, meaningful when ``K(0) > 0``."""
        if self.kind == "constant":
            return self.params[0]
        x = np.linspace(0.0, 50.0, 5001)
        return float(np.min(self(x)))

    def has_exponential_tail(self) -> bool:
        return self.kind in ("exponential", "indicator")

    def laplace(self, s: float, x_cut: float = 40.0) -> float:
        """``int_0^inf K(x) exp(-s x) dx``, with an analytic tail where one is known."""
        if self.kind == "exponential":
            c, r = self.params
            return c / (r + s) if r + s > 0.0 else np.inf
        if self.kind == "indicator":
            c, a, b = self.params
            if s == 0.0:
                return c * (b - a)
            return c * (np.exp(-s * a) - np.exp(-s * b)) / s
        if self.kind == "constant":
            return self.params[0] / s if s > 0.0 else np.inf
        if s <= 0.0 and self.kind != "custom":
            return np.inf
        if (self.kind, x_cut) not in _TAIL_WARNED:
            _TAIL_WARNED.add((self.kind, x_cut))
            log.warning("tail of K beyond x=%g neglected for rate kind %r", x_cut, self.kind)
        return _quad(lambda x: float(self(x)) * np.exp(-s * x), 0.0, x_cut)

    def l1_norm(self, x_cut: float = 40.0) -> float:
        return self.laplace(0.0, x_cut)

    def check_bounds(self, samples: int = 1000, x_max: float = 50.0, seed: int = 0) -> bool:
        """Sample the positivity and sandwich assumptions at random points."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.0, x_max, samples)
        K = self(x)
        xg = np.power(x, self.gamma)
        lower = np.where(x >= self.x1, self.K0 * xg, 0.0)
        upper = self.K1 * np.maximum(1.0, xg)
        slack = 1e-12 * np.maximum(1.0, upper)
        ok = np.all(K >= lower - slack) and np.all(K <= upper + slack)
        ok &= np.all(K[x < self.x0] == 0.0)
        if self.kind == "indicator":
            c, a, b = self.params
            ok &= np.all(K[(x > a) & (x < b)] > 0.0)
        else:
            ok &= np.all(K[x > self.x0] > 0.0)
        return bool(ok)


MODEL_KINDS = ("mitosis", "smooth_cell_division", "self_similar", "age_structured")


@dataclass(frozen=True)
class FragmentationModel:
    """A growth-fragmentation model: rate, offspring law, growth and damping."""

    kind: str
    rate: TotalRate
    offspring: OffspringDist | None = None

    def __post_init__(self):
        k = self.kind
        if k not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {k!r}")
        p = self.offspring
        if k == "mitosis":
            if p is None or p.kind != "atoms" or p.atoms != ((0.5, 2.0),):
                raise ValueError("mitosis needs the offspring law 2 delta_{1/2}")
        elif k == "smooth_cell_division":
            if p is None or p.kind != "density":
                raise ValueError("smooth cell division needs an offspring density")
        elif k == "self_similar":
            if p is None or p.kind != "density":
                raise ValueError("self-similar fragmentation needs an offspring density")
            if self.rate.kind != "power":
                raise ValueError("self-similar fragmentation needs K(x) = x^gamma, gamma > 0")
        else:
            if p is not None:
                raise ValueError("the age-structured model takes no offspring law")
            norm = self.rate.l1_norm()
            if not norm > 1.0:
                raise ValueError(f"age-structured model needs ||K||_1 > 1, got {norm:.6g}")

    @property
    def nu(self) -> float:
        return 1.0 if self.kind == "age_structured" else 0.0

    def tau(self, x):
        x = np.asarray(x, dtype=float)
        return x.copy() if self.kind == "self_similar" else np.ones_like(x)

    @property
    def is_cell_division(self) -> bool:
        return self.kind in ("mitosis", "smooth_cell_division")


def mitosis_model(rate: TotalRate) -> FragmentationModel:
    return FragmentationModel("mitosis", rate, OffspringDist.mitosis())


def cell_division_model(rate: TotalRate, offspring: OffspringDist) -> FragmentationModel:
    kind = "mitosis" if offspring.kind == "atoms" else "smooth_cell_division"
    return FragmentationModel(kind, rate, offspring)


def self_similar_model(gamma: float, offspring: OffspringDist) -> FragmentationModel:
    return FragmentationModel("self_similar", TotalRate.power(gamma), offspring)


def age_structured_model(rate: TotalRate) -> FragmentationModel:
    return FragmentationModel("age_structured", rate)
