"""Time stepping, trajectories, decay-rate fits and the relative-entropy identity."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from . import _accel
from .grid import Grid
from .kernels import FragmentationModel
from .linalg import factorize
from .operators import DiscreteOperator

SCHEMES = ("explicit_euler", "implicit_euler")


class CFLError(ValueError):
    """Explicit step larger than the positivity bound."""


def explicit_dt_max(M) -> float:
    """Largest step for which ``I + dt M`` is entrywise nonnegative."""
    d = -np.asarray(M.diagonal())
    top = float(np.max(d)) if d.size else 0.0
    return np.inf if top <= 0.0 else 1.0 / top


class Stepper:
    """One-step map of ``f' = (Lambda - shift) f`` with a cached factorisation."""

    def __init__(self, op: DiscreteOperator, dt: float, scheme: str = "implicit_euler",
                 shift: float = 0.0):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.dt, self.scheme, self.shift = float(dt), scheme, float(shift)
        n = op.N
        M = op.matrix - shift * sp.identity(n, format="csr")
        self.M = M
        if scheme == "explicit_euler":
            self.dt_max = explicit_dt_max(M)
            if dt > self.dt_max * (1.0 + 1e-12):
                raise CFLError(f"dt={dt:.3e} exceeds the explicit bound {self.dt_max:.3e}")
        else:
            self.dt_max = np.inf
            self._solve = factorize(sp.identity(n, format="csr") - dt * M)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        if self.scheme == "explicit_euler":
            return f + self.dt * (self.M @ f)
        return self._solve(f)


def step(op: DiscreteOperator, f, dt: float, scheme: str = "implicit_euler") -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (op.N,):
        raise ValueError("state length does not match the operator")
    return Stepper(op, dt, scheme)(f)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray | None = field(repr=False)
    recorded: dict = field(default_factory=dict, repr=False)

    def series(self, name: str) -> np.ndarray:
        return self.recorded[name]

    def to_csv(self, path, names=None) -> None:
        names = list(self.recorded) if names is None else list(names)
        with open(path, "w") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for k, t in enumerate(self.times):
                row = [t] + [self.recorded[n][k] for n in names]
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def states_to_csv(self, path) -> None:
        if self.states is None:
            raise ValueError("trajectory was recorded without states")
        with open(path, "w") as fh:
            for t, s in zip(self.times, self.states):
                fh.write(",".join(f"{v:.17g}" for v in [t, *s]) + "\n")


def evolve(op: DiscreteOperator, f0, T: float, dt: float, scheme: str = "implicit_euler",
           record: Mapping[str, Callable[[np.ndarray], float]] | None = None,
           shift: float = 0.0, keep_states: bool = True) -> Trajectory:
    """Integrate to time ``T`` with ``round(T / dt)`` equal steps.

    ``record`` maps series names to functionals of the state; ``shift``
    evolves under ``Lambda - shift`` (the lambda-rescaled flow).
    """
    f = np.asarray(f0, dtype=float).copy()
    if f.shape != (op.N,):
        raise ValueError("initial datum length does not match the operator")
    if T < 0.0:
        raise ValueError("T must be nonnegative")
    record = dict(record or {})
    n = int(round(T / dt)) if T > 0.0 else 0
    stepper = Stepper(op, T / n if n else dt, scheme, shift)
    times = stepper.dt * np.arange(n + 1)
    states = np.empty((n + 1, op.N)) if keep_states else None
    rec = {name: np.empty(n + 1) for name in record}
    for k in range(n + 1):
        if k:
            f = stepper(f)
        if keep_states:
            states[k] = f
        for name, fn in record.items():
            rec[name][k] = fn(f)
    return Trajectory(times=times, states=states, recorded=rec)


def decay_rate_fit(traj: Trajectory, series: str, window) -> float:
    """Least-squares slope of ``log(series)`` against ``t`` on ``window``."""
    t1, t2 = window
    t = traj.times
    sel = (t >= t1 - 1e-12) & (t <= t2 + 1e-12)
    y = np.asarray(traj.recorded[series])[sel]
    if y.size < 4:
        raise ValueError("fewer than 4 samples in the fit window")
    if np.any(y <= 0.0):
        raise ValueError(f"series {series!r} has nonpositive values in the window")
    return float(np.polyfit(t[sel], np.log(y), 1)[0])


# relative entropy

@dataclass(frozen=True)
class ConvexJ:
    name: str
    code: int

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return (s - 1.0) ** 2 if self.code == _accel.QUADRATIC else np.abs(s - 1.0)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return 2.0 * (s - 1.0) if self.code == _accel.QUADRATIC else np.sign(s - 1.0)


J_FUNCS = {"quadratic": ConvexJ("quadratic", _accel.QUADRATIC),
           "abs": ConvexJ("abs", _accel.ABSOLUTE)}
GRE_FLOOR = 1e-12


def _as_j(j) -> ConvexJ:
    return j if isinstance(j, ConvexJ) else J_FUNCS[j]


def _live(t) -> np.ndarray:
    return t.f_inf >= GRE_FLOOR * np.max(t.f_inf)


def gre_functional(f, t, g: Grid, j="quadratic") -> float:
    """``J(f) = int j(f / f_inf) f_inf phi`` over nodes where ``f_inf`` is above the floor."""
    j = _as_j(j)
    f = np.asarray(f, dtype=float)
    live = _live(t)
    u = f[live] / t.f_inf[live]
    return float(np.sum(g.quad_weights[live] * j(u) * t.f_inf[live] * t.phi[live]))


class DissipationKernel:
    """Coefficients ``c[(d, m)]`` of the dissipation ``sum c * Bregman(u_m | u_d)``.

    ``d`` is the daughter (base point of the Bregman divergence, weighted by
    ``phi``) and ``m`` the mother (weighted by ``f_inf``); the kernel measure is
    the model's fragmentation kernel under the grid's trapezoid rule.
    """

    def __init__(self, t, m: FragmentationModel, g: Grid):
        x, w = g.nodes, g.quad_weights
        K = m.rate(x)
        live = _live(t)
        if m.kind == "age_structured":
            d = np.zeros(g.N, dtype=np.int64)
            mo = np.arange(g.N)
            c = t.phi[0] * w * K * t.f_inf
        elif m.kind == "mitosis":
            mo = np.arange(0, g.N, 2)
            d = mo // 2
            c = w[mo] * 2.0 * K[mo] * t.phi[d] * t.f_inf[mo]
        elif m.offspring is not None and m.offspring.kind == "density":
            d, mo = np.triu_indices(g.N, k=1)
            keep = mo > 0
            d, mo = d[keep], mo[keep]
            dens = m.offspring(x[d] / x[mo])
            c = w[d] * w[mo] * K[mo] * dens / x[mo] * t.phi[d] * t.f_inf[mo]
        else:
            raise ValueError(f"no dissipation kernel for model kind {m.kind!r}")
        keep = live[d] & live[mo] & np.isfinite(c) & (c != 0.0)
        self.rows = d[keep].astype(np.int32)
        self.cols = mo[keep].astype(np.int32)
        self.vals = np.ascontiguousarray(c[keep])
        self.live = live
        self.f_inf = t.f_inf

    def __call__(self, f, j="quadratic", backend: str | None = None) -> float:
        j = _as_j(j)
        u = np.zeros_like(self.f_inf)
        u[self.live] = np.asarray(f, dtype=float)[self.live] / self.f_inf[self.live]
        return _accel.bregman_coo(self.rows, self.cols, self.vals, u, j.code, backend)


def gre_dissipation(f, t, m: FragmentationModel, g: Grid, j="quadratic") -> float:
    return DissipationKernel(t, m, g)(f, j)


def discrete_dissipation(op: DiscreteOperator, t, f, j="quadratic") -> float:
    """Exact dissipation of ``J`` along the semi-discrete flow of ``op``.

    Uses every off-diagonal entry of the matrix, transport included, so the
    difference with ``gre_dissipation`` is the numerical diffusion of the scheme.
    """
    j = _as_j(j)
    M = op.matrix.tocoo()
    off = M.row != M.col
    r, c, v = M.row[off], M.col[off], M.data[off]
    w = op.grid.quad_weights
    live = _live(t)
    keep = live[r] & live[c]
    r, c, v = r[keep], c[keep], v[keep]
    vals = w[r] * t.phi[r] * v * t.f_inf[c]
    u = np.zeros(op.N)
    u[live] = np.asarray(f, dtype=float)[live] / t.f_inf[live]
    return _accel.bregman_coo(r.astype(np.int32), c.astype(np.int32), vals, u, j.code)


@dataclass(frozen=True)
class GreReport:
    residual: float
    J: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    max_increase: float

    @property
    def relative(self) -> float:
        return self.residual / self.J[0] if self.J[0] > 0.0 else self.residual


def check_gre_identity(traj: Trajectory, t, m: FragmentationModel, g: Grid,
                       j="quadratic") -> GreReport:
    """Residual of ``J(f(t)) + int_0^t D_J - J(f(0))`` along a rescaled trajectory.

    Uses recorded ``J`` and ``D_J`` series when present, the states otherwise.
    The time integral is the trapezoid rule on the trajectory's own steps.
    """
    if "J" in traj.recorded and "D_J" in traj.recorded:
        J, D = np.asarray(traj.recorded["J"]), np.asarray(traj.recorded["D_J"])
    else:
        if traj.states is None:
            raise ValueError("trajectory carries neither states nor J/D_J series")
        kern = DissipationKernel(t, m, g)
        J = np.array([gre_functional(f, t, g, j) for f in traj.states])
        D = np.array([kern(f, j) for f in traj.states])
    dt = np.diff(traj.times)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (D[1:] + D[:-1]))])
    resid = J + integral - J[0]
    inc = float(np.max(np.diff(J))) if J.size > 1 else 0.0
    return GreReport(residual=float(np.max(np.abs(resid))), J=J, D=D, times=traj.times,
                     max_increase=inc)


def gre_recorders(t, m: FragmentationModel, g: Grid, j="quadratic") -> dict:
    """Recorder functionals ``J`` and ``D_J`` for ``evolve``."""
    kern = DissipationKernel(t, m, g)
    return {"J": lambda f: gre_functional(f, t, g, j), "D_J": lambda f: kern(f, j)}
