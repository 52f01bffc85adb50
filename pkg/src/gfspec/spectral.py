"""Principal eigentriple, rank-one spectral projector and measured spectral gap."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import Grid, WeightSpec, pairing, weighted_norm
from .kernels import offspring_count
from .linalg import SolveError, factorize
from .operators import DiscreteOperator, adjoint_matrix, default_alpha

NEG_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """An iterative solver did not meet its tolerance, or lost positivity."""


@dataclass(frozen=True)
class Eigentriple:
    lam: float
    f_inf: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    norm_spec: WeightSpec
    residuals: tuple
    grid: Grid = field(repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# lambda={self.lam:.17g} primal_residual={self.residuals[0]:.17g} "
                     f"dual_residual={self.residuals[1]:.17g}\n")
            fh.write("x,f_inf,phi\n")
            for x, f, p in zip(self.grid.nodes, self.f_inf, self.phi):
                fh.write(f"{x:.17g},{f:.17g},{p:.17g}\n")


def read_eigentriple_csv(path):
    """Return ``(header, x, f_inf, phi)`` from a file written by ``Eigentriple.to_csv``."""
    with open(path) as fh:
        header = fh.readline().lstrip("# ").split()
    meta = {k: float(v) for k, v in (item.split("=") for item in header)}
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    return meta, data[:, 0], data[:, 1], data[:, 2]


def default_norm(op: DiscreteOperator) -> WeightSpec:
    """Normalisation space: ``L^1_alpha`` for cell division, ``x^a + x^b`` for self-similar."""
    m = op.model
    if m is None:
        return WeightSpec.custom(np.ones(op.N))
    if m.is_cell_division:
        return WeightSpec.bracket(default_alpha(m))
    if m.kind == "self_similar":
        return WeightSpec.pair(0.5, 2.0)
    return WeightSpec.bracket(0.0)


def initial_shift(op: DiscreteOperator) -> float:
    m = op.model
    if m is None:
        return float(np.max(op.matrix.diagonal()))
    if m.is_cell_division:
        x_typ = max(1.0, m.rate.x1)
        return (offspring_count(m.offspring) - 1.0) * float(m.rate(np.array([x_typ]))[0])
    if m.kind == "self_similar":
        return 0.0
    from .renewal import euler_lotka_root
    return euler_lotka_root(m.rate)


def metzler_bound(op: DiscreteOperator) -> float:
    """Upper bound on the spectral abscissa from weighted column sums."""
    w = op.grid.quad_weights
    return float(np.max((w @ op.matrix) / w))


def _residual(M, v, lam, w) -> float:
    r = M @ v - lam * v
    return float(np.sum(w * np.abs(r)) / np.sum(w * np.abs(v)))


def _inverse_iteration(M, v, sigma, w, tol, max_iter, refine=True):
    """Inverse iteration at a fixed shift, then Rayleigh-shift refinement."""
    n = M.shape[0]
    eye = sp.identity(n, format="csr")
    solve = factorize(M - sigma * eye)
    lam, res = sigma, np.inf
    for it in range(max_iter):
        v = solve(v)
        v /= np.max(np.abs(v))
        Mv = M @ v
        lam = float(v @ Mv / (v @ v))
        res = _residual(M, v, lam, w)
        if res <= tol or (refine and res <= 1e-4):
            break
    if refine:
        best = (res, lam, v)
        stalls = 0
        for _ in range(max_iter):
            if res <= tol or stalls >= 3:
                break
            # an exact Rayleigh shift would be singular; nudge off it
            try:
                solve = factorize(M - (lam + 1e-12 * max(1.0, abs(lam))) * eye)
            except SolveError:
                break
            v = solve(v)
            v /= np.max(np.abs(v))
            lam = float(v @ (M @ v) / (v @ v))
            res = _residual(M, v, lam, w)
            if res < best[0]:
                best, stalls = (res, lam, v), 0
            else:
                stalls += 1
        res, lam, v = best
    return lam, v, res


def _orient_and_check(v, what: str):
    if np.sum(v) < 0:
        v = -v
    scale = np.max(np.abs(v))
    v = v / scale
    if np.min(v) < -NEG_TOL:
        raise ConvergenceError(f"{what} has negative components down to {np.min(v):.3e}")
    return np.where(v < 0.0, 0.0, v)


def principal_eigenpair(op: DiscreteOperator, tol: float = 1e-10, max_iter: int = 200,
                        shift: float | None = None, norm_spec: WeightSpec | None = None):
    """Dominant eigenvalue ``lambda`` and nonnegative profile ``f_inf``.

    Starts from the constant vector and never clips iterates: positivity has to
    emerge.  If the model-informed shift locks onto the wrong eigenvalue the
    solve is restarted from a shift above the Metzler bound, where the shifted
    resolvent is a positive matrix and inverse iteration converges to the
    Perron vector.
    """
    M = op.matrix
    w = op.grid.quad_weights
    X = norm_spec or default_norm(op)
    sigma0 = initial_shift(op) if shift is None else shift
    shifts = [sigma0 + 0.1 * max(1.0, abs(sigma0))]
    bound = metzler_bound(op)
    shifts.append(max(bound, shifts[0]) + 0.1 * max(1.0, abs(bound)))
    last = None
    for sigma in shifts:
        try:
            lam, v, res = _inverse_iteration(M, np.ones(op.N), sigma, w, tol, max_iter)
        except SolveError as exc:
            last = ConvergenceError(f"shift {sigma} hit the spectrum: {exc}")
            continue
        if res > tol:
            last = ConvergenceError(f"eigen-residual {res:.3e} above tol {tol:.1e} "
                                    f"after {max_iter} iterations")
            continue
        try:
            v = _orient_and_check(v, "principal eigenvector")
        except ConvergenceError as exc:
            last = exc
            continue
        v = v / weighted_norm(v, op.grid, X)
        return lam, v
    raise last


def dual_eigenfunction(op: DiscreteOperator, lam: float, f_inf, tol: float = 1e-10,
                       max_iter: int = 200) -> np.ndarray:
    """Positive eigenvector of the quadrature adjoint, scaled so ``<phi, f_inf> = 1``."""
    Ms = adjoint_matrix(op)
    w = op.grid.quad_weights
    sigma = lam + 1e-6 * max(1.0, abs(lam))
    _, v, res = _inverse_iteration(Ms, np.ones(op.N), sigma, w, tol, max_iter, refine=False)
    if res > tol:
        lam2, v, res = _inverse_iteration(Ms, v, sigma, w, tol, max_iter)
    if res > tol:
        raise ConvergenceError(f"dual eigen-residual {res:.3e} above tol {tol:.1e}")
    v = _orient_and_check(v, "dual eigenvector")
    return v / pairing(v, f_inf, op.grid)


def eigentriple(op: DiscreteOperator, tol: float = 1e-10, max_iter: int = 200,
                shift: float | None = None, norm_spec: WeightSpec | None = None) -> Eigentriple:
    X = norm_spec or default_norm(op)
    lam, f = principal_eigenpair(op, tol, max_iter, shift, X)
    phi = dual_eigenfunction(op, lam, f, tol, max_iter)
    w = op.grid.quad_weights
    r1 = _residual(op.matrix, f, lam, w)
    r2 = _residual(adjoint_matrix(op), phi, lam, w)
    return Eigentriple(lam=lam, f_inf=f, phi=phi, norm_spec=X, residuals=(r1, r2), grid=op.grid)


class Projector:
    """Rank-one projector ``f -> <phi, f> f_inf``."""

    def __init__(self, t: Eigentriple):
        self.t = t
        self._wphi = t.grid.quad_weights * t.phi

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        return (self._wphi @ f) * self.t.f_inf

    def deflate(self, f):
        return f - self(f)

    def matrix(self) -> np.ndarray:
        return np.outer(self.t.f_inf, self._wphi)


def spectral_projector(t: Eigentriple) -> Projector:
    return Projector(t)


def random_modulation(g: Grid, seed: int, scale: float | None = None, modes: int = 6) -> np.ndarray:
    """``0.5 r(x)`` for a random trigonometric polynomial ``r`` with ``|r| <= 1``.

    The same seed on two grids gives samples of the same function.
    """
    rng = np.random.default_rng(seed)
    scale = scale or g.L / 8.0
    amp = rng.uniform(-1.0, 1.0, modes) / np.arange(1, modes + 1)
    amp /= np.sum(np.abs(amp))
    phase = rng.uniform(0.0, 2.0 * np.pi, modes)
    k = np.arange(1, modes + 1)[:, None]
    return 0.5 * (amp @ np.sin(k * np.pi * g.nodes[None, :] / scale + phase[:, None]))


def random_profile(g: Grid, seed: int, scale: float | None = None, modes: int = 6) -> np.ndarray:
    """Smooth positive random profile, independent of the resolution.

    An exponential envelope of length ``scale`` times ``1 + random_modulation``.
    """
    scale = scale or g.L / 8.0
    return np.exp(-g.nodes / scale) * (1.0 + random_modulation(g, seed, scale, modes))


@dataclass(frozen=True)
class GapEstimate:
    a_ss: float
    lam: float
    slopes: tuple
    raw_slopes: tuple
    T: float
    dt: float

    @property
    def gap(self) -> float:
        return self.lam - self.a_ss


def deflated_log_norms(op: DiscreteOperator, t: Eigentriple, f0, T: float, dt: float,
                       X: WeightSpec | None = None):
    """``log ||g_n||_X`` for the deflated, lambda-rescaled implicit Euler flow.

    The state is renormalised every step and the logarithms accumulated, so
    long horizons cannot underflow.
    """
    from .evolution import Stepper
    X = X or t.norm_spec
    P = Projector(t)
    stepper = Stepper(op, dt, "implicit_euler", shift=t.lam)
    n = int(round(T / dt))
    g = P.deflate(np.asarray(f0, dtype=float))
    nrm = weighted_norm(g, t.grid, X)
    if not nrm > 0.0:
        raise ConvergenceError("initial datum has no component off the principal mode")
    g = g / nrm
    logs = np.empty(n + 1)
    logs[0] = np.log(nrm)
    for k in range(1, n + 1):
        g = P.deflate(stepper(g))
        nrm = weighted_norm(g, t.grid, X)
        if not (nrm > 0.0 and np.isfinite(nrm)):
            raise ConvergenceError("deflated norm underflowed")
        g = g / nrm
        logs[k] = logs[k - 1] + np.log(nrm)
    return stepper.dt * np.arange(n + 1), logs


def fit_log_slope(times, logs, window) -> float:
    t1, t2 = window
    sel = (times >= t1 - 1e-12) & (times <= t2 + 1e-12)
    if np.count_nonzero(sel) < 4:
        raise ValueError("fewer than 4 samples in the fit window")
    return float(np.polyfit(times[sel], logs[sel], 1)[0])


def implicit_euler_rate(slope: float, dt: float, lam: float) -> float:
    """Generator abscissa whose implicit Euler factor on ``Lambda - lam`` decays at ``slope``.

    Inverts ``exp(slope dt) = 1 / (1 - dt (mu - lam))`` for real ``mu``; as
    ``dt -> 0`` this is ``lam + slope``.
    """
    return lam + (1.0 - np.exp(-slope * dt)) / dt


def spectral_gap_estimate(op: DiscreteOperator, t: Eigentriple, T: float, dt: float,
                          seeds=(0, 1, 2), X: WeightSpec | None = None) -> GapEstimate:
    """Largest late-time decay abscissa of ``f(t) - e^{lambda t} Pi f0`` over seeds."""
    for attempt in range(2):
        try:
            raw = []
            for s in seeds:
                f0 = random_profile(t.grid, s)
                times, logs = deflated_log_norms(op, t, f0, T, dt, X)
                raw.append(fit_log_slope(times, logs, (T / 2.0, T)))
            rates = tuple(float(implicit_euler_rate(r, dt, t.lam)) for r in raw)
            return GapEstimate(a_ss=max(rates), lam=t.lam, slopes=rates, raw_slopes=tuple(raw),
                               T=T, dt=dt)
        except ConvergenceError:
            if attempt:
                raise
            T = T / 2.0
    raise AssertionError("unreachable")
