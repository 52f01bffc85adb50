"""Discrete generators, their splittings and the hypodissipativity machinery.

Transport is discretised in flux form on the node grid: node ``i`` owns a cell of
width ``w_i`` (the trapezoid weight) and the upwind flux through its right face
is ``tau(x_i) f_i``.  With this choice every conservation law of the
continuous model that is expressed by a pairing against 1 telescopes exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid

from . import _accel
from .grid import Grid
from .kernels import FragmentationModel, critical_exponent, offspring_moment


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse generator (or one part of a splitting) acting on node values.

    ``parts`` keeps the named building blocks (``transport``, ``loss``, ``gain``)
    so that a splitting can cut the gain without re-assembling the rest.
    """

    matrix: sp.csr_matrix = field(repr=False)
    grid: Grid
    kind: str
    boundary: str = ""
    model: FragmentationModel | None = field(default=None, repr=False)
    params: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.grid.N

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _csr(M) -> sp.csr_matrix:
    M = sp.csr_matrix(M)
    M.sum_duplicates()
    M.sort_indices()
    return M


def upwind_transport(g: Grid, tau, outflow: bool = True) -> sp.csr_matrix:
    """Flux-form donor-cell discretisation of ``-d/dx (tau f)`` with zero inflow.

    Node ``i`` owns a cell of width ``w_i``; the flux through its right face is
    ``tau(x_i) f_i``, so row ``i`` reads ``(tau_{i-1} f_{i-1} - tau_i f_i) / w_i``.
    The last face is open when ``outflow`` is set and closed otherwise.
    ``tau`` is a callable evaluated at the nodes.
    """
    N, w = g.N, g.quad_weights
    flux = np.asarray(tau(g.nodes), dtype=float) * np.ones(N)
    out = flux.copy()
    if not outflow:
        out[-1] = 0.0
    rows = np.concatenate([np.arange(N), np.arange(1, N)])
    cols = np.concatenate([np.arange(N), np.arange(N - 1)])
    vals = np.concatenate([-out / w, flux[:-1] / w[1:]])
    return _csr(sp.coo_matrix((vals, (rows, cols)), shape=(N, N)))


def mitosis_gain(K: np.ndarray, g: Grid) -> sp.csr_matrix:
    if not g.is_dyadic():
        raise ValueError("mitosis needs a dyadic grid (x_{2i} == 2 x_i)")
    i = np.arange((g.N - 1) // 2 + 1)
    return _csr(sp.coo_matrix((4.0 * K[2 * i], (i, 2 * i)), shape=(g.N, g.N)))


def smooth_gain(K: np.ndarray, p, g: Grid) -> np.ndarray:
    """Dense gain block ``G[i, j] = omega_ij K(x_j) p(x_i / x_j) / x_j`` for ``j >= i``.

    ``omega_ij`` is the trapezoid rule on ``[x_i, L]``; the mother node ``y = 0``
    is skipped since the kernel is singular there and carries no mass.
    """
    x, dx, N = g.nodes, g.dx, g.N
    I, J = np.triu_indices(N)
    keep = J > 0
    I, J = I[keep], J[keep]
    omega = np.full(I.shape, dx)
    omega[(J == I) | (J == N - 1)] = 0.5 * dx
    omega[I == N - 1] = 0.0
    vals = omega * K[J] * p(x[I] / x[J]) / x[J]
    vals[~np.isfinite(vals)] = 0.0  # singular densities at z = 0
    G = np.zeros((N, N))
    G[I, J] = vals
    return G


def assemble_cell_division(m: FragmentationModel, g: Grid) -> DiscreteOperator:
    if not m.is_cell_division:
        raise ValueError(f"cell-division assembly got a {m.kind} model")
    K = m.rate(g.nodes)
    T = upwind_transport(g, m.tau)
    gain = mitosis_gain(K, g) if m.kind == "mitosis" else _csr(smooth_gain(K, m.offspring, g))
    loss = sp.diags(K, format="csr")
    return DiscreteOperator(
        matrix=_csr(T - loss + gain), grid=g, kind=m.kind,
        boundary="inflow_zero/outflow", model=m,
        parts={"transport": T, "loss": loss, "gain": gain},
    )


def assemble_self_similar(m: FragmentationModel, g: Grid) -> DiscreteOperator:
    """Self-similar generator ``F f - d/dx(x f) - f`` on a closed box.

    The loss diagonal is the quadrature-consistent version of ``x^gamma``: it is
    chosen column by column so that the first moment ``sum w x (Lambda f)``
    vanishes identically, which makes mass conservation hold to round-off.
    """
    if m.kind != "self_similar":
        raise ValueError(f"self-similar assembly got a {m.kind} model")
    if m.offspring.kind != "density":
        raise ValueError("self-similar assembly needs a smooth offspring density")
    x, w = g.nodes, g.quad_weights
    K = m.rate(x)
    T = upwind_transport(g, m.tau, outflow=False) - sp.identity(g.N, format="csr")
    G = smooth_gain(K, m.offspring, g)
    xw = x * w
    col = xw @ G + np.asarray(T.T @ xw).ravel()
    loss_vals = np.zeros(g.N)
    loss_vals[1:] = col[1:] / xw[1:]
    loss = sp.diags(loss_vals, format="csr")
    gain = _csr(G)
    return DiscreteOperator(
        matrix=_csr(T - loss + gain), grid=g, kind="self_similar",
        boundary="inflow_zero/no_flux", model=m,
        parts={"transport": _csr(T), "loss": loss, "gain": gain},
    )


def assemble_age_structured(m: FragmentationModel, g: Grid) -> DiscreteOperator:
    if m.kind != "age_structured":
        raise ValueError(f"age-structured assembly got a {m.kind} model")
    K = m.rate(g.nodes)
    w = g.quad_weights
    if not np.sum(w * K) > 1.0:
        raise ValueError("age-structured model needs ||K||_1 > 1 on the grid")
    T = upwind_transport(g, m.tau)
    loss = sp.identity(g.N, format="csr")
    # the Dirac birth term lands in the first cell, of width w_0
    birth = _csr(sp.coo_matrix((w * K / w[0], (np.zeros(g.N, int), np.arange(g.N))),
                               shape=(g.N, g.N)))
    return DiscreteOperator(
        matrix=_csr(T - loss + birth), grid=g, kind="age_structured",
        boundary="birth_inflow/outflow", model=m,
        parts={"transport": T, "loss": loss, "gain": birth},
    )


def assemble(m: FragmentationModel, g: Grid) -> DiscreteOperator:
    if m.is_cell_division:
        return assemble_cell_division(m, g)
    if m.kind == "self_similar":
        return assemble_self_similar(m, g)
    return assemble_age_structured(m, g)


def matrix_operator(M, g: Grid | None = None) -> DiscreteOperator:
    """Wrap an explicit matrix, e.g. a synthetic test generator."""
    M = _csr(M)
    if g is None:
        g = Grid(L=1.0, N=M.shape[0], nodes=np.arange(M.shape[0], dtype=float),
                 dx=1.0, quad_weights=np.ones(M.shape[0]))
    return DiscreteOperator(matrix=M, grid=g, kind="matrix", parts={"gain": _csr(M * 0)})


# splitting

def chi(x) -> np.ndarray:
    """Lipschitz cutoff: 1 on [0, 1], 2 - x on [1, 2], 0 beyond."""
    return np.clip(2.0 - np.asarray(x, dtype=float), 0.0, 1.0)


def chi_r(x, R: float) -> np.ndarray:
    return chi(np.asarray(x, dtype=float) / R)


def default_split_params(op: DiscreteOperator) -> dict:
    L = op.grid.L
    if op.kind in ("mitosis", "smooth_cell_division"):
        return {"R": L / 4.0}
    if op.kind == "self_similar":
        return {"R": L / 4.0, "delta": 0.5, "eps": 0.25}
    return {}


def split(op: DiscreteOperator, params: dict | None = None):
    """Return ``(A, B)`` with ``A`` the regular part and ``B = op - A``."""
    p = dict(default_split_params(op))
    p.update(params or {})
    x = op.grid.nodes
    gain = op.parts["gain"].tocoo()
    i, j, v = gain.row, gain.col, gain.data
    if op.kind in ("mitosis", "smooth_cell_division"):
        R = float(p["R"])
        if R <= 0.0:
            raise ValueError("R must be positive")
        a_vals = v * chi_r(x[j], R)
        p = {"R": R}
    elif op.kind == "self_similar":
        R, delta, eps = float(p["R"]), float(p["delta"]), float(p["eps"])
        if not (0.0 < eps <= delta / 2.0 <= 1.0):
            raise ValueError("need 0 < eps <= delta/2 <= 1")
        if R < 2.0:
            raise ValueError("need R >= 2")
        a_vals = v * (1.0 - chi_r(x[j], delta)) * (1.0 - chi_r(x[i], eps)) * chi_r(x[i], R)
        p = {"R": R, "delta": delta, "eps": eps}
    elif op.kind == "age_structured":
        a_vals = v
        p = {}
    else:
        raise ValueError(f"no splitting defined for kind {op.kind!r}")
    A = _csr(sp.coo_matrix((a_vals, (i, j)), shape=op.matrix.shape))
    B = _csr(op.matrix - A)
    meta = dict(grid=op.grid, model=op.model, boundary=op.boundary, params=p)
    return (DiscreteOperator(matrix=A, kind=op.kind + ":A", parts={"gain": A}, **meta),
            DiscreteOperator(matrix=B, kind=op.kind + ":B", parts={}, **meta))


# action and adjoint

def apply(op: DiscreteOperator, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (op.N,):
        raise ValueError(f"vector of shape {f.shape} for an operator on {op.N} nodes")
    return op.matrix @ f


def adjoint_matrix(op: DiscreteOperator) -> sp.csr_matrix:
    """``W^{-1} M^T W``: the adjoint for the quadrature pairing."""
    w = op.grid.quad_weights
    return _csr(sp.diags(1.0 / w) @ op.matrix.T @ sp.diags(w))


def adjoint_apply(op: DiscreteOperator, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (op.N,):
        raise ValueError(f"vector of shape {phi.shape} for an operator on {op.N} nodes")
    w = op.grid.quad_weights
    return (op.matrix.T @ (w * phi)) / w


def export_triplets(op: DiscreteOperator, path) -> None:
    M = op.matrix.tocoo()
    order = np.lexsort((M.col, M.row))
    with open(path, "w") as fh:
        for r, c, v in zip(M.row[order], M.col[order], M.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def read_triplets(path, n: int) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    return _csr(sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                              shape=(n, n)))


# hypodissipativity

def reduced_rate(m: FragmentationModel, alpha: float) -> float:
    """``K0' = K0 - p_alpha K1``; positive exactly when ``alpha`` exceeds ``alpha*``."""
    return m.rate.K0 - offspring_moment(m.offspring, alpha) * m.rate.K1


def a_star(m: FragmentationModel, alpha: float | None = None) -> float:
    """Abscissa below which the constructed weight cannot make ``B`` dissipative."""
    if m.kind == "age_structured":
        return -1.0
    if m.kind == "self_similar":
        return alpha - 1.0
    k0p = reduced_rate(m, alpha)
    gamma = m.rate.gamma
    if m.kind == "mitosis" or m.rate.at_zero == 0.0:
        return -k0p if gamma == 0.0 else -np.inf
    k_star = m.rate.lower_bound
    return -min(k0p, k_star) if gamma == 0.0 else -k_star


def default_alpha(m: FragmentationModel) -> float:
    if m.kind == "self_similar":
        return 0.5
    if m.kind == "age_structured":
        return 0.0
    return critical_exponent(m.offspring, m.rate.K0, m.rate.K1) + 1.0


def weight_threshold(m: FragmentationModel, a: float, alpha: float) -> float:
    """Junction point ``x2`` between the exponential and the polynomial branch."""
    k0p = reduced_rate(m, alpha)
    if k0p <= 0.0:
        raise ValueError(f"alpha={alpha} does not exceed the critical exponent")
    gamma, x1 = m.rate.gamma, m.rate.x1
    if gamma == 0.0:
        return max(1.0, x1, 2.0 * alpha / (a + k0p))
    x1s = max(x1, 1.0)  # the x1 = 0 case reads the bound at x = 1
    return max(1.0, x1, (3.0 * alpha / (x1s * k0p)) ** (1.0 / gamma),
               max(-3.0 * a / k0p, 0.0) ** (1.0 / gamma))


def _log_phi0(m: FragmentationModel, g: Grid, a: float) -> np.ndarray:
    # discrete analogue of exp(int_0^x K + a x): it satisfies the upwind
    # inequality phi_{j+1} <= phi_j (1 + w_j (K_j + a)) with equality
    K = m.rate(g.nodes)
    growth = 1.0 + g.quad_weights * (K + a)
    if np.any(growth[:-1] <= 0.0):
        raise ValueError("grid too coarse for this abscissa: 1 + w (K + a) <= 0")
    return np.concatenate([[0.0], np.cumsum(np.log(growth[:-1]))])


def _log_phi0_at(logphi: np.ndarray, g: Grid, x2: float) -> float:
    k = min(int(np.floor(x2 / g.dx)), g.N - 2)
    slope = (logphi[k + 1] - logphi[k]) / g.dx
    return logphi[k] + slope * (x2 - g.nodes[k])


def hypodissipativity_weight(m: FragmentationModel, a: float, alpha: float | None,
                             g: Grid, beta: float = 2.0, eta: float | None = None) -> np.ndarray:
    """Weight ``phi`` of the space in which the ``B`` part is ``a``-dissipative."""
    if alpha is None:
        alpha = default_alpha(m)
    astar = a_star(m, alpha)
    if not a > astar:
        raise ValueError(f"abscissa a={a} must exceed a*={astar}")
    x = g.nodes
    if m.kind == "age_structured":
        return np.ones(g.N)
    if m.kind == "self_similar":
        if eta is None:
            eta = pair_weight_eta(m, a, alpha, beta)
        return np.power(x, alpha) + eta * np.power(x, beta)
    x2 = weight_threshold(m, a, alpha)
    logphi = _log_phi0(m, g, a)
    phi0 = np.exp(logphi - _log_phi0_at(logphi, g, x2))
    return np.where(x <= x2, phi0, (x / x2) ** alpha)


def pair_weight_eta(m: FragmentationModel, a: float, alpha: float, beta: float) -> float:
    """Largest ``eta <= 1`` for which the high moment is absorbed by the low one.

    Requires ``eta (beta - 1 - a) x^beta <= (1 + a - alpha)/2 x^alpha
    + eta (1 - p_beta)/2 x^(beta + gamma)`` for every ``x > 0``.
    """
    gamma = m.rate.gamma
    p_beta = offspring_moment(m.offspring, beta)
    x = np.logspace(-6, 6, 20001)
    bracket = (beta - 1.0 - a) * x ** beta - 0.5 * (1.0 - p_beta) * m.rate.K0 * x ** (beta + gamma)
    worst = np.max(bracket / x ** alpha)
    if worst <= 0.0:
        return 1.0
    return min(1.0, 0.5 * (1.0 + a - alpha) / worst)


def critical_radius(m: FragmentationModel, a: float, alpha: float) -> float:
    """Threshold ``R*``: the cut-off radius must exceed it for ``B`` to be dissipative.

    ``R*`` is ``x2 / u*`` with ``u*`` the largest daughter fraction such that
    ``sup phi0 * K1 * p([0, u*]) <= -theta``.
    """
    if not m.is_cell_division:
        raise ValueError("critical radius is defined for cell division only")
    k0p = reduced_rate(m, alpha)
    x2 = weight_threshold(m, a, alpha)
    theta = -(a + k0p) / 2.0 if m.rate.gamma == 0.0 else -k0p / 3.0
    # continuous phi0 on [0, x2] peaks at one of the ends
    xs = np.linspace(0.0, x2, 2001)
    logphi = cumulative_trapezoid(m.rate(xs) + a, xs, initial=0.0)
    sup_phi0 = float(np.exp(np.max(logphi) - logphi[-1]))
    budget = -theta / (sup_phi0 * m.rate.K1)
    p = m.offspring
    if p.mass_below(1.0) <= budget:
        return 0.0
    if p.kind == "atoms":
        below = sorted(z for z, mass in p.atoms if mass > 0.0)
        u_star = next(z for z in below if p.mass_below(z) > budget)
    else:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if p.mass_below(mid) <= budget else (lo, mid)
        u_star = lo
    return x2 / u_star if u_star > 0.0 else np.inf


@dataclass(frozen=True)
class HypoReport:
    max_excess: float
    passed: bool
    tol: float
    trials: int


def check_hypodissipative(B: DiscreteOperator, phi, a: float, trials: int = 1000,
                          seed: int = 0, tol: float = 1e-6) -> HypoReport:
    """Sample ``sum w sign(f) (B f) phi - a sum w |f| phi`` over random ``f``.

    The trials cycle through signed Gaussian vectors, their absolute values and
    sparse nonnegative spikes (which probe the per-node inequality directly).
    The excess is reported relative to ``||f||_phi``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    N = B.N
    F = rng.standard_normal((N, trials))
    F[:, 1::3] = np.abs(F[:, 1::3])
    spikes = F[:, 2::3]
    spikes[:] = 0.0
    for col in range(spikes.shape[1]):
        idx = rng.choice(N, size=min(3, N), replace=False)
        spikes[idx, col] = rng.uniform(0.1, 1.0, idx.size)
    wphi = B.grid.quad_weights * np.asarray(phi, dtype=float)
    s, norm = _accel.sign_pairing(B.matrix @ F, F, wphi, a)
    ok = norm > 0.0
    excess = float(np.max(s[ok] / norm[ok])) if np.any(ok) else 0.0
    return HypoReport(max_excess=excess, passed=excess <= tol, tol=tol, trials=trials)


def with_matrix(op: DiscreteOperator, M) -> DiscreteOperator:
    return replace(op, matrix=_csr(M))
