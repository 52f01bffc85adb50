"""Dense-matrix bench for the semigroup statements.

Everything here works on small dense matrices (n <= 256): exponentials by
scaling and squaring, resolvents, contour-integral spectral projectors, decay
constants, the finite Duhamel expansion and the Laplace representation of the
resolvent.  The dense eigendecomposition is kept as an independent oracle.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

N_MAX = 256

# Pade coefficients and the 1-norm bounds below which each degree is accurate
# to double precision (Higham, SIAM J. Matrix Anal. Appl. 26, 2005).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}


class ContourError(ValueError):
    """The integration contour passes through (or too near) the spectrum."""


class QuadratureError(RuntimeError):
    """A time quadrature missed its tolerance; more nodes are needed."""


def _square(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    if M.shape[0] > N_MAX:
        raise ValueError(f"dense bench is limited to n <= {N_MAX}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _pade_pair(A, b, powers):
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    if len(b) == 14:
        A2, A4, A6 = powers[2], powers[4], powers[6]
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
        V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
        return U, V
    m = len(b) - 1
    U = b[1] * I
    V = b[0] * I
    for k in range(2, m + 1, 2):
        U = U + b[k + 1] * powers[k]
        V = V + b[k] * powers[k]
    return A @ U, V


def matrix_exponential(M, t: float = 1.0) -> np.ndarray:
    """``exp(t M)`` by Pade scaling and squaring."""
    A = t * _square(M)
    A = A.astype(np.result_type(A.dtype, float))
    n = A.shape[0]
    if n == 0:
        return A.copy()
    norm = np.linalg.norm(A, 1)
    powers = {2: A @ A}
    powers[4] = powers[2] @ powers[2]
    powers[6] = powers[4] @ powers[2]
    powers[8] = powers[4] @ powers[4]
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            U, V = _pade_pair(A, _PADE[m], powers)
            return sla.solve(V - U, V + U)
    s = max(0, int(np.ceil(np.log2(norm / _THETA[13])))) if norm > 0 else 0
    if s > 1000:
        raise OverflowError(f"||tM||_1 = {norm:.3e} too large")
    A = A / 2.0 ** s
    powers = {2: A @ A}
    powers[4] = powers[2] @ powers[2]
    powers[6] = powers[4] @ powers[2]
    U, V = _pade_pair(A, _PADE[13], powers)
    E = sla.solve(V - U, V + U)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            E = E @ E
    if not np.all(np.isfinite(E)):
        raise OverflowError("matrix exponential overflowed")
    return E


def resolvent(M, z: complex, cond_max: float = 1e12) -> np.ndarray:
    """``(M - z)^{-1}``; raises ``ContourError`` when ``z`` is (nearly) an eigenvalue."""
    M = _square(M)
    n = M.shape[0]
    S = M - z * np.eye(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is checked below
        lu, piv = sla.lu_factor(S, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise ContourError(f"z={z} is an eigenvalue")
    X = sla.lu_solve((lu, piv), np.eye(n, dtype=S.dtype))
    cond = np.linalg.norm(S, 1) * np.linalg.norm(X, 1)
    if not np.isfinite(cond) or cond > cond_max:
        raise ContourError(f"z={z} lies within the spectrum's reach (cond={cond:.2e})")
    resid = np.linalg.norm(S @ X - np.eye(n), 1)
    if resid > 1e-10 * max(1.0, np.linalg.norm(X, 1)):
        raise ContourError(f"resolvent residual {resid:.2e} at z={z}")
    return X


def _maybe_real(P, M, center) -> np.ndarray:
    if np.isrealobj(M) and np.imag(center) == 0.0:
        return P.real.copy()
    return P


def dunford_projector(M, center: complex, radius: float, nodes: int = 64,
                      tol: float = 1e-8, max_nodes: int = 4096) -> np.ndarray:
    """Spectral projector onto the eigenvalues inside ``|z - center| = radius``.

    The contour integral is the trapezoid rule on ``nodes`` equispaced points;
    the node count doubles (reusing earlier resolvents) until successive
    estimates agree and the result is idempotent to ``tol``.
    """
    M = _square(M)
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if nodes < 4:
        raise ValueError("need at least 4 contour nodes")
    eig = np.linalg.eigvals(M)
    gap = np.min(np.abs(np.abs(eig - center) - radius)) if eig.size else np.inf
    if gap < 1e-6:
        raise ContourError(f"an eigenvalue lies {gap:.1e} from the contour")

    def block(theta):
        acc = np.zeros(M.shape, dtype=complex)
        for th in theta:
            e = np.exp(1j * th)
            acc += e * resolvent(M, center + radius * e)
        return acc

    n = nodes
    acc = block(2.0 * np.pi * np.arange(n) / n)
    P = -radius / n * acc
    while True:
        if 2 * n > max_nodes:
            break
        acc = acc + block(2.0 * np.pi * (np.arange(n) + 0.5) / n)
        n *= 2
        P_new = -radius / n * acc
        change = np.linalg.norm(P_new - P)
        P = P_new
        if change <= 1e-2 * tol * max(1.0, np.linalg.norm(P)):
            break
    if np.linalg.norm(P @ P - P) > tol * max(1.0, np.linalg.norm(P)):
        raise ContourError(f"projector not idempotent after {n} nodes")
    return _maybe_real(P, M, center)


def eigen_projector(M, center: complex, radius: float) -> np.ndarray:
    """Oracle for ``dunford_projector`` from the dense eigendecomposition.

    Assumes ``M`` is diagonalisable.
    """
    M = _square(M)
    w, V = np.linalg.eig(M)
    inside = np.abs(w - center) < radius
    P = V[:, inside] @ np.linalg.inv(V)[inside, :]
    return _maybe_real(P, M, center)


def separated_random_matrix(n: int, seed: int, inner: int = 3) -> np.ndarray:
    """Real ``n x n`` matrix with ``inner`` eigenvalues in ``|z| < 0.3`` and the rest in ``2 <= |z| <= 5``.

    The unit circle then separates the two groups by a wide margin.
    """
    rng = np.random.default_rng(seed)
    outer = rng.choice([-1.0, 1.0], n - inner) * rng.uniform(2.0, 5.0, n - inner)
    D = np.diag(np.concatenate([rng.uniform(-0.3, 0.3, inner), outer]))
    V = rng.standard_normal((n, n))
    return V @ D @ np.linalg.inv(V)


def decay_bound_check(M, P, a: float, t_samples) -> float:
    """``max_t ||exp(tM)(I - P)||_2 exp(-a t)`` over ``t_samples``."""
    M = _square(M)
    Q = np.eye(M.shape[0]) - np.asarray(P)
    C = 0.0
    for t in t_samples:
        v = np.linalg.norm(matrix_exponential(M, float(t)) @ Q, 2) * np.exp(-a * float(t))
        if not np.isfinite(v):
            return np.inf
        C = max(C, float(v))
    return C


@dataclass(frozen=True)
class DenseOperatorPair:
    """A generator split as ``A + B`` on a small dense space."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A, B = _square(self.A), _square(self.B)
        if A.shape != B.shape:
            raise ValueError("A and B have different shapes")
        object.__setattr__(self, "A", np.array(A, dtype=float))
        object.__setattr__(self, "B", np.array(B, dtype=float))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def generator(self) -> np.ndarray:
        return self.A + self.B

    @classmethod
    def random(cls, n: int, seed: int, norm: float = 2.0) -> "DenseOperatorPair":
        rng = np.random.default_rng(seed)
        A, B = rng.standard_normal((2, n, n))
        return cls(norm * A / np.linalg.norm(A, 2), norm * B / np.linalg.norm(B, 2))


def factorization_residuals(pair: DenseOperatorPair, z: complex) -> tuple[float, float]:
    """Residuals of ``R = R_B - R_B A R`` and ``R = R_B - R A R_B`` at ``z``."""
    R = resolvent(pair.generator, z)
    RB = resolvent(pair.B, z)
    left = np.linalg.norm(R - (RB - RB @ pair.A @ R))
    right = np.linalg.norm(R - (RB - R @ pair.A @ RB))
    scale = max(1.0, np.linalg.norm(R))
    return float(left / scale), float(right / scale)


def _trapezoid_weights(q: int, h: float) -> np.ndarray:
    w = np.full(q + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _convolve(U, V, h: float) -> np.ndarray:
    """``(U * V)(t_k) = int_0^{t_k} U(t_k - s) V(s) ds`` at every node, trapezoid rule."""
    out = np.zeros_like(U)
    for k in range(1, U.shape[0]):
        w = _trapezoid_weights(k, h)
        out[k] = np.einsum("i,iab,ibc->ac", w, U[k::-1], V[: k + 1])
    return out


def _semigroup_nodes(M, t: float, q: int) -> np.ndarray:
    step = matrix_exponential(M, t / q)
    out = np.empty((q + 1,) + M.shape)
    out[0] = np.eye(M.shape[0])
    for k in range(1, q + 1):
        out[k] = out[k - 1] @ step
    return out


def _duhamel_terms(pair: DenseOperatorPair, t: float, n: int, q: int):
    h = t / q
    SB = _semigroup_nodes(pair.B, t, q)
    ASB = np.einsum("ab,kbc->kac", pair.A, SB)
    terms = [SB]
    for _ in range(1, n):
        terms.append(_convolve(terms[-1], ASB, h))
    # (A S_B)^{*n} and the remainder S_Lambda * (A S_B)^{*n}
    W = ASB
    for _ in range(1, n):
        W = _convolve(W, ASB, h)
    rem = _convolve(_semigroup_nodes(pair.generator, t, q), W, h)
    return sum(T[-1] for T in terms), rem[-1]


@dataclass(frozen=True)
class DuhamelResult:
    partial: np.ndarray
    remainder: np.ndarray
    direct_remainder: np.ndarray
    error: float


def duhamel_partial_sum(pair: DenseOperatorPair, t: float, n: int, quad_nodes: int = 256,
                        tol: float = 1e-6) -> DuhamelResult:
    """First ``n`` terms of the iterated Duhamel expansion of ``exp(t(A + B))``.

    Convolutions use nested trapezoid rules on ``quad_nodes`` uniform steps,
    Richardson-extrapolated against half as many.  The remainder is
    ``exp(t(A + B)) - partial``; it is cross-checked against a direct
    quadrature of its convolution form and ``QuadratureError`` is raised when
    the two differ by more than ``tol``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if quad_nodes < 64 or quad_nodes % 2:
        raise ValueError("quad_nodes must be an even number >= 64")
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    fine = _duhamel_terms(pair, t, n, quad_nodes)
    coarse = _duhamel_terms(pair, t, n, quad_nodes // 2)
    partial, direct = ((4.0 * f - c) / 3.0 for f, c in zip(fine, coarse))
    full = matrix_exponential(pair.generator, t)
    remainder = full - partial
    err = float(np.max(np.abs(remainder - direct)))
    if err > tol:
        raise QuadratureError(f"Duhamel reconstruction error {err:.2e} > {tol:.0e}; "
                              "increase quad_nodes")
    return DuhamelResult(partial=partial, remainder=remainder, direct_remainder=direct, error=err)


@dataclass(frozen=True)
class WeylReport:
    eigs: list
    count: int
    max_modulus: float
    all_discrete: bool


def weyl_discrete_check(pair: DenseOperatorPair, a: float) -> WeylReport:
    """Eigenvalues of ``A + B`` to the right of ``Re z = a``, by decreasing real part."""
    w = np.linalg.eigvals(pair.generator)
    sel = sorted((complex(z) for z in w if z.real > a), key=lambda z: (-z.real, z.imag))
    return WeylReport(eigs=sel, count=len(sel),
                      max_modulus=max((abs(z) for z in sel), default=0.0), all_discrete=True)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def hille_laplace(M, xi: complex, T: float | None = None, panel: float = 0.25) -> np.ndarray:
    """``int_0^T exp(tM) exp(-xi t) dt``, which tends to ``-(M - xi)^{-1}``.

    Composite 12-point Gauss-Legendre on panels of width ``panel``.  The default
    horizon makes ``exp((s - Re xi) T)`` negligible, ``s`` the spectral abscissa.
    """
    M = _square(M)
    s = float(np.max(np.linalg.eigvals(M).real))
    margin = np.real(xi) - s
    if margin <= 0.0:
        raise ValueError("Re xi must exceed the spectral abscissa")
    if T is None:
        T = 40.0 / margin
    panels = max(1, int(np.ceil(T / panel)))
    h = T / panels
    tau = 0.5 * h * (_GL_X + 1.0)
    inner = [matrix_exponential(M, float(u)) for u in tau]
    step = matrix_exponential(M, h)
    E = np.eye(M.shape[0])
    out = np.zeros(M.shape, dtype=complex)
    for p in range(panels):
        t0 = p * h
        for u, wt, Eu in zip(tau, _GL_W, inner):
            out += 0.5 * h * wt * np.exp(-xi * (t0 + u)) * (E @ Eu)
        E = E @ step
    return out
