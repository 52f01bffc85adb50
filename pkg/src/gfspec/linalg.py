"""Factorised solves for the shifted systems used by inverse iteration and implicit stepping."""
from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolveError(RuntimeError):
    """A linear system could not be factorised."""


def factorize(M):
    """Return ``solve(b)`` for the square matrix ``M``.

    Dense LAPACK LU is used for small or dense matrices (the smooth gain block
    fills the upper triangle), SuperLU otherwise.
    """
    n = M.shape[0]
    dense = not sp.issparse(M) or n <= 400 or M.nnz > 0.1 * n * n
    try:
        if dense:
            A = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
            lu = la.lu_factor(A, check_finite=True)
            if np.any(np.diag(lu[0]) == 0.0):
                raise SolveError("exactly singular matrix")
            return lambda b: la.lu_solve(lu, b)
        # minimum degree on A + A^T keeps the dense birth row from filling in
        lu = spla.splu(sp.csc_matrix(M), permc_spec="MMD_AT_PLUS_A")
        return lu.solve
    except (RuntimeError, ValueError, la.LinAlgError) as exc:
        if isinstance(exc, SolveError):
            raise
        raise SolveError(str(exc)) from exc
