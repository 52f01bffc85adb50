"""Pure NumPy versions of the compiled kernels in ``_core.pyx``."""
from __future__ import annotations

import numpy as np

QUADRATIC, ABSOLUTE = 0, 1


def bregman_coo(rows, cols, vals, u, jcode: int) -> float:
    """``sum_k vals_k * Bregman_j(u[cols_k] | u[rows_k])``.

    ``rows`` index the base point (daughter), ``cols`` the evaluation point
    (mother).  ``jcode`` selects ``j(s) = (s-1)^2`` or ``j(s) = |s-1|``.
    """
    ud = u[rows]
    um = u[cols]
    if jcode == QUADRATIC:
        b = (um - ud) ** 2
    elif jcode == ABSOLUTE:
        b = np.abs(um - 1.0) - np.abs(ud - 1.0) - np.sign(ud - 1.0) * (um - ud)
    else:
        raise ValueError(f"unknown j code {jcode}")
    return float(np.dot(vals, b))


def sign_pairing(BF, F, wphi, a: float):
    """Per-column ``sum w phi sign(f) (Bf) - a sum w phi |f|`` and ``sum w phi |f|``."""
    norm = wphi @ np.abs(F)
    return wphi @ (np.sign(F) * BF) - a * norm, norm
