"""Select the compiled kernels when built, the NumPy fallback otherwise.

Set ``GFSPEC_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _core_py

QUADRATIC, ABSOLUTE = _core_py.QUADRATIC, _core_py.ABSOLUTE

_compiled = None
if os.environ.get("GFSPEC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None

HAVE_COMPILED = _compiled is not None
BACKEND = "cython" if HAVE_COMPILED else "numpy"


def bregman_coo(rows, cols, vals, u, jcode: int, backend: str | None = None) -> float:
    impl = _pick(backend)
    if impl is _core_py:
        return impl.bregman_coo(rows, cols, vals, u, jcode)
    return float(impl.bregman_coo(np.asarray(rows, dtype=np.int32), np.asarray(cols, dtype=np.int32),
                                  np.ascontiguousarray(vals, dtype=float),
                                  np.ascontiguousarray(u, dtype=float), int(jcode)))


def sign_pairing(BF, F, wphi, a: float, backend: str | None = None):
    impl = _pick(backend)
    BF = np.ascontiguousarray(BF.toarray() if hasattr(BF, "toarray") else BF, dtype=float)
    return impl.sign_pairing(BF, np.ascontiguousarray(F, dtype=float),
                             np.ascontiguousarray(wphi, dtype=float), float(a))


def _pick(backend):
    if backend is None:
        return _compiled if HAVE_COMPILED else _core_py
    if backend == "numpy":
        return _core_py
    if backend == "cython":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")
