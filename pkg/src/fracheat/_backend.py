"""Select the compiled pair kernel when available, else the NumPy fallback."""
from __future__ import annotations

import os

import numpy as np

from . import _pairs_py

BACKEND = "python"
_compiled = None

if not os.environ.get("FRACHEAT_PURE_PYTHON"):
    try:
        from . import _pairs as _compiled  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _compiled = None


def far_pairs(A, nodes, elements, pair_k, pair_l, mult, xi, wi, power, backend=None):
    use = backend or BACKEND
    if use == "cython":
        if _compiled is None:
            raise RuntimeError("compiled pair kernel is not built")
        return _compiled.far_pairs(
            A, np.ascontiguousarray(nodes, dtype=np.float64),
            np.ascontiguousarray(elements, dtype=np.int64),
            np.ascontiguousarray(pair_k, dtype=np.int64),
            np.ascontiguousarray(pair_l, dtype=np.int64),
            np.ascontiguousarray(mult, dtype=np.float64),
            np.ascontiguousarray(xi, dtype=np.float64),
            np.ascontiguousarray(wi, dtype=np.float64), float(power))
    return _pairs_py.far_pairs(A, nodes, elements, np.asarray(pair_k), np.asarray(pair_l),
                               np.asarray(mult, dtype=float), xi, wi, power)


def compiled_available() -> bool:
    return _compiled is not None
