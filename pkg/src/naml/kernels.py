"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the NumPy
fallback is used. Set ``NAML_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("NAML_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def use_backend(name):
    """Switch backend at runtime ("cython" or "python"); returns the previous name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels as compiled

        _impl = compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    return previous


def unfold_same(x, half):
    """[B, L, D] -> [B, L, (2*half+1)*D] zero-padded sliding windows."""
    x = np.ascontiguousarray(x)
    B, L, D = x.shape
    out = np.empty((B, L, (2 * half + 1) * D), dtype=x.dtype)
    _impl.unfold_same(x, half, out)
    return out


def fold_same(g, half, D):
    """Adjoint of :func:`unfold_same`: sums window gradients back onto positions."""
    g = np.ascontiguousarray(g)
    B, L, _ = g.shape
    out = np.zeros((B, L, D), dtype=g.dtype)
    _impl.fold_same(g, half, out)
    return out


def scatter_add_rows(table, ids, rows):
    """In-place ``table[ids[n]] += rows[n]`` with repeated ids accumulating."""
    ids = np.ascontiguousarray(ids, dtype=np.int64).reshape(-1)
    rows = np.ascontiguousarray(rows, dtype=table.dtype).reshape(len(ids), table.shape[1])
    _impl.scatter_add_rows(table, ids, rows)
