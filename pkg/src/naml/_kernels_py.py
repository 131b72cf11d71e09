"""NumPy implementations of the compiled kernels, used when the extension is absent."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def unfold_same(x, half, out):
    B, L, D = x.shape
    padded = np.zeros((B, L + 2 * half, D), dtype=x.dtype)
    padded[:, half:half + L] = x
    # windows: [B, L, D, W] -> [B, L, W, D]
    windows = sliding_window_view(padded, 2 * half + 1, axis=1)
    out[...] = windows.transpose(0, 1, 3, 2).reshape(B, L, -1)


def fold_same(g, half, out):
    B, L, D = out.shape
    W = 2 * half + 1
    g = g.reshape(B, L, W, D)
    for w in range(W):
        shift = w - half
        if abs(shift) >= L:
            continue
        if shift >= 0:
            out[:, shift:] += g[:, : L - shift, w]
        else:
            out[:, : L + shift] += g[:, -shift:, w]


def scatter_add_rows(table, ids, rows):
    np.add.at(table, ids, rows)
