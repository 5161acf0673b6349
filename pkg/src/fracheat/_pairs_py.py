"""Pure NumPy implementation of the far-field element-pair kernel.

Same contract as the compiled ``_pairs`` module; used when the extension is not
built or when FRACHEAT_PURE_PYTHON is set.
"""
from __future__ import annotations

import numpy as np

CHUNK = 512


def far_pairs(A, nodes, elements, pair_k, pair_l, mult, xi, wi, power):
    """Accumulate mult * int_K int_L V V^T |x - y|^{-power} into dense A, in place.

    V = (N0(x), N1(x), -N0(y), -N1(y)) for the P1 shape functions of elements K, L.
    ``xi``, ``wi`` are a Gauss rule on [0, 1].  Pairs are processed in the given order
    and scattered with np.add.at, so the result is deterministic.
    """
    xi = np.asarray(xi, dtype=float)
    wi = np.asarray(wi, dtype=float)
    N = np.stack([1.0 - xi, xi], axis=1)  # (q, 2)
    NN = N[:, :, None] * N[:, None, :]    # (q, 2, 2)
    x0 = nodes[elements[:, 0]]
    h = nodes[elements[:, 1]] - x0
    for start in range(0, len(pair_k), CHUNK):
        k = pair_k[start:start + CHUNK]
        l = pair_l[start:start + CHUNK]
        m = mult[start:start + CHUNK]
        X = x0[k, None] + h[k, None] * xi[None, :]
        Y = x0[l, None] + h[l, None] * xi[None, :]
        D = np.abs(X[:, :, None] - Y[:, None, :]) ** (-power)
        D *= (wi[:, None] * wi[None, :])[None]
        D *= (h[k] * h[l] * m)[:, None, None]
        rx = D.sum(axis=2)  # (p, q) weights summed over y
        ry = D.sum(axis=1)
        Mxx = np.einsum("pi,iab->pab", rx, NN)
        Myy = np.einsum("pj,jab->pab", ry, NN)
        Mxy = np.einsum("pij,ia,jb->pab", D, N, N)
        loc = np.empty((len(k), 4, 4))
        loc[:, :2, :2] = Mxx
        loc[:, 2:, 2:] = Myy
        loc[:, :2, 2:] = -Mxy
        loc[:, 2:, :2] = -np.transpose(Mxy, (0, 2, 1))
        g = np.concatenate([elements[k], elements[l]], axis=1)  # (p, 4)
        rows = np.repeat(g, 4, axis=1)
        cols = np.tile(g, (1, 4))
        np.add.at(A, (rows.ravel(), cols.ravel()), loc.reshape(len(k), 16).ravel())
    return A
