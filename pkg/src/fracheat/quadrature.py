"""Gauss rules on intervals, including dyadically graded rules for endpoint singularities."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "gauss_legendre",
    "gauss_jacobi_left",
    "graded_rule",
    "integrate_graded",
]


@lru_cache(maxsize=None)
def _leg(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _leg(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=None)
def _jac(n: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_jacobi(n, 0.0, beta)
    return x, w


def gauss_jacobi_left(n: int, beta: float, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int_a^b (x - a)^beta p(x) dx; weights already include the power.

    Exact for polynomial p of degree < 2n.
    """
    x, w = _jac(n, float(beta))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), w * half ** (1.0 + beta)


def graded_rule(
    a: float,
    b: float,
    *,
    left: bool = False,
    right: bool = False,
    npts: int = 16,
    depth: int = 12,
    singular_power: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [a, b] with dyadic panels shrinking toward flagged endpoints.

    When ``singular_power`` is given, the innermost panel at each graded end uses a
    Gauss-Jacobi rule for that power instead of plain Gauss.
    """
    if b <= a:
        return np.empty(0), np.empty(0)
    if left and right:
        m = 0.5 * (a + b)
        x1, w1 = graded_rule(a, m, left=True, npts=npts, depth=depth, singular_power=singular_power)
        x2, w2 = graded_rule(m, b, right=True, npts=npts, depth=depth, singular_power=singular_power)
        return np.concatenate([x1, x2]), np.concatenate([w1, w2])
    if not (left or right):
        return gauss_legendre(npts, a, b)

    L = b - a
    # breakpoints measured from the graded endpoint
    cuts = [L * 0.5**k for k in range(depth, -1, -1)]
    xs, ws = [], []
    inner = cuts[0]
    if singular_power is not None:
        xj, wj = gauss_jacobi_left(npts, singular_power, 0.0, inner)
        # wj carries d^p; divide it back out so the caller's integrand stays whole
        with np.errstate(divide="ignore"):
            wj = wj / xj**singular_power
        xs.append(xj)
        ws.append(wj)
    else:
        x0, w0 = gauss_legendre(npts, 0.0, inner)
        xs.append(x0)
        ws.append(w0)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        xk, wk = gauss_legendre(npts, lo, hi)
        xs.append(xk)
        ws.append(wk)
    d = np.concatenate(xs)
    w = np.concatenate(ws)
    if left:
        return a + d, w
    return b - d[::-1], w[::-1]


def integrate_graded(f, a: float, b: float, **kw) -> float:
    x, w = graded_rule(a, b, **kw)
    return float(np.dot(w, f(x)))
