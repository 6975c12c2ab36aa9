"""Small shared numerical kernels: segment quadrature, probe points,
finite-difference weights, golden-section minimization."""

from __future__ import annotations

import functools
import math

import numpy as np


@functools.lru_cache(maxsize=8)
def gauss_legendre(order: int = 15):
    t, w = np.polynomial.legendre.leggauss(order)
    return t, w


def integrate_segments(f, left, right, order: int = 15):
    """Gauss-Legendre integral of f over each [left_j, right_j]; vectorized.

    f must accept an ndarray and return an ndarray of the same shape.
    Returns an array of per-segment integrals.
    """
    t, w = gauss_legendre(order)
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    xs = mid[..., None] + half[..., None] * t
    vals = f(xs)
    return half * (vals @ w)


def chebyshev_interior(lo: float, hi: float, n: int):
    """n strictly interior probe points clustered toward both endpoints."""
    j = np.arange(n)
    t = 0.5 * (1.0 - np.cos(np.pi * (j + 0.5) / n))
    return lo + (hi - lo) * t


def fd_weights(points, x0: float, order: int):
    """Weights w with sum_j w_j f(points_j) ~ f^(order)(x0).

    Solved from the local Taylor system; points must be distinct and the
    stencil must have more points than ``order``.
    """
    pts = np.asarray(points, dtype=float) - x0
    m = len(pts)
    rhs = np.zeros(m)
    rhs[order] = float(math.factorial(order))
    mat = np.vander(pts, m, increasing=True).T
    return np.linalg.solve(mat, rhs)


def central_derivative(f, x0: float, step: float, order: int = 1):
    """Order-4 central finite difference of a scalar function."""
    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * step
    vals = np.array([f(x0 + o) for o in offsets])
    if order == 1:
        w = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * step)
    elif order == 2:
        w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * step**2)
    else:
        raise ValueError("order must be 1 or 2")
    return float(w @ vals)


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_min(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section minimum of a unimodal scalar function on [a, b].

    Returns (x_min, f(x_min)).
    """
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = c if fc < fd else d
    return x, min(fc, fd)
