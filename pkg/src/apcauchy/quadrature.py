"""Gauss rules for integrands with an algebraic singularity at the origin."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=64)
def jacobi_rule(n: int, a: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on ``[0, 1]`` for ``int_0^1 g(s) s^a ds``, ``a > -1``."""
    x, w = roots_jacobi(n, 0.0, a)
    # s = (1 + x)/2, s^a = 2^-a (1+x)^a, ds = dx/2
    s = 0.5 * (1.0 + x)
    w = w * 0.5 ** (a + 1.0)
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


@lru_cache(maxsize=64)
def legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to ``[0, 1]``."""
    x, w = roots_legendre(n)
    s = 0.5 * (1.0 + x)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def singular_product_quadrature(g, beta: float, h: float, n: int = 16) -> float:
    """``int_0^h g(s) s^(beta-1) ds`` with the weight integrated exactly.

    The rule is exact whenever ``g`` is a polynomial of degree below
    ``2n``; ``g`` must accept an array of nodes.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    s, w = jacobi_rule(n, beta - 1.0)
    vals = np.asarray(g(h * s), dtype=float)
    return float(h ** beta * np.tensordot(w, vals, axes=(0, 0)))


def singular_rule(a: float, T: float, decay: float = 0.0,
                  n: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule for ``int_0^T g(s) s^a e^(-decay s) ds``.

    Returns nodes and weights with the weight ``s^a`` (but not the
    exponential) folded in.  The first panel is Gauss-Jacobi, the rest
    Gauss-Legendre on panels that double in width, capped at ``4/decay``
    so the exponential stays well resolved.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    cap = np.inf if decay <= 0 else 4.0 / decay
    w0 = min(T, 1.0 if decay <= 0 else min(1.0, 1.0 / decay))
    sj, wj = jacobi_rule(n, a)
    nodes = [w0 * sj]
    weights = [w0 ** (a + 1.0) * wj]
    sl, wl = legendre_rule(n)
    left, width = w0, w0
    while left < T * (1 - 1e-15):
        width = min(2 * width, cap, T - left)
        s = left + width * sl
        nodes.append(s)
        weights.append(width * wl * s ** a)
        left += width
    return np.concatenate(nodes), np.concatenate(weights)


def singular_integral(g, a: float, T: float, decay: float = 0.0,
                      n: int = 20) -> float:
    """``int_0^T g(s) s^a ds`` where ``g`` may carry a factor ``e^(-decay s)``."""
    s, w = singular_rule(a, T, decay, n)
    return float(w @ np.asarray(g(s), dtype=float))
