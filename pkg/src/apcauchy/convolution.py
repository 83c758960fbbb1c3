"""Finite and infinite convolution products ``int R(t - s) f(s) ds``.

Two kernels are supported:

* an :class:`~apcauchy.operators.OperatorFamily` in modal form, integrated
  exactly against the cubic spline of ``f`` (exponential product
  integration, stable for arbitrarily stiff modes);
* a scalar weakly singular kernel given by a
  :class:`~apcauchy.operators.KernelEnvelope`, ``M e^{-cs} s^{beta-1}``,
  with a Gauss-Jacobi rule on the singular cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import lfilter

from .grid import GridFunction, TimeGrid
from .operators import (KernelEnvelope, OperatorFamily, block_norm_sum,
                        check_block_integrable)
from .quadrature import jacobi_rule, legendre_rule, singular_product_quadrature
from .stepanov import conjugate, stepanov_norm

__all__ = [
    "QuadratureConfig", "ConvolutionResult", "finite_convolution",
    "infinite_convolution", "singular_product_quadrature", "default_tail",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Knobs for the convolution rules.

    ``n_b`` is the Gauss order per cell and ``T_tail`` the history length
    for infinite convolutions.  The singular cell is one Gauss-Jacobi panel
    by default (the smooth factor there is a single spline piece times an
    exponential); ``n_sub > 1`` splits it at ``h (k/n_sub)^sigma`` with
    ``sigma`` defaulting to ``max(1, 2/beta)``.
    """

    sigma: float | None = None
    n_b: int = 8
    n_sub: int = 1
    T_tail: float | None = None
    richardson: bool = True

    def __post_init__(self):
        if self.n_b < 4:
            raise ValueError("n_b must be >= 4")
        if self.sigma is not None and self.sigma < 1:
            raise ValueError("sigma must be >= 1")
        if self.T_tail is not None and self.T_tail <= 0:
            raise ValueError("T_tail must be positive")

    def grading(self, beta: float) -> float:
        return self.sigma if self.sigma is not None else max(1.0, 2.0 / beta)


@dataclass(frozen=True, eq=False)
class ConvolutionResult:
    values: GridFunction
    error: np.ndarray
    tail_bound: float = 0.0

    @property
    def max_error(self) -> float:
        return float(self.error.max()) if self.error.size else 0.0

    def sidecar(self) -> dict:
        return {"tail_bound": self.tail_bound,
                "max_quadrature_error": self.max_error}


def _envelope(kernel) -> KernelEnvelope:
    if isinstance(kernel, KernelEnvelope):
        return kernel
    if isinstance(kernel, OperatorFamily):
        return kernel.envelope
    raise TypeError(f"unsupported kernel {type(kernel).__name__}")


# ---------------------------------------------------------------------------
# modal path


@lru_cache(maxsize=None)
def _series_coefs(j: int, terms: int = 48) -> np.ndarray:
    # j! / (j + m + 1)!
    m = np.arange(terms)
    return np.exp(math.lgamma(j + 1) - np.array([math.lgamma(j + k + 2) for k in m]))


def _phi(z: np.ndarray, jmax: int = 3) -> np.ndarray:
    """``phi_j(z) = int_0^1 e^{-z(1-x)} x^j dx`` for ``j = 0..jmax``."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((jmax + 1, z.size), dtype=complex)
    small = np.abs(z) < 4.0
    if np.any(small):
        zs = z[small]
        pw = (-zs)[None, :] ** np.arange(48)[:, None]
        for j in range(jmax + 1):
            out[j, small] = _series_coefs(j) @ pw
    if np.any(~small):
        zl = z[~small]
        ph = (1.0 - np.exp(-zl)) / zl
        out[0, ~small] = ph
        for j in range(1, jmax + 1):
            ph = (1.0 - j * ph) / zl
            out[j, ~small] = ph
    return out


def _modal_convolution(fam: OperatorFamily, f: GridFunction) -> np.ndarray:
    g = f.grid
    if f.dim != fam.dim:
        raise ValueError(f"f has dimension {f.dim}, family {fam.dim}")
    h = g.step
    cs = CubicSpline(f.t, f.values, axis=0)
    A = cs.c @ fam.R.T                       # (4, n-1, N), coef of (s-t_i)^(3-k)
    ph = _phi(fam.rates * h)                 # (4, N)
    loc = np.zeros(A.shape[1:], dtype=complex)
    for j in range(4):
        loc += A[3 - j] * (h ** (j + 1) * ph[j])
    decay = np.exp(-fam.rates * h)
    y = np.zeros((g.n, fam.n_modes), dtype=complex)
    for k in range(fam.n_modes):
        y[1:, k] = lfilter([1.0], [1.0, -decay[k]], loc[:, k])
    out = y @ fam.L.T
    return out.real if fam.real else out


# ---------------------------------------------------------------------------
# scalar weakly singular path


def _cell0_rule(env: KernelEnvelope, h: float, cfg: QuadratureConfig):
    """Nodes and kernel-weighted weights covering ``[0, h]``."""
    sig = cfg.grading(env.beta)
    K = cfg.n_sub
    br = h * (np.arange(K + 1) / K) ** sig
    sj, wj = jacobi_rule(cfg.n_b, env.beta - 1.0)
    nodes = [br[1] * sj]
    weights = [br[1] ** env.beta * wj * env.M * np.exp(-env.c * br[1] * sj)]
    sl, wl = legendre_rule(cfg.n_b)
    for a, b in zip(br[1:-1], br[2:]):
        s = a + (b - a) * sl
        nodes.append(s)
        weights.append((b - a) * wl * env(s))
    return np.concatenate(nodes), np.concatenate(weights)


def _singular_convolution(env: KernelEnvelope, f: GridFunction,
                          cfg: QuadratureConfig) -> np.ndarray:
    g = f.grid
    h, n = g.step, g.n
    cs = CubicSpline(f.t, f.values, axis=0)
    t = f.t
    out = np.zeros((n, f.dim))
    s0, w0 = _cell0_rule(env, h, cfg)
    vals = cs(t[1:, None] - s0[None, :])     # (n-1, r, d)
    out[1:] += np.einsum("r,nrd->nd", w0, vals)
    if n > 2:
        sl, wl = legendre_rule(cfg.n_b)
        j = np.arange(1, n - 1)
        for x, w in zip(sl, wl):
            W = h * w * env((j + x) * h)     # cell j weight
            F = cs(t[1:] - x * h)            # (n-1, d)
            for d in range(f.dim):
                c = np.convolve(W, F[:, d])
                out[2:, d] += c[:n - 2]
    return out


# ---------------------------------------------------------------------------
# public API


def _convolve(kernel, f: GridFunction, cfg: QuadratureConfig) -> np.ndarray:
    if isinstance(kernel, OperatorFamily):
        return _modal_convolution(kernel, f)
    return _singular_convolution(_envelope(kernel), f, cfg)


def _richardson(kernel, f: GridFunction, fine: np.ndarray,
                cfg: QuadratureConfig) -> np.ndarray:
    g = f.grid
    m = (g.n - 1) // 2
    if m < 4:
        return np.zeros(g.n)
    coarse_grid = TimeGrid(g.t_start, g.t_start + 2 * m * g.step, 2 * g.step)
    coarse = _convolve(kernel, GridFunction(coarse_grid, f.values[:2 * m + 1:2]), cfg)
    diff = np.linalg.norm(fine[:2 * m + 1:2] - coarse, axis=1) / 15.0
    err = np.empty(g.n)
    err[:2 * m + 1:2] = diff
    err[1:2 * m:2] = np.maximum(diff[:-1], diff[1:])
    err[2 * m + 1:] = diff[-1]
    return err


def _check_p(kernel, p: float):
    check_block_integrable(_envelope(kernel).beta, conjugate(p))


def finite_convolution(kernel, f: GridFunction,
                       config: QuadratureConfig = QuadratureConfig(),
                       p: float = math.inf) -> ConvolutionResult:
    """``H(t) = int_{t0}^t R(t - s) f(s) ds`` on the grid of ``f``.

    ``p`` is the declared Stepanov exponent of ``f``; the first kernel
    block must be ``L^{p'}``-integrable.
    """
    _check_p(kernel, p)
    vals = _convolve(kernel, f, config)
    err = _richardson(kernel, f, vals, config) if config.richardson \
        else np.zeros(f.grid.n)
    return ConvolutionResult(GridFunction(f.grid, vals), err)


def default_tail(env: KernelEnvelope, rel: float = 1e-10) -> float:
    """Smallest integer ``T`` whose geometric tail bound is below ``rel`` of the mass."""
    geo = env.M / (1.0 - math.exp(-env.c))
    T = math.log(geo / (rel * env.l1_mass())) / env.c
    return float(max(1, math.ceil(T)))


def _history_grid(window: TimeGrid, T_tail: float) -> TimeGrid:
    k = math.ceil(T_tail / window.step - 1e-9)
    return TimeGrid(window.t_start - k * window.step, window.t_end, window.step)


def infinite_convolution(kernel, f, window: TimeGrid,
                         config: QuadratureConfig = QuadratureConfig(),
                         p: float = math.inf,
                         f_norm: float | None = None) -> ConvolutionResult:
    """``F(t) = int_{-inf}^t R(t - s) f(s) ds`` on ``window``, truncated.

    The history ``[t0 - T_tail, t0]`` is taken from ``f`` (a callable,
    trigonometric polynomial, or grid function covering it).  The returned
    ``tail_bound`` is ``||f||_{S^p}`` times the envelope block sum beyond
    ``floor(T_tail)``.
    """
    env = _envelope(kernel)
    qc = conjugate(p)
    _check_p(kernel, p)
    T_tail = config.T_tail if config.T_tail is not None else default_tail(env)
    ext = _history_grid(window, T_tail)
    if isinstance(f, GridFunction):
        if f.grid.step != window.step or f.grid.t_start > ext.t_start + 1e-9 \
                or f.grid.t_end < ext.t_end - 1e-9:
            raise ValueError("grid function does not cover the history window")
        fx = f.restrict(ext.t_start, ext.t_end)
    else:
        v = np.asarray(f(ext.nodes), dtype=float)
        fx = GridFunction(ext, v)
    res = finite_convolution(kernel, fx, config, p)
    i0 = ext.index_of(window.t_start)
    out = GridFunction(window, res.values.values[i0:i0 + window.n])
    if f_norm is None:
        if math.isinf(p):
            # an exact bound beats the sampled sup when one is available
            f_norm = f.sup_bound() if hasattr(f, "sup_bound") else fx.sup_norm()
        else:
            f_norm = stepanov_norm(fx, p)
    tail = f_norm * block_norm_sum(env, qc, start=int(math.floor(T_tail))).total
    return ConvolutionResult(out, res.error[i0:i0 + window.n], tail)
