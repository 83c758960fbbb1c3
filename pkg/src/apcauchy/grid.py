"""Time grids, sampled trajectories and trigonometric polynomials.

These are the three carriers every other module works with: a
:class:`TimeGrid` fixes the discretisation, a :class:`GridFunction` holds
samples of a trajectory ``f : I -> R^d`` on it, and a
:class:`TrigPolynomial` is an exact almost periodic function evaluable on
the whole real line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

_REL_DIVIDE_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start, t_start + step, ..., t_end``."""

    t_start: float
    t_end: float
    step: float

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("grid bounds must be finite")
        if self.step <= 0:
            raise ValueError("grid step must be positive")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        ratio = (self.t_end - self.t_start) / self.step
        if abs(ratio - round(ratio)) > _REL_DIVIDE_TOL * max(1.0, ratio):
            raise ValueError(
                f"step {self.step!r} does not divide the span "
                f"{self.t_end - self.t_start!r}")

    @classmethod
    def from_count(cls, t_start: float, t_end: float, n: int) -> "TimeGrid":
        return cls(t_start, t_end, (t_end - t_start) / (n - 1))

    @property
    def n(self) -> int:
        return int(round((self.t_end - self.t_start) / self.step)) + 1

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    @property
    def nodes(self) -> np.ndarray:
        return self.t_start + self.step * np.arange(self.n)

    def index_of(self, t: float) -> int:
        """Index of the node closest to ``t``."""
        return int(round((t - self.t_start) / self.step))

    def sub(self, t_start: float, t_end: float) -> "TimeGrid":
        """Largest sub-grid (same nodes) contained in ``[t_start, t_end]``."""
        i0 = max(0, math.ceil((t_start - self.t_start) / self.step - 1e-9))
        i1 = min(self.n - 1,
                 math.floor((t_end - self.t_start) / self.step + 1e-9))
        if i1 <= i0:
            raise ValueError("sub-grid would contain fewer than two nodes")
        return TimeGrid(self.t_start + i0 * self.step,
                        self.t_start + i1 * self.step, self.step)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a trajectory with values in ``R^d``.

    ``values`` is stored as an ``(n, d)`` float array; a 1-D input is taken
    as a scalar trajectory.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("values must be (n,) or (n, d)")
        if vals.shape[0] != self.grid.n:
            raise ValueError(
                f"expected {self.grid.n} samples, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, func: Callable, grid: TimeGrid) -> "GridFunction":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def norms(self) -> np.ndarray:
        """Euclidean norm of every sample."""
        return np.linalg.norm(self.values, axis=1)

    def sup_norm(self) -> float:
        return float(self.norms().max())

    def __call__(self, t) -> np.ndarray:
        """Piecewise linear interpolation; ``t`` must lie inside the grid."""
        t = np.asarray(t, dtype=float)
        g = self.grid
        x = (t - g.t_start) / g.step
        if np.any(x < -1e-9) or np.any(x > g.n - 1 + 1e-9):
            raise ValueError("evaluation point outside the grid")
        i = np.clip(np.floor(x).astype(int), 0, g.n - 2)
        w = (x - i)[..., None]
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def spline(self) -> CubicSpline:
        return CubicSpline(self.t, self.values, axis=0)

    def restrict(self, t_start: float, t_end: float) -> "GridFunction":
        sub = self.grid.sub(t_start, t_end)
        i0 = self.grid.index_of(sub.t_start)
        return GridFunction(sub, self.values[i0:i0 + sub.n])

    def __add__(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__


def _check_same_grid(a: GridFunction, b: GridFunction):
    if a.grid != b.grid:
        raise ValueError("grid functions live on different grids")


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    """Finite sum ``sum_j c_j exp(i lambda_j t)`` with ``c_j`` in ``C^d``.

    When ``real`` is set, evaluation returns the real part; for genuinely
    real functions the terms should come in conjugate pairs (the
    constructors below take care of that).
    """

    frequencies: np.ndarray
    coefficients: np.ndarray
    real: bool = True

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        coef = np.asarray(self.coefficients, dtype=complex)
        if coef.ndim == 1:
            coef = coef[:, None]
        if coef.shape[0] != lam.shape[0]:
            raise ValueError("one coefficient vector per frequency required")
        if not np.all(np.isfinite(lam)):
            raise ValueError("frequencies must be finite")
        lam.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "frequencies", lam)
        object.__setattr__(self, "coefficients", coef)

    @classmethod
    def constant(cls, value) -> "TrigPolynomial":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls([0.0], v[None, :])

    @classmethod
    def sines(cls, freqs: Sequence[float], amps: Sequence[float] | None = None,
              dim: int = 1, component: int = 0) -> "TrigPolynomial":
        """Scalar ``sum_k a_k sin(w_k t)`` placed in one state component."""
        amps = np.ones(len(freqs)) if amps is None else np.asarray(amps, float)
        lam, coef = [], []
        for w, a in zip(freqs, amps):
            for sgn in (1.0, -1.0):
                c = np.zeros(dim, dtype=complex)
                # sin(wt) = (e^{iwt} - e^{-iwt}) / 2i
                c[component] = sgn * a / 2j
                lam.append(sgn * w)
                coef.append(c)
        return cls(lam, coef)

    @classmethod
    def cosines(cls, freqs: Sequence[float], amps: Sequence[float] | None = None,
                dim: int = 1, component: int = 0) -> "TrigPolynomial":
        amps = np.ones(len(freqs)) if amps is None else np.asarray(amps, float)
        lam, coef = [], []
        for w, a in zip(freqs, amps):
            for sgn in (1.0, -1.0):
                c = np.zeros(dim, dtype=complex)
                c[component] = a / 2
                lam.append(sgn * w)
                coef.append(c)
        return cls(lam, coef)

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phase = np.exp(1j * np.multiply.outer(t, self.frequencies))
        out = phase @ self.coefficients
        return out.real if self.real else out

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return TrigPolynomial(
            np.concatenate([self.frequencies, other.frequencies]),
            np.concatenate([self.coefficients, other.coefficients]),
            self.real and other.real)

    def __mul__(self, scalar) -> "TrigPolynomial":
        return TrigPolynomial(self.frequencies, self.coefficients * scalar,
                              self.real)

    __rmul__ = __mul__

    def shifted(self, tau: float) -> "TrigPolynomial":
        """``t -> self(t + tau)``."""
        return TrigPolynomial(
            self.frequencies,
            self.coefficients * np.exp(1j * self.frequencies * tau)[:, None],
            self.real)

    def lipschitz_bound(self) -> float:
        """Upper bound ``sum_j |lambda_j| |c_j|`` for the derivative norm."""
        return float(np.sum(np.abs(self.frequencies)
                            * np.linalg.norm(self.coefficients, axis=1)))

    def sup_bound(self) -> float:
        return float(np.sum(np.linalg.norm(self.coefficients, axis=1)))

    def period(self, max_denominator: int = 64,
               rtol: float = 1e-12) -> float | None:
        """Exact common period when all frequencies are commensurate.

        Returns ``None`` if some frequency ratio is not a fraction with
        denominator at most ``max_denominator``; ``0.0`` frequencies are
        ignored and a constant polynomial has period ``None``.
        """
        lam = np.abs(self.frequencies[np.abs(self.frequencies) > 0])
        if lam.size == 0:
            return None
        base = lam.min()
        fracs = []
        for w in lam:
            fr = Fraction(w / base).limit_denominator(max_denominator)
            if abs(float(fr) * base - w) > rtol * w:
                return None
            fracs.append(fr)
        # frequencies are base * n_k/d_k; fundamental is base / lcm(d_k) * gcd(...)
        den = 1
        for fr in fracs:
            den = den * fr.denominator // math.gcd(den, fr.denominator)
        nums = [fr.numerator * (den // fr.denominator) for fr in fracs]
        g = 0
        for n in nums:
            g = math.gcd(g, n)
        return 2 * math.pi * den / (base * g)


def as_evaluator(f) -> Callable[[np.ndarray], np.ndarray]:
    """Uniform ``t -> (n, d)`` evaluator for the supported function kinds."""
    if isinstance(f, (GridFunction, TrigPolynomial)):
        return f
    def ev(t):
        out = np.asarray(f(np.asarray(t, dtype=float)), dtype=float)
        if out.ndim == np.ndim(t):
            out = out[..., None]
        return out
    return ev
