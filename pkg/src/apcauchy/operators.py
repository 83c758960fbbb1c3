"""Solution operator families with an ``M e^{-ct} t^{beta-1}`` envelope.

Every family is stored in modal form ``T(t) = L diag(exp(-rho t)) R`` with
``Re rho > 0``.  This covers diagonal generators, the spectral surrogate
that mimics a weakly singular envelope, and the regular part of a matrix
pencil ``B u' = A u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, ordqz
from scipy.special import gamma as gamma_fn
from scipy.stats import ortho_group

from .quadrature import legendre_rule, singular_integral


@dataclass(frozen=True)
class KernelEnvelope:
    """``M e^{-ct} t^{beta-1}`` for ``t > 0``."""

    M: float
    c: float
    beta: float

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("envelope is undefined for t <= 0")
        out = self.M * np.exp(-self.c * t) * t ** (self.beta - 1.0)
        return float(out) if out.ndim == 0 else out

    def l1_mass(self) -> float:
        """``int_0^inf envelope = M Gamma(beta) c^-beta``."""
        return self.M * gamma_fn(self.beta) * self.c ** (-self.beta)


class BlockDivergenceError(ValueError):
    """Raised when the first kernel block is not ``L^{q'}``-integrable."""


def check_block_integrable(beta: float, q_conj: float):
    if math.isinf(q_conj):
        ok = beta == 1
    else:
        ok = q_conj * (beta - 1.0) > -1.0
    if not ok:
        raise BlockDivergenceError(
            f"first block divergent (q'(beta-1) > -1 violated: q'={q_conj}, "
            f"beta={beta})")


@dataclass
class BlockSum:
    total: float
    partial: float
    tail: float
    blocks: np.ndarray

    def to_dict(self) -> dict:
        return {"total": self.total, "partial": self.partial,
                "tail": self.tail, "n_blocks": int(self.blocks.size)}


_MAX_BLOCKS = 200_000


def block_norm_sum(env, q_conj: float, start: int = 0,
                   rtol: float = 1e-12) -> BlockSum:
    """``sum_{k >= start} ||envelope||_{L^{q'}[k, k+1]}`` plus a tail bound.

    Blocks are summed until the geometric tail bound
    ``M e^{-cK} / (1 - e^{-c})`` falls below ``rtol`` times the partial
    sum; ``total`` includes that bound.
    """
    env = getattr(env, "envelope", env)
    q_conj = float(q_conj)
    if q_conj < 1:
        raise ValueError("q' must be >= 1")
    if start == 0:
        check_block_integrable(env.beta, q_conj)
    M, c, beta = env.M, env.c, env.beta
    geo = 1.0 / (1.0 - math.exp(-c))

    def tail_from(K):
        return M * math.exp(-c * K) * geo

    blocks = []
    K = start
    partial = 0.0
    chunk = 64
    while True:
        ks = np.arange(K, K + chunk)
        b = _block_norms(env, q_conj, ks)
        blocks.append(b)
        partial += float(b.sum())
        K += chunk
        if tail_from(K) <= rtol * partial or partial == 0 and tail_from(K) == 0:
            break
        if K - start > _MAX_BLOCKS:
            raise ValueError("block sum did not converge (decay rate too small)")
        chunk = min(4 * chunk, 16384)
    tail = tail_from(K)
    return BlockSum(partial + tail, partial, tail, np.concatenate(blocks))


def _block_norms(env: KernelEnvelope, q_conj: float, ks: np.ndarray) -> np.ndarray:
    M, c, beta = env.M, env.c, env.beta
    if math.isinf(q_conj):
        # beta == 1 here: the sup over [k, k+1] sits at the left end
        if beta != 1:
            # only reachable with start > 0
            return M * np.exp(-c * ks) * np.maximum(ks, 1e-300) ** (beta - 1.0)
        return M * np.exp(-c * ks)
    a = q_conj * (beta - 1.0)
    lam = c * q_conj
    out = np.empty(ks.size)
    first = ks == 0
    if np.any(first):
        out[first] = singular_integral(lambda s: np.exp(-lam * s), a, 1.0, lam)
    rest = ks[~first].astype(float)
    if rest.size:
        # Gauss-Legendre on panels of width <= 4/lam inside each block
        n_pan = max(1, math.ceil(lam / 4.0))
        sl, wl = legendre_rule(20)
        loc = (np.arange(n_pan)[:, None] + sl[None, :]).ravel() / n_pan
        wts = np.tile(wl, n_pan) / n_pan
        s = rest[:, None] + loc[None, :]
        # factor e^{-lam k} out to avoid underflow inside the sum
        vals = np.exp(-lam * (s - rest[:, None])) * s ** a
        out[~first] = np.exp(-lam * rest) * (vals @ wts)
    return M * out ** (1.0 / q_conj)


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """``T(t) = Re[L diag(exp(-rates t)) R]`` with a declared envelope."""

    kind: str
    L: np.ndarray
    rates: np.ndarray
    R: np.ndarray
    envelope: KernelEnvelope
    real: bool = True
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("L", "rates", "R"):
            arr = np.array(getattr(self, name), dtype=complex)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.L.shape[1] != self.rates.size or self.R.shape[0] != self.rates.size:
            raise ValueError("inconsistent modal factors")
        if np.any(self.rates.real <= 0):
            raise ValueError("not exponentially decaying")

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @property
    def n_modes(self) -> int:
        return self.rates.size

    def matrix(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be >= 0")
        out = (self.L * np.exp(-self.rates * t)) @ self.R
        return out.real if self.real else out

    def apply(self, t, x) -> np.ndarray:
        """``T(t) x``; ``t`` may be an array, giving shape ``(len(t), d)``."""
        x = np.asarray(x)
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("t must be >= 0")
        y = self.R @ x
        z = np.exp(-np.multiply.outer(t, self.rates)) * y
        out = z @ self.L.T
        return out.real if self.real else out

    def norm(self, t: float) -> float:
        return float(np.linalg.norm(self.matrix(t), 2))

    def projector(self) -> np.ndarray:
        return self.matrix(0.0)

    def envelope_ratio(self, ts) -> float:
        """Largest ``||T(t)|| / envelope(t)`` over the sampled times."""
        ts = np.asarray(ts, dtype=float)
        return float(max(self.norm(t) / self.envelope(t) for t in ts))

    def resolvent_norm(self, lam: complex) -> float:
        if self.kind != "diagonal":
            raise NotImplementedError("resolvent only for diagonal families")
        mu = -self.rates
        gap = np.abs(lam - mu)
        if np.any(gap == 0):
            raise ZeroDivisionError(f"lambda={lam} is an eigenvalue")
        return float(np.max(1.0 / gap))


def diagonal_family(mu, M: float = 1.0) -> OperatorFamily:
    """``T(t) = diag(exp(mu_k t))`` for eigenvalues with negative real part."""
    mu = np.atleast_1d(np.asarray(mu, dtype=complex))
    if np.any(mu.real >= 0):
        raise ValueError("not exponentially decaying")
    d = mu.size
    env = KernelEnvelope(M, float(-mu.real.max()), 1.0)
    real = bool(np.all(mu.imag == 0))
    return OperatorFamily("diagonal", np.eye(d), -mu, np.eye(d), env, real,
                          {"mu": mu.real.tolist() if real else
                           [[z.real, z.imag] for z in mu]})


def surrogate_family(beta: float, c: float, N: int = 64, seed: int = 0,
                     t_range: tuple[float, float] = (1e-3, 100.0),
                     check_range: tuple[float, float] = (1e-2, 10.0)
                     ) -> OperatorFamily:
    """Finite-dimensional stand-in whose norm follows ``e^{-ct} t^{beta-1}``.

    Mode ``k`` contributes ``w_k e^{-(c + lam_k) t}`` on an orthonormal
    direction; ``w_k`` is chosen so that ``w_k e^{-lam_k t}`` touches
    ``t^{beta-1}`` from below at ``t_k = (1 - beta)/lam_k``, with the
    touching points log-spaced over ``t_range``.  The operator norm is the
    largest mode, so it never exceeds the envelope and stays within a
    factor two of it on ``check_range``.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if beta == 1:
        d = max(1, N)
        env = KernelEnvelope(1.0, c, 1.0)
        return OperatorFamily("spectral_surrogate", np.eye(d), np.full(d, c),
                              np.eye(d), env, True,
                              {"beta": 1.0, "c": c, "N": d})
    if N < 8:
        raise ValueError("surrogate needs N >= 8 modes")
    t_star = np.geomspace(*t_range, N)
    lam = (1.0 - beta) / t_star
    w = t_star ** (beta - 1.0) * math.exp(1.0 - beta)
    Q = ortho_group.rvs(N, random_state=seed)
    env = KernelEnvelope(1.0, c, beta)
    fam = OperatorFamily("spectral_surrogate", Q * w, c + lam, Q.T, env, True,
                         {"beta": beta, "c": c, "N": N, "seed": seed})
    ts = np.geomspace(*check_range, 60)
    ratio = np.array([fam.norm(t) / env(t) for t in ts])
    if ratio.min() < 0.5 or ratio.max() > 2.0:
        raise ValueError(f"surrogate envelope mismatch: ratios {ratio}")
    return fam


# ---------------------------------------------------------------------------
# pencils


@dataclass(frozen=True, eq=False)
class PencilModel:
    """Regular part of ``B u' = A u`` in the variable ``v = B u``.

    The state lives where the multivalued operator ``A B^{-1}`` acts;
    ``projector`` maps onto the regular subspace along the singular one.
    """

    B: np.ndarray
    A: np.ndarray
    generator: np.ndarray
    Q: np.ndarray
    coupling: np.ndarray
    eigenvalues: np.ndarray
    family: OperatorFamily

    @property
    def regular_dim(self) -> int:
        return self.generator.shape[0]

    @property
    def singular_dim(self) -> int:
        return self.B.shape[0] - self.regular_dim

    @property
    def projector(self) -> np.ndarray:
        return self.family.projector()

    def semigroup(self, t: float) -> np.ndarray:
        """``T(t)`` through a matrix exponential (independent of the modal form)."""
        r = self.regular_dim
        right = np.hstack([np.eye(r), self.coupling])
        Qh = self.Q.conj().T
        out = self.Q[:, :r] @ expm(t * self.generator) @ right @ Qh
        return out.real

    def resolvent_norm(self, lam: complex) -> float:
        """``||B (lam B - A)^{-1}||``."""
        P = lam * self.B - self.A
        try:
            X = np.linalg.solve(P.T, self.B.T).T
        except np.linalg.LinAlgError:
            raise ZeroDivisionError(f"lambda={lam} is a pencil eigenvalue")
        if not np.all(np.isfinite(X)):
            raise ZeroDivisionError(f"lambda={lam} is a pencil eigenvalue")
        return float(np.linalg.norm(X, 2))


def pencil_semigroup(B, A, c: float | None = None, tol: float = 1e-10,
                     margin: float = 1e-3) -> PencilModel:
    """Generalised Schur reduction of ``lambda B - A``.

    Finite eigenvalues are ordered first; the regular block gives the
    reduced generator, and the infinite block (index one only) is
    annihilated by ``T(t)``.  The fitted envelope uses
    ``c = -(1 - margin) max Re(mu)`` and ``M`` one percent above the
    largest sampled ``||T(t)|| e^{ct}``.
    """
    B = np.asarray(B, dtype=float)
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if A.shape != (d, d) or B.shape != (d, d):
        raise ValueError("A and B must be square and of equal size")
    sa = max(np.linalg.norm(A), 1.0)
    sb = max(np.linalg.norm(B), 1.0)

    def finite(alpha, beta):
        return np.abs(beta) > tol * sb

    AA, BB, alpha, beta, Q, Z = ordqz(A, B, sort=finite, output="complex")
    if np.any((np.abs(alpha) <= tol * sa) & (np.abs(beta) <= tol * sb)):
        raise ValueError("singular pencil: det(lambda B - A) vanishes identically")
    r = int(np.sum(np.abs(beta) > tol * sb))
    if r == 0:
        raise ValueError("pencil has no finite eigenvalues")
    S11, S12, S22 = AA[:r, :r], AA[:r, r:], AA[r:, r:]
    T11, T12, T22 = BB[:r, :r], BB[:r, r:], BB[r:, r:]
    if T22.size and np.linalg.norm(T22) > 1e3 * tol * sb:
        raise ValueError("pencil has index > 1; not supported")
    G = S11 @ np.linalg.inv(T11)
    K = (G @ T12 - S12) @ np.linalg.inv(S22) if d > r else np.zeros((r, 0))
    mu, V = np.linalg.eig(G)
    if np.any(mu.real >= 0):
        raise ValueError("not exponentially decaying: eigenvalue with Re >= 0")
    if np.linalg.cond(V) > 1e10:
        raise ValueError("reduced generator is (numerically) defective")
    Q1 = Q[:, :r]
    right = np.hstack([np.eye(r), K]) @ Q.conj().T
    L = Q1 @ V
    R = np.linalg.solve(V, right)
    alpha_max = float(mu.real.max())
    c_fit = -alpha_max * (1.0 - margin) if c is None else float(c)
    if not 0 < c_fit < -alpha_max:
        raise ValueError("envelope rate must lie in (0, -max Re mu)")
    probe = OperatorFamily("pencil", L, -mu, R, KernelEnvelope(1.0, c_fit, 1.0))
    ts = np.concatenate([[0.0], np.geomspace(1e-8, 100.0 / -alpha_max, 400)])
    peak = max(probe.norm(t) * math.exp(c_fit * t) for t in ts)
    env = KernelEnvelope(1.01 * peak, c_fit, 1.0)
    fam = OperatorFamily("pencil", L, -mu, R, env, True,
                         {"regular_dim": r, "singular_dim": d - r})
    return PencilModel(B, A, G, Q, K, mu, fam)


# ---------------------------------------------------------------------------
# condition (P)


@dataclass
class ConditionPReport:
    verdict: str
    M: float
    worst_ratio: float
    worst_lambda: complex | None
    n_points: int
    witness: complex | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        wl = self.worst_lambda
        wt = self.witness
        return {
            "verdict": self.verdict, "M": self.M, "worst_ratio": self.worst_ratio,
            "worst_lambda": None if wl is None else [wl.real, wl.imag],
            "n_points": self.n_points,
            "witness": None if wt is None else [wt.real, wt.imag],
        }


def in_region(lam, c: float) -> np.ndarray:
    """Membership in ``{Re lam >= -c (|Im lam| + 1)}``."""
    lam = np.asarray(lam, dtype=complex)
    return lam.real >= -c * (np.abs(lam.imag) + 1.0) - 1e-12


def region_samples(c: float, n: int = 64, r_max: float = 1e6) -> np.ndarray:
    """Boundary and interior-ray sample points of the region."""
    y = np.geomspace(1e-3, r_max, n)
    pts = [np.array([0.0, -c])]
    for sgn in (1.0, -1.0):
        pts.append(-c * (y + 1.0) + 1j * sgn * y)       # boundary
        pts.append(-0.5 * c * y + 1j * sgn * y)          # interior ray
        pts.append(1j * sgn * y)                         # imaginary axis
        pts.append(y * np.exp(1j * sgn * np.pi / 4))     # right half-plane
    pts.append(y)
    return np.concatenate(pts).astype(complex)


def check_condition_P(model, c: float, beta: float, M: float | None = None,
                      n_samples: int = 64, r_max: float = 1e6,
                      extra_points=None) -> ConditionPReport:
    """Sample ``||R(lam)|| (1 + |lam|)^beta`` over the region and compare to ``M``.

    ``model`` is anything with ``resolvent_norm(lam)`` or a plain callable.
    With ``M=None`` the constant is fitted as the sampled maximum, and the
    check passes whenever every sample is finite.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    rn = model if callable(model) and not hasattr(model, "resolvent_norm") \
        else model.resolvent_norm
    pts = region_samples(c, n_samples, r_max)
    if extra_points is not None:
        extra = np.atleast_1d(np.asarray(extra_points, dtype=complex))
        if not np.all(in_region(extra, c)):
            bad = extra[~in_region(extra, c)][0]
            raise ValueError(f"sample point {bad} lies outside the region")
        pts = np.concatenate([pts, extra])
    vals = np.empty(pts.size)
    for i, lam in enumerate(pts):
        try:
            v = rn(lam)
        except (ZeroDivisionError, np.linalg.LinAlgError):
            return ConditionPReport("fail", math.inf if M is None else M,
                                    math.inf, lam, i + 1, witness=lam)
        if not math.isfinite(v):
            return ConditionPReport("fail", math.inf if M is None else M,
                                    math.inf, lam, i + 1, witness=lam)
        vals[i] = v * (1.0 + abs(lam)) ** beta
    k = int(np.argmax(vals))
    M_used = float(vals[k]) if M is None else float(M)
    worst = float(vals[k] / M_used) if M_used > 0 else math.inf
    verdict = "pass" if worst <= 1.0 + 1e-12 else "fail"
    return ConditionPReport(verdict, M_used, worst, complex(pts[k]), pts.size)
