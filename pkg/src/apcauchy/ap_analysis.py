"""Numerical tests of Bohr almost periodicity and asymptotic almost periodicity.

All verdicts here are relative to a deterministic scan of shifts
``tau_step, 2 tau_step, ..., tau_max`` and to the finite window on which the
supremum over ``t`` is taken; reports carry both so a reader can judge the
resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from .grid import GridFunction, TimeGrid, TrigPolynomial

DEFAULT_TAU_STEP = 1e-2
DEFAULT_TRIG_WINDOW = TimeGrid(0.0, 200.0, 0.05)
_CHUNK = 4_000_000
_COARSE_MIN = 50_000
_COARSE_FACTOR = 32


class InsufficientOverlap(ValueError):
    pass


class DecompositionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shift machinery


def _eval_group(f, t, K) -> np.ndarray:
    """``f(t, y)`` for every ``y`` in ``K``, shape ``(..., len(K), d)``.

    One broadcast call ``f(t[..., None], stack(K))`` is tried first.
    """
    t = np.asarray(t, dtype=float)
    d = K[0].size
    if all(y.size == d for y in K):
        try:
            with np.errstate(all="ignore"):
                v = np.asarray(f(t[..., None], np.stack(K)), dtype=float)
            if v.shape == t.shape + (len(K), d):
                return v
            if d == 1 and v.shape == t.shape + (len(K),):
                return v[..., None]
        except (ValueError, TypeError, IndexError):
            pass
    return np.stack([_as_2d(f(t, y), t) for y in K], axis=-2)


class _Shifter:
    """Evaluates ``||f(t + tau) - f(t)||`` for batches of shifts.

    The result has shape ``(len(taus), len(t))``; for two-parameter input
    the norm is maximised over the parameter sample ``K``.
    """

    def __init__(self, f, window: TimeGrid, K=None):
        self.window = window
        self.t = window.nodes
        if K is not None:
            if not callable(f) or isinstance(f, (GridFunction, TrigPolynomial)):
                raise TypeError("two-parameter input must be a callable f(t, y)")
            K = [np.atleast_1d(np.asarray(y, dtype=float)) for y in K]
            if not K:
                raise ValueError("parameter sample K is empty")
            self.kind = "callable"
            self._ev = lambda t: _eval_group(f, t, K)
        elif isinstance(f, TrigPolynomial):
            self.kind = "trig"
            self.trig = f
        elif isinstance(f, GridFunction):
            self.kind = "grid"
            self.gf = f
        elif callable(f):
            self.kind = "callable"
            self._ev = lambda t: _as_2d(f(t), t)[..., None, :]
        else:
            raise TypeError(f"cannot scan shifts of {type(f).__name__}")

    def base(self, t):
        if self.kind == "trig":
            return self.trig(t)[..., None, :]
        if self.kind == "grid":
            return self.gf(t)[..., None, :]
        return self._ev(t)

    def norms(self, taus: np.ndarray, t: np.ndarray | None = None) -> np.ndarray:
        t = self.t if t is None else t
        taus = np.asarray(taus, dtype=float)
        out = np.empty((taus.size, t.size))
        if taus.size == 0:
            return out
        if self.kind == "trig":
            tp = self.trig
            m = tp.frequencies.size
            dim = tp.dim
            # diff(tau, t) = sum_j c_j e^{i l_j t} (e^{i l_j tau} - 1)
            B = (np.exp(1j * np.outer(tp.frequencies, t))[:, :, None]
                 * tp.coefficients[:, None, :]).reshape(m, -1)
            step = max(1, _CHUNK // max(1, t.size * dim))
            for s in range(0, taus.size, step):
                A = np.exp(1j * np.outer(taus[s:s + step], tp.frequencies)) - 1.0
                d = (A @ B).reshape(-1, t.size, dim)
                d = d.real if tp.real else d
                out[s:s + step] = np.sqrt(np.sum(np.abs(d) ** 2, axis=-1))
            return out
        f0 = self.base(t)
        step = max(1, _CHUNK // max(1, t.size * f0.shape[-1] * f0.shape[-2]))
        for s in range(0, taus.size, step):
            tt = t[None, :] + taus[s:s + step, None]
            f1 = self.base(tt.ravel()).reshape(tt.shape + f0.shape[1:])
            out[s:s + step] = np.linalg.norm(f1 - f0[None], axis=-1).max(axis=-1)
        return out


def _as_2d(v, t):
    v = np.asarray(v, dtype=float)
    if v.ndim == np.ndim(t):
        v = v[..., None]
    return v


def _interp_slack(f: GridFunction, tau_step: float) -> float:
    """Bound on the linear-interpolation error for off-grid shifts."""
    ratio = tau_step / f.grid.step
    if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
        return 0.0
    if f.grid.n < 3:
        return 0.0
    d2 = f.values[2:] - 2 * f.values[1:-1] + f.values[:-2]
    return float(np.linalg.norm(d2, axis=1).max()) / 8.0


def _lipschitz(f) -> float | None:
    if isinstance(f, TrigPolynomial):
        return f.lipschitz_bound()
    if isinstance(f, GridFunction):
        return float(np.linalg.norm(np.diff(f.values, axis=0), axis=1).max()
                     / f.grid.step)
    bound = getattr(f, "lipschitz_bound", None)
    return float(bound()) if callable(bound) else None


def _default_window(f, tau_max: float) -> TimeGrid:
    if isinstance(f, GridFunction):
        g = f.grid
        if g.t_end - tau_max <= g.t_start + g.step:
            raise InsufficientOverlap(
                f"insufficient overlap: grid length {g.length:g} does not "
                f"exceed tau_max {tau_max:g}")
        return g.sub(g.t_start, g.t_end - tau_max)
    return DEFAULT_TRIG_WINDOW


def _check_overlap(f, window: TimeGrid, tau_max: float):
    if isinstance(f, GridFunction):
        g = f.grid
        if window.t_start < g.t_start - 1e-12 or \
                window.t_end + tau_max > g.t_end + 1e-9:
            raise InsufficientOverlap(
                "insufficient overlap: window shifted by tau_max leaves the "
                "sampled range")


def tau_grid(tau_max: float, tau_step: float, tau_min: float = 0.0) -> np.ndarray:
    """Scanned shifts ``k * tau_step`` with ``tau_min < tau <= tau_max``."""
    if tau_step <= 0:
        raise ValueError("tau_step must be positive")
    k0 = max(1, math.floor(tau_min / tau_step + 1e-9) + 1)
    k1 = math.floor(tau_max / tau_step + 1e-9)
    return tau_step * np.arange(k0, k1 + 1)


@dataclass
class ShiftScan:
    taus: np.ndarray
    distance: np.ndarray
    slack: float
    window: TimeGrid

    def periods(self, eps: float) -> np.ndarray:
        return self.taus[self.distance <= eps + self.slack]


def scan_shifts(f, eps: float, tau_max: float, tau_step: float = DEFAULT_TAU_STEP,
                window: TimeGrid | None = None, K=None,
                tau_min: float = 0.0) -> ShiftScan:
    """Sup-metric shift distances for every scanned tau.

    Shifts whose subsampled distance already exceeds ``eps`` are reported
    with that (lower-bound) distance, shifts discarded by the Lipschitz
    coarse pass get ``inf``; everything else is evaluated on the full
    window, so ``periods(eps)`` matches an exhaustive scan exactly.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    window = _default_window(f, tau_max) if window is None else window
    _check_overlap(f, window, tau_max)
    sh = _Shifter(f, window, K)
    slack = _interp_slack(f, tau_step) if isinstance(f, GridFunction) else 0.0
    taus = tau_grid(tau_max, tau_step, tau_min)
    stride = max(1, window.n // 256)
    tsub = sh.t[::stride]
    candidates = np.arange(taus.size)
    lip = _lipschitz(f) if K is None else None
    if lip is not None and taus.size > _COARSE_MIN:
        # coarse pass: D is lip-Lipschitz in tau, so a whole cell of fine
        # shifts can be discarded from one subsampled evaluation
        B = _COARSE_FACTOR
        centres = np.arange(B // 2, taus.size, B)
        dc = sh.norms(taus[centres], tsub).max(axis=1)
        live = dc - lip * B * tau_step / 2 <= eps + slack
        cells = np.nonzero(live)[0]
        idx = (cells[:, None] * B + np.arange(B)[None]).ravel()
        candidates = idx[idx < taus.size]
        dist = np.full(taus.size, np.inf)
        dist[centres] = dc
    else:
        dist = np.empty(taus.size)
    coarse = sh.norms(taus[candidates], tsub).max(axis=1)
    dist[candidates] = coarse
    keep = candidates[coarse <= eps + slack]
    if keep.size:
        dist[keep] = sh.norms(taus[keep]).max(axis=1)
    return ShiftScan(taus, dist, slack, window)


def epsilon_periods(f, eps: float, tau_max: float,
                    tau_step: float = DEFAULT_TAU_STEP,
                    window: TimeGrid | None = None, K=None) -> np.ndarray:
    """Scanned shifts ``tau`` in ``(0, tau_max]`` that are eps-periods of ``f``.

    ``f`` may be a :class:`TrigPolynomial` (exact shifts), a
    :class:`GridFunction` (linear interpolation, with the interpolation
    error added to ``eps`` as slack), a one-parameter callable, or, when
    ``K`` is given, a two-parameter callable ``f(t, y)`` in which case the
    supremum also ranges over ``y`` in ``K``.
    """
    return scan_shifts(f, eps, tau_max, tau_step, window, K).periods(eps)


# ---------------------------------------------------------------------------
# relative density


@dataclass(frozen=True)
class Density:
    verdict: bool
    max_gap: float


def relative_density(taus: Sequence[float], tau_max: float,
                     l: float | None = None) -> Density:
    """Check that every subinterval of ``(0, tau_max]`` of length ``l`` meets ``taus``.

    ``max_gap`` (boundary gaps included) is the smallest admissible ``l``;
    without ``l`` the verdict just says whether any point was found.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.size == 0:
        return Density(False, math.inf)
    if np.any(np.diff(taus) < 0):
        raise ValueError("taus must be sorted ascending")
    inner = taus[(taus > 0) & (taus <= tau_max)]
    if inner.size == 0:
        return Density(False, math.inf)
    edges = np.concatenate([[0.0], inner, [tau_max]])
    gap = float(np.max(np.diff(edges)))
    ok = True if l is None else gap <= l + 1e-12
    return Density(ok, gap)


# ---------------------------------------------------------------------------
# the Bohr test


@dataclass
class APReport:
    epsilon: float
    found_periods: list
    inclusion_length: float | None
    verdict: str
    max_gap: float
    tau_step: float
    tau_max: float
    slack: float = 0.0
    reason: str = ""
    threshold: float | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self, max_periods: int = 200) -> dict:
        d = asdict(self)
        d["n_periods"] = len(self.found_periods)
        d["found_periods"] = list(self.found_periods[:max_periods])
        if not math.isfinite(d["max_gap"]):
            d["max_gap"] = None
        return d


def find_jump(f, window: TimeGrid, eps: float) -> float | None:
    """Location of an apparent discontinuity larger than ``eps``, if any.

    A step between consecutive samples counts as a jump when it exceeds
    ``eps`` and does not spread out over the neighbouring two-step
    increments (a resolved steep ramp grows with the stencil, a jump
    does not).
    """
    if isinstance(f, TrigPolynomial):
        return None
    if isinstance(f, GridFunction):
        part = f.restrict(window.t_start, window.t_end)
        v, t = part.values, part.t
    else:
        t = window.nodes
        v = _as_2d(f(t), t)
    if v.shape[0] < 4:
        return None
    d1 = np.linalg.norm(np.diff(v, axis=0), axis=1)
    d2 = np.linalg.norm(v[2:] - v[:-2], axis=1)
    left = np.concatenate([[0.0], d2])    # spans i-1 .. i+1
    right = np.concatenate([d2, [0.0]])   # spans i .. i+2
    jump = (d1 > eps) & (d1 > 0.75 * np.maximum(left, right))
    idx = np.nonzero(jump)[0]
    return None if idx.size == 0 else float(t[idx[0]])


def ap_test(f, eps: float, tau_max: float, tau_step: float = DEFAULT_TAU_STEP,
            window: TimeGrid | None = None, K=None,
            l_max: float | None = None) -> APReport:
    """Bohr almost-periodicity test at tolerance ``eps``.

    Passes when the scanned eps-periods are relatively dense in
    ``(0, tau_max]`` with inclusion length at most ``l_max`` (default
    ``tau_max / 3``, i.e. at least three inclusion intervals observed) and
    no unresolved jump is seen in the sampled data.
    """
    scan = scan_shifts(f, eps, tau_max, tau_step, window, K)
    taus = scan.periods(eps)
    l_max = tau_max / 3 if l_max is None else l_max
    dens = relative_density(taus, tau_max)
    rep = APReport(eps, [float(x) for x in taus], None, "fail", dens.max_gap,
                   tau_step, tau_max, scan.slack)
    if taus.size == 0:
        rep.reason = "no eps-periods found"
        return rep
    if scan.window.length < taus[0]:
        rep.verdict = "inconclusive"
        rep.reason = "window shorter than the smallest candidate period"
        return rep
    if K is None:
        jump = find_jump(f, scan.window, eps)
        if jump is not None:
            rep.reason = f"discontinuity larger than eps near t={jump:.6g}"
            return rep
    if dens.max_gap <= l_max:
        rep.verdict = "pass"
        rep.inclusion_length = dens.max_gap
    else:
        rep.reason = (f"largest gap {dens.max_gap:.6g} exceeds "
                      f"inclusion bound {l_max:.6g}")
    return rep


# ---------------------------------------------------------------------------
# asymptotic almost periodicity


@dataclass
class AAPDecomposition:
    g: GridFunction
    phi: GridFunction
    residual: float
    phi_tail: float
    translates: list = field(default_factory=list)


def _clusters(taus: np.ndarray, dist: np.ndarray, gap: float):
    """Best (closest) shift of each run of consecutive scanned periods."""
    reps = []
    start = 0
    for i in range(1, taus.size + 1):
        if i == taus.size or taus[i] - taus[i - 1] > gap:
            j = start + int(np.argmin(dist[start:i]))
            reps.append((float(taus[j]), float(dist[j])))
            start = i
    return reps


def aap_decompose(f: GridFunction, eps: float, burn_in: float | None = None,
                  tau_max: float | None = None,
                  tau_step: float | None = None,
                  n_translates: int = 3) -> AAPDecomposition:
    """Split ``f = g + phi`` into an almost periodic part and a decaying part.

    Near-periods ``tau > burn_in`` are detected on the late part of the
    window; ``g(t)`` is the componentwise median of the ``n_translates``
    translates ``f(t +- tau_n)`` that are evaluated furthest out in time
    (hence least affected by the decaying part), and ``phi = f - g``.
    """
    grid = f.grid
    T0, T = grid.t_start, grid.t_end
    burn_in = T0 + grid.length / 4 if burn_in is None else burn_in
    tau_max = (T - burn_in) / 2 if tau_max is None else tau_max
    tau_step = grid.step if tau_step is None else tau_step
    if T - tau_max - burn_in <= grid.step:
        raise DecompositionError("decomposition failed: window too short")
    window = grid.sub(burn_in, T - tau_max)
    scan = scan_shifts(f, eps, tau_max, tau_step, window,
                       tau_min=max(burn_in - T0, tau_step))
    ok = scan.distance <= eps + scan.slack
    taus, dist = scan.taus[ok], scan.distance[ok]
    if taus.size < 3:
        raise DecompositionError(
            "decomposition failed: no candidate AP part "
            f"({taus.size} near-periods above burn-in)")
    reps = _clusters(taus, dist, 1.5 * tau_step)
    if len(reps) < n_translates:
        order = np.argsort(dist)[:n_translates]
        reps = [(float(taus[i]), float(dist[i])) for i in sorted(order)]
    offsets = np.array([r[0] for r in reps])

    spl = f.spline()
    t = grid.nodes
    cand = np.concatenate([t[:, None] + offsets[None], t[:, None] - offsets[None]],
                          axis=1)
    valid = (cand >= burn_in - 1e-12) & (cand <= T + 1e-12)
    if not np.all(valid.any(axis=1)):
        raise DecompositionError(
            "decomposition failed: some nodes have no admissible translate")
    key = np.where(valid, cand, -np.inf)
    pick = np.argsort(-key, axis=1)[:, :n_translates]
    pts = np.take_along_axis(key, pick, axis=1)
    vals = spl(np.where(np.isfinite(pts), pts, T))          # (n, k, d)
    vals = np.where(np.isfinite(pts)[..., None], vals, np.nan)
    g_vals = np.nanmedian(vals, axis=1)
    g = GridFunction(grid, g_vals)
    phi = GridFunction(grid, f.values - g_vals)
    residual = float(np.abs(f.values - g.values - phi.values).max())
    tail = phi.restrict(T - grid.length / 3, T).sup_norm()
    return AAPDecomposition(g, phi, residual, tail, reps)


@dataclass
class Extension:
    function: object
    tau_star: float | None
    error_bound: float
    approximate: bool


def extend_to_line(f, W: float = 0.0, eps: float = 1e-2,
                   tau_step: float = 1e-3, tau_max: float | None = None) -> Extension:
    """Extend an almost periodic function given on ``[t0, T]`` to the left.

    Trig-backed input is returned unchanged (it already lives on the whole
    line).  Sampled input is continued to ``[t0 - W, t0]`` by
    ``F(t) = f(t + tau*)`` with the best scanned near-period ``tau* > W``;
    the reported bound is the measured shift distance of ``tau*``.  The
    numeric branch is a heuristic surrogate, flagged ``approximate``.
    """
    if isinstance(f, TrigPolynomial):
        return Extension(f, None, 0.0, False)
    if not isinstance(f, GridFunction):
        raise TypeError("extend_to_line expects a TrigPolynomial or GridFunction")
    g = f.grid
    tau_max = g.length / 2 if tau_max is None else tau_max
    if W >= tau_max:
        raise ValueError(
            f"no near-period exceeding W={W:g} can be scanned (tau_max={tau_max:g})")
    scan = scan_shifts(f, eps, tau_max, tau_step, tau_min=W)
    ok = scan.distance <= eps + scan.slack
    if not ok.any():
        raise ValueError(f"no eps-period exceeding W={W:g} found")
    i = int(np.argmin(np.where(ok, scan.distance, np.inf)))
    tau = float(scan.taus[i])
    n_left = math.ceil(W / g.step - 1e-9)
    new = TimeGrid(g.t_start - n_left * g.step, g.t_end, g.step)
    t_left = new.nodes[:n_left]
    left = f.spline()(t_left + tau) if n_left else np.empty((0, f.dim))
    vals = np.concatenate([left, f.values], axis=0)
    return Extension(GridFunction(new, vals), tau,
                     float(scan.distance[i] + scan.slack), True)


# ---------------------------------------------------------------------------
# vanishing at infinity


@dataclass
class TailReport:
    verdict: bool
    block_sups: list
    final_sup: float
    tol: float


def c0_tail_test(phi: GridFunction, tol: float, n_blocks: int = 6) -> TailReport:
    """Does ``phi`` look like it vanishes at infinity on this window?

    The window is cut into ``n_blocks`` equal blocks; the test passes when
    the sup over the last block is below ``tol`` and no block sup exceeds
    twice its predecessor (up to a floor of ``tol * 1e-3`` for round-off).
    """
    if n_blocks < 3:
        raise ValueError("need at least 3 tail blocks")
    norms = phi.norms()
    blocks = np.array_split(norms, n_blocks)
    sups = [float(b.max()) for b in blocks]
    floor = 1e-3 * tol
    mono = all(b <= 2 * a + floor for a, b in zip(sups, sups[1:]))
    return TailReport(bool(sups[-1] < tol and mono), sups, sups[-1], tol)
