"""Stepanov norms, Stepanov almost periodicity and the composition calculus."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from .ap_analysis import (_COARSE_FACTOR, _COARSE_MIN, APReport,
                          DEFAULT_TAU_STEP, _lipschitz, _Shifter,
                          relative_density, tau_grid)
from .grid import GridFunction, TimeGrid, TrigPolynomial

_CHUNK = 4_000_000


def _unit_steps(grid: TimeGrid) -> int:
    m = 1.0 / grid.step
    if abs(m - round(m)) > 1e-9 * max(1.0, m):
        raise ValueError(f"grid step {grid.step!r} does not divide 1")
    return int(round(m))


def _window_integrals(a: np.ndarray, h: float, m: int) -> np.ndarray:
    """Trapezoid integrals of ``a`` over every run of ``m`` steps (last axis)."""
    c = np.concatenate([np.zeros(a.shape[:-1] + (1,)),
                        np.cumsum(0.5 * h * (a[..., 1:] + a[..., :-1]), axis=-1)],
                       axis=-1)
    return c[..., m:] - c[..., :-m]


def stepanov_norm(f, p: float, grid: TimeGrid | None = None) -> float:
    """``sup_t (int_t^{t+1} ||f(s)||^p ds)^{1/p}`` over grid shifts.

    Window integrals use the composite trapezoid rule on the native grid,
    whose step must divide 1.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(f, GridFunction):
        gf = f
    else:
        if grid is None:
            raise ValueError("a sampling grid is required for non-grid input")
        gf = GridFunction(grid, _sample(f, grid.nodes))
    if gf.grid.length < 1 - 1e-12:
        raise ValueError("window shorter than 1 second")
    m = _unit_steps(gf.grid)
    vals = _window_integrals(gf.norms() ** p, gf.grid.step, m)
    return float(vals.max() ** (1.0 / p))


def _sample(f, t):
    v = np.asarray(f(t), dtype=float)
    return v[:, None] if v.ndim == 1 else v


# ---------------------------------------------------------------------------
# lift metric


def _pointwise(sh: _Shifter, taus: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``||f(t + tau) - f(t)||`` with shape ``(tau, t, group)``."""
    if sh.kind == "trig":
        return sh.norms(taus, t)[:, :, None]
    f0 = sh.base(t)
    tt = t[None, :] + taus[:, None]
    f1 = sh.base(tt.ravel()).reshape(tt.shape + f0.shape[1:])
    return np.linalg.norm(f1 - f0[None], axis=-1)


def _chunks(n_tau: int, width: int):
    step = max(1, _CHUNK // max(1, width))
    for s in range(0, n_tau, step):
        yield slice(s, s + step)


def _lift_full(sh, p, taus, ext, m, G) -> np.ndarray:
    out = np.empty(len(taus))
    for sl in _chunks(len(taus), ext.n * G):
        nrm = np.moveaxis(_pointwise(sh, taus[sl], ext.nodes), -1, 1)
        ints = _window_integrals(nrm ** p, ext.step, m)
        out[sl] = ints.max(axis=(1, 2)) ** (1.0 / p)
    return out


def _lift_starts(sh, p, taus, ext, m, G, starts) -> np.ndarray:
    """Same supremum restricted to the given start indices (a lower bound)."""
    idx = (starts[:, None] + np.arange(m + 1)[None, :]).ravel()
    t = ext.nodes[idx]
    out = np.empty(len(taus))
    h = ext.step
    for sl in _chunks(len(taus), t.size * G):
        a = _pointwise(sh, taus[sl], t) ** p
        a = a.reshape(a.shape[0], starts.size, m + 1, a.shape[-1])
        ints = h * (a[:, :, 1:-1].sum(axis=2) + 0.5 * (a[:, :, 0] + a[:, :, -1]))
        out[sl] = ints.max(axis=(1, 2)) ** (1.0 / p)
    return out


def lift_distances(f, p: float, taus: np.ndarray, window: TimeGrid,
                   K=None, eps: float | None = None) -> np.ndarray:
    """``sup_t (int_0^1 ||f(t + tau + s) - f(t + s)||^p ds)^{1/p}`` per tau.

    ``t`` runs over the nodes of ``window``; the integrals need samples up
    to ``window.t_end + 1``.  With ``K`` the supremum is also over the
    parameter sample.  When ``eps`` is given, shifts that provably exceed
    it (from a subset of start points, or a Lipschitz bound in ``tau``)
    are reported with a lower bound or ``inf`` instead of being evaluated
    in full, so ``dist <= eps`` is unchanged.
    """
    taus = np.asarray(taus, dtype=float)
    m = _unit_steps(window)
    ext = TimeGrid(window.t_start, window.t_end + 1.0, window.step)
    sh = _Shifter(f, ext, K)
    G = 1 if K is None else len(K)
    if eps is None or window.n <= 64:
        return _lift_full(sh, p, taus, ext, m, G)
    starts = np.unique(np.linspace(0, window.n - 1, 64).astype(int))
    dist = np.full(taus.size, np.inf)
    cand = np.arange(taus.size)
    lip = _lipschitz(f) if K is None else None
    if lip is not None and taus.size > _COARSE_MIN:
        B = _COARSE_FACTOR
        centres = np.arange(B // 2, taus.size, B)
        dc = _lift_starts(sh, p, taus[centres], ext, m, G, starts)
        dist[centres] = dc
        # cell members are within lip * B * step / 2 of their centre
        half = lip * B * (taus[1] - taus[0]) / 2 if taus.size > 1 else 0.0
        cells = np.nonzero(dc - half <= eps)[0]
        cand = (cells[:, None] * B + np.arange(B)[None]).ravel()
        cand = cand[cand < taus.size]
    lower = _lift_starts(sh, p, taus[cand], ext, m, G, starts)
    dist[cand] = lower
    keep = cand[lower <= eps * (1 + 1e-9)]
    if keep.size:
        dist[keep] = _lift_full(sh, p, taus[keep], ext, m, G)
    return dist


@dataclass
class StepanovReport:
    p: float
    norm: float
    ap: APReport | None = None
    aap: APReport | None = None
    threshold: float | None = None

    @property
    def ap_verdict(self) -> str | None:
        return None if self.ap is None else self.ap.verdict

    @property
    def aap_verdict(self) -> str | None:
        return None if self.aap is None else self.aap.verdict

    @property
    def passed(self) -> bool:
        rep = self.aap if self.aap is not None else self.ap
        return rep is not None and rep.passed

    def to_dict(self) -> dict:
        return {
            "p": self.p, "norm": self.norm,
            "ap_verdict": self.ap_verdict, "aap_verdict": self.aap_verdict,
            "threshold": self.threshold,
            "ap": None if self.ap is None else self.ap.to_dict(),
            "aap": None if self.aap is None else self.aap.to_dict(),
        }


def _lift_window(f, tau_max: float, window: TimeGrid | None) -> TimeGrid:
    if window is not None:
        if isinstance(f, GridFunction) and \
                window.t_end + tau_max + 1 > f.grid.t_end + 1e-9:
            raise ValueError("insufficient overlap for the lift metric")
        return window
    if not isinstance(f, GridFunction):
        raise ValueError("a window is required for non-grid input")
    g = f.grid
    if g.t_end - tau_max - 1 <= g.t_start + g.step:
        raise ValueError(
            f"insufficient overlap: grid length {g.length:g} too short for "
            f"tau_max {tau_max:g} plus the unit window")
    return g.sub(g.t_start, g.t_end - tau_max - 1)


def _lift_report(f, p, eps, tau_max, tau_step, window, K, l_max) -> APReport:
    taus = tau_grid(tau_max, tau_step)
    dist = lift_distances(f, p, taus, window, K, eps=eps)
    found = taus[dist <= eps]
    l_max = tau_max / 3 if l_max is None else l_max
    dens = relative_density(found, tau_max)
    rep = APReport(eps, [float(x) for x in found], None, "fail", dens.max_gap,
                   tau_step, tau_max)
    if found.size == 0:
        rep.reason = "no eps-periods of the lift found"
    elif dens.max_gap <= l_max:
        rep.verdict = "pass"
        rep.inclusion_length = dens.max_gap
    else:
        rep.reason = (f"largest gap {dens.max_gap:.6g} exceeds "
                      f"inclusion bound {l_max:.6g}")
    return rep


def _norm_of(f, p, window: TimeGrid, K=None) -> float:
    grid = TimeGrid(window.t_start, window.t_end + 1.0, window.step)
    if K is None:
        src = f.restrict(grid.t_start, grid.t_end) if isinstance(f, GridFunction) else f
        return stepanov_norm(src, p, grid)
    return max(stepanov_norm(lambda t, y=y: f(t, y), p, grid) for y in K)


def sp_ap_test(f, p: float, eps: float, tau_max: float,
               tau_step: float = DEFAULT_TAU_STEP,
               window: TimeGrid | None = None, K=None,
               l_max: float | None = None) -> StepanovReport:
    """Stepanov ``S^p`` almost periodicity: the Bohr test applied to the lift.

    Distances are measured in the lift metric
    ``(int_0^1 ||f(t1 + s) - f(t2 + s)||^p ds)^{1/p}``; discontinuous input
    is fine here.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    window = _lift_window(f, tau_max, window)
    rep = _lift_report(f, p, eps, tau_max, tau_step, window, K, l_max)
    return StepanovReport(p, _norm_of(f, p, window, K), ap=rep)


def sp_aap_test(f, p: float, eps: float, tau_max: float,
                tau_step: float = DEFAULT_TAU_STEP,
                window: TimeGrid | None = None, K=None,
                l_max: float | None = None,
                n_thresholds: int = 5) -> StepanovReport:
    """Asymptotic Stepanov test: eps-periods of the lift only for ``t >= M``.

    Thresholds ``M`` are tried from the window start up to half the window;
    the first one at which the lift passes the Bohr test is reported.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    window = _lift_window(f, tau_max, window)
    norm = _norm_of(f, p, window, K)
    last = None
    for M in window.t_start + np.linspace(0, window.length / 2, n_thresholds):
        sub = window.sub(M, window.t_end)
        rep = _lift_report(f, p, eps, tau_max, tau_step, sub, K, l_max)
        rep.threshold = float(sub.t_start)
        last = rep
        if rep.passed:
            return StepanovReport(p, norm, aap=rep, threshold=float(sub.t_start))
    return StepanovReport(p, norm, aap=last)


# ---------------------------------------------------------------------------
# exponents and Lipschitz data


@dataclass(frozen=True)
class StepanovExponents:
    p: object
    r: object = None
    q: object = None
    q_conj: object = None


def _is_exact(x) -> bool:
    return isinstance(x, (int, Rational)) and not isinstance(x, bool)


def composition_exponent(p, r) -> StepanovExponents:
    """``q = pr / (p + r)`` and its conjugate for the Lipschitz composition.

    Integer or :class:`~fractions.Fraction` input is handled in exact
    arithmetic.  ``q_conj`` is ``inf`` on the boundary ``r = p / (p - 1)``
    (where ``q = 1``), else ``pr / (pr - p - r)``.
    """
    exact = _is_exact(p) and _is_exact(r)
    P, R = (Fraction(p), Fraction(r)) if exact else (float(p), float(r))
    if P <= 1:
        raise ValueError("composition needs p > 1")
    threshold = P / (P - 1)
    if R < max(P, threshold) and not (not exact and
                                      math.isclose(R, max(P, threshold))):
        raise ValueError(
            f"r={r} below threshold max(p, p/(p-1)) = {max(P, threshold)}")
    q = P * R / (P + R)
    denom = P * R - P - R
    if denom == 0 or (not exact and abs(denom) < 1e-12 * P * R):
        qc = math.inf
        q = Fraction(1) if exact else 1.0
    else:
        qc = P * R / denom
    return StepanovExponents(P, R, q, qc)


def conjugate(p) -> float:
    """Hoelder conjugate, with ``1 -> inf`` and ``inf -> 1``."""
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


@dataclass(frozen=True, eq=False)
class LipschitzData:
    """Either a constant ``L`` or a sampled scalar ``L_f(t) >= 0``."""

    kind: str
    L: float = 0.0
    L_f: GridFunction | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if not (self.L >= 0 and math.isfinite(self.L)):
                raise ValueError("L must be finite and >= 0")
        elif self.kind == "sampled":
            if self.L_f is None or self.L_f.dim != 1:
                raise ValueError("sampled Lipschitz data needs a scalar L_f")
            if np.any(self.L_f.values < 0):
                raise ValueError("L_f must be >= 0")
        else:
            raise ValueError(f"unknown Lipschitz kind {self.kind!r}")

    @classmethod
    def constant(cls, L: float) -> "LipschitzData":
        return cls("constant", float(L))

    @classmethod
    def sampled(cls, L_f: GridFunction) -> "LipschitzData":
        return cls("sampled", L_f=L_f)

    def sup(self) -> float:
        return self.L if self.kind == "constant" else float(self.L_f.values.max())

    def stepanov(self, r) -> float:
        """``||L_f||_{S^r}`` (just ``L`` for constant data)."""
        if self.kind == "constant":
            return self.L
        if math.isinf(r):
            return self.sup()
        return stepanov_norm(self.L_f, float(r))

    def at(self, t) -> np.ndarray:
        if self.kind == "constant":
            return np.full(np.shape(t), self.L)
        return self.L_f(t)[..., 0]


# ---------------------------------------------------------------------------
# composition principle


@dataclass
class CompositionReport:
    mode: str
    exponent: float
    hypotheses: dict = field(default_factory=dict)
    conclusion: StepanovReport | None = None
    verdict: str = "hypotheses not established"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "exponent": float(self.exponent),
            "verdict": self.verdict, "hypotheses": self.hypotheses,
            "conclusion": None if self.conclusion is None
            else self.conclusion.to_dict(),
        }


def check_lipschitz(f, K, lipschitz: LipschitzData, times: np.ndarray,
                    n_pairs: int = 1000, seed: int = 0) -> dict:
    """Empirical check of ``||f(t,x) - f(t,y)|| <= L(t) ||x - y||`` on ``K``."""
    rng = np.random.default_rng(seed)
    K = np.asarray(K, dtype=float).reshape(len(K), -1)
    if len(K) < 2:
        return {"passed": True, "pairs": 0, "worst_ratio": 0.0}
    i = rng.integers(0, len(K), n_pairs)
    j = rng.integers(0, len(K), n_pairs)
    t = rng.choice(times, n_pairs)
    gap = np.linalg.norm(K[i] - K[j], axis=1)
    use = gap > 0
    i, j, t, gap = i[use], j[use], t[use], gap[use]
    fi = _eval_pointwise(f, t, K[i])
    fj = _eval_pointwise(f, t, K[j])
    lhs = np.linalg.norm(fi - fj, axis=1)
    bound = lipschitz.at(t) * gap
    ratio = float(np.max(lhs / np.maximum(bound, 1e-300))) if lhs.size else 0.0
    ok = bool(np.all(lhs <= bound * (1 + 1e-9) + 1e-12))
    return {"passed": ok, "pairs": int(lhs.size), "worst_ratio": ratio}


def _eval_pointwise(f, t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``f(t_i, y_i)`` row by row, vectorised when ``f`` broadcasts."""
    try:
        out = np.asarray(f(t, y), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.shape[0] == len(t):
            return out
    except (ValueError, TypeError, IndexError):
        pass
    return np.stack([_sample(lambda s, v=v: f(s, v), np.array([ti]))[0]
                     for ti, v in zip(t, y)])


def compose_and_verify(f, x, exponents: StepanovExponents,
                       lipschitz: LipschitzData, eps: float, grid: TimeGrid,
                       tau_max: float, tau_step: float = DEFAULT_TAU_STEP,
                       mode: str = "AP", n_K: int = 16, n_pairs: int = 1000,
                       seed: int = 0) -> CompositionReport:
    """Check the composition-principle hypotheses and, if they hold, its conclusion.

    ``f(t, y)`` is a two-parameter callable, ``x`` a trajectory sampled on
    ``grid``.  In ``AP`` mode the composed function ``t -> f(t, x(t))`` is
    tested for ``S^q`` almost periodicity (``q`` from
    :func:`composition_exponent` under sampled Lipschitz data, ``p`` under a
    constant Lipschitz bound); in ``AAP`` mode the asymptotic tests are used
    throughout.
    """
    if mode not in ("AP", "AAP"):
        raise ValueError("mode must be 'AP' or 'AAP'")
    p = float(exponents.p)
    if lipschitz.kind == "sampled":
        if exponents.r is None:
            raise ValueError("sampled Lipschitz data needs the exponent r")
        q = float(composition_exponent(exponents.p, exponents.r).q)
    else:
        q = p
    xs = x if isinstance(x, GridFunction) else GridFunction(grid, _sample(x, grid.nodes))
    n = xs.grid.n
    idx = np.unique(np.linspace(0, n - 1, min(n_K, n)).astype(int))
    K = [xs.values[i] for i in idx]
    win = TimeGrid(grid.t_start, grid.t_end - tau_max - 1, grid.step)
    test = sp_ap_test if mode == "AP" else sp_aap_test

    hyp = {}
    f_rep = test(f, p, eps, tau_max, tau_step, window=win, K=K)
    hyp["f_two_parameter"] = {"passed": f_rep.passed, "p": p}
    x_rep = test(xs, p, eps, tau_max, tau_step, window=win)
    hyp["x_trajectory"] = {"passed": x_rep.passed, "p": p}
    hyp["lipschitz"] = check_lipschitz(f, K, lipschitz, grid.nodes, n_pairs, seed)
    if lipschitz.kind == "sampled":
        hyp["lipschitz"]["S_r_norm"] = lipschitz.stepanov(float(exponents.r))
    rep = CompositionReport(mode, q, hyp)
    if not all(h["passed"] for h in hyp.values()):
        return rep
    composed = GridFunction(xs.grid, _eval_pointwise(f, xs.t, xs.values))
    rep.conclusion = test(composed, q, eps, tau_max, tau_step, window=win)
    rep.verdict = "pass" if rep.conclusion.passed else "fail"
    return rep
