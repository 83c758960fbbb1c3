"""Contraction certificates and Picard iteration for the mild-solution maps.

Two maps are iterated:

* ``(Lambda u)(t) = int_{-inf}^t T(t - s) f(s, u(s)) ds`` (almost periodic
  solutions on the whole line), and
* ``(Upsilon u)(t) = T(t) u0 + int_0^t T(t - s) f(s, u(s)) ds`` (the initial
  value problem, whose solution is asymptotically almost periodic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from .ap_analysis import DEFAULT_TRIG_WINDOW, ap_test, scan_shifts
from .convolution import (QuadratureConfig, _convolve, _history_grid,
                          default_tail)
from .grid import GridFunction, TimeGrid, TrigPolynomial
from .operators import KernelEnvelope, OperatorFamily, block_norm_sum
from .stepanov import (LipschitzData, StepanovExponents, composition_exponent,
                       conjugate, sp_aap_test)


class CertificateError(RuntimeError):
    pass


class ContractionViolated(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SemilinearProblem:
    """``u' in A u + f(t, u)`` with the solution family of ``A``.

    ``f(t, u)`` takes times ``(n,)`` and states ``(n, d)`` and returns
    ``(n, d)``.  ``forcing`` (optional) is the almost periodic part of
    ``f``; it supplies the shift used to continue iterates below the
    window in AP mode, unless ``period`` is given directly.
    """

    family: OperatorFamily
    f: Callable
    lipschitz: LipschitzData
    window: TimeGrid
    mode: str = "AP"
    u0: np.ndarray | None = None
    exponents: StepanovExponents | None = None
    forcing: object = None
    period: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("AP", "DFP"):
            raise ValueError("mode must be 'AP' or 'DFP'")
        if self.mode == "AP" and self.u0 is not None:
            raise ValueError("AP mode takes no initial value")
        if self.mode == "DFP":
            if self.u0 is None:
                raise ValueError("DFP mode needs an initial value")
            u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
            if u0.shape != (self.family.dim,):
                raise ValueError(f"u0 must have shape ({self.family.dim},)")
            check_admissible(self.family, u0)
            object.__setattr__(self, "u0", u0)

    @property
    def dim(self) -> int:
        return self.family.dim

    @property
    def envelope(self) -> KernelEnvelope:
        return self.family.envelope

    def with_mode(self, mode: str, u0=None, **kw) -> "SemilinearProblem":
        fields = dict(family=self.family, f=self.f, lipschitz=self.lipschitz,
                      window=self.window, mode=mode, u0=u0,
                      exponents=self.exponents, forcing=self.forcing,
                      period=self.period, name=self.name)
        fields.update(kw)
        return SemilinearProblem(**fields)


def check_admissible(family: OperatorFamily, u0: np.ndarray, tol: float = 1e-10):
    """``u0`` must lie in the range of the regular projector ``T(0)``."""
    P = family.projector()
    gap = float(np.linalg.norm(P @ u0 - u0))
    if gap > tol * max(1.0, float(np.linalg.norm(u0))):
        raise ValueError(
            f"u0 not in the range of the regular projector (gap {gap:.3g})")


# ---------------------------------------------------------------------------
# certificates


def kret_threshold(M: float, c: float, beta: float) -> float:
    """Largest admissible constant Lipschitz bound, ``c^beta / (M Gamma(beta))``."""
    return float(c ** beta / (M * gamma_fn(beta)))


def compute_Mn(lipschitz: LipschitzData | float, M: float, c: float,
               beta: float, n: int, method: str = "auto",
               t_max: float | None = None, h: float = 0.01,
               n_samples: int = 20000, seed: int = 0) -> float:
    """``M_n = M^n sup_t int ... int prod k(gaps) L(x_j)``, ``k(s) = e^{-cs} s^{beta-1}``.

    ``method``: ``closed`` (constant ``L`` only), ``quadrature`` (iterated
    convolutions on a time grid, sup over the grid), ``montecarlo`` (gaps
    drawn from Gamma(beta, c)) or ``auto`` (closed form for constant
    ``L``, quadrature for ``n <= 3``, Monte Carlo beyond).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(lipschitz, LipschitzData):
        lipschitz = LipschitzData.constant(lipschitz)
    if lipschitz.sup() == 0:
        return 0.0
    if method == "auto":
        if lipschitz.kind == "constant":
            method = "closed"
        else:
            method = "quadrature" if n <= 3 else "montecarlo"
    if method == "closed":
        if lipschitz.kind != "constant":
            raise ValueError("closed form needs a constant Lipschitz bound")
        return float((lipschitz.L / kret_threshold(M, c, beta)) ** n)
    L_f = _lipschitz_on_grid(lipschitz, c, t_max, h)
    if method == "quadrature":
        return float(M ** n * _iterated_sup(L_f, c, beta, n))
    if method == "montecarlo":
        return float(M ** n * _montecarlo_sup(L_f, c, beta, n, n_samples, seed))
    raise ValueError(f"unknown method {method!r}")


def _lipschitz_on_grid(lip: LipschitzData, c: float, t_max, h) -> GridFunction:
    if lip.kind == "sampled":
        return lip.L_f
    t_max = 50.0 / c if t_max is None else t_max
    g = TimeGrid(0.0, h * math.ceil(t_max / h), h)
    return GridFunction(g, np.full(g.n, lip.L))


def _iterated_sup(L_f: GridFunction, c: float, beta: float, n: int) -> float:
    k = KernelEnvelope(1.0, c, beta)
    cfg = QuadratureConfig(richardson=False)
    phi = np.ones(L_f.grid.n)
    for _ in range(n):
        phi = _convolve(k, GridFunction(L_f.grid, L_f.values[:, 0] * phi), cfg)[:, 0]
    return float(phi.max())


def _montecarlo_sup(L_f: GridFunction, c, beta, n, n_samples, seed) -> float:
    rng = np.random.default_rng(seed)
    gaps = rng.gamma(beta, 1.0 / c, size=(n_samples, n))
    S = np.cumsum(gaps, axis=1)
    t0 = L_f.grid.t_start
    ts = L_f.t[:: max(1, L_f.grid.n // 200)]
    scale = (gamma_fn(beta) * c ** (-beta)) ** n
    best, best_se = 0.0, 0.0
    for t in ts:
        x = t - S
        inside = x[:, -1] >= t0
        vals = np.zeros(n_samples)
        if inside.any():
            xs = x[inside]
            vals[inside] = np.prod(L_f(xs.ravel())[:, 0].reshape(xs.shape), axis=1)
        m = vals.mean()
        if m > best:
            best, best_se = m, vals.std(ddof=1) / math.sqrt(n_samples)
    if best > 0 and 1.96 * best_se > 0.1 * best:
        raise ValueError("Monte Carlo confidence interval wider than 10%; "
                         "increase samples")
    return scale * best


@dataclass
class ContractionReport:
    q_conj: float | None
    M_sum: float | None
    lipschitz_scale: float
    rho: float | None
    kret_threshold: float
    M_n: list
    weissinger_sum: float
    verdicts: dict
    rho_zeljezo: float | None = None
    rho_zeljeznica: float | None = None
    notes: list = field(default_factory=list)

    @property
    def ap_certified(self) -> bool:
        return self.rho is not None and self.rho < 1

    @property
    def dfp_certified(self) -> bool:
        return self.verdicts["stepa"] == "pass" or self.verdicts["kret"] == "pass"

    def dfp_rate(self) -> tuple[int, float] | None:
        """``(n, M_n)`` for the first ``M_n < 1``."""
        for i, m in enumerate(self.M_n, start=1):
            if m < 1:
                return i, m
        return None

    def to_dict(self) -> dict:
        return {
            "q_conj": self.q_conj, "M_sum": self.M_sum,
            "lipschitz_scale": self.lipschitz_scale, "rho": self.rho,
            "rho_zeljezo": self.rho_zeljezo,
            "rho_zeljeznica": self.rho_zeljeznica,
            "kret_threshold": self.kret_threshold, "M_n": list(self.M_n),
            "weissinger_sum": self.weissinger_sum,
            "verdicts": dict(self.verdicts), "notes": list(self.notes),
        }


def _default_p(beta: float) -> float:
    # p = 1 pairs with q' = inf, which is only integrable for beta = 1
    return 1.0 if beta == 1 else math.inf


def _integrable(beta: float, qc: float) -> bool:
    return beta == 1 if math.isinf(qc) else qc * (beta - 1.0) > -1.0


def contraction_report(problem: SemilinearProblem, n_max: int = 5,
                       seed: int = 0) -> ContractionReport:
    """All contraction constants for ``problem`` and a verdict per theorem.

    * zeljezo: ``M_sum(q') ||L_f||_{S^r} < 1`` with ``q'`` from the
      composition exponents (sampled Lipschitz data);
    * zeljeznica: ``M_sum(p') L < 1`` for a constant (or sup) bound;
    * kret: ``L < c^beta / (M Gamma(beta))``;
    * stepa: some ``M_n < 1``, ``n <= n_max``;
    * weissinger: ``sum M_n`` converges (geometric ratio below one).
    """
    env = problem.envelope
    M, c, beta = env.M, env.c, env.beta
    lip = problem.lipschitz
    ex = problem.exponents
    verdicts = {}
    notes = []
    rho_z = rho_zn = None
    qc_z = qc_zn = None
    Msum_z = Msum_zn = None
    scale = lip.sup()

    if lip.kind == "sampled":
        if ex is None or ex.r is None:
            verdicts["zeljezo"] = "hypotheses fail"
            notes.append("sampled Lipschitz data without exponents (p, r)")
        else:
            ce = composition_exponent(ex.p, ex.r)
            qc_z = float(ce.q_conj)
            if _integrable(beta, qc_z):
                Msum_z = block_norm_sum(env, qc_z).total
                scale = lip.stepanov(float(ex.r))
                rho_z = Msum_z * scale
                verdicts["zeljezo"] = "pass" if rho_z < 1 else "fail"
            else:
                verdicts["zeljezo"] = "hypotheses fail"
                notes.append(f"q'={qc_z} violates q'(1 - beta) < 1 for beta={beta}")
    else:
        verdicts["zeljezo"] = "not applicable"

    p = float(ex.p) if ex is not None else _default_p(beta)
    qc_zn = conjugate(p)
    if _integrable(beta, qc_zn):
        Msum_zn = block_norm_sum(env, qc_zn).total
        rho_zn = Msum_zn * lip.sup()
        verdicts["zeljeznica"] = "pass" if rho_zn < 1 else "fail"
    else:
        verdicts["zeljeznica"] = "hypotheses fail"
        notes.append(f"q'={qc_zn} violates q'(1 - beta) < 1 for beta={beta}")

    candidates = [(r, q, s) for r, q, s in
                  ((rho_z, qc_z, Msum_z), (rho_zn, qc_zn, Msum_zn)) if r is not None]
    if candidates:
        rho, qc, Msum = min(candidates, key=lambda x: x[0])
    else:
        rho, qc, Msum = None, None, None
    if lip.kind == "constant":
        scale = lip.L

    thr = kret_threshold(M, c, beta)
    verdicts["kret"] = "pass" if lip.sup() < thr else "fail"
    Mn = [compute_Mn(lip, M, c, beta, n, seed=seed) for n in range(1, n_max + 1)]
    verdicts["stepa"] = "pass" if any(m < 1 for m in Mn) else "fail"
    if lip.kind == "constant":
        weiss_ok = Mn[0] < 1
    else:
        weiss_ok = len(Mn) >= 2 and Mn[-1] < 1 and Mn[-1] < Mn[-2]
    verdicts["weissinger"] = "pass" if weiss_ok else "fail"
    return ContractionReport(qc, Msum, float(scale), rho, thr, Mn,
                             float(sum(Mn)), verdicts, rho_z, rho_zn, notes)


# ---------------------------------------------------------------------------
# the maps


class _Map:
    """One application of the mild-solution map on a fixed grid."""

    def __init__(self, problem: SemilinearProblem, window: TimeGrid,
                 config: QuadratureConfig, shift: float | None):
        self.p = problem
        self.window = window
        self.config = config
        if problem.mode == "AP":
            env = problem.envelope
            T_tail = config.T_tail if config.T_tail is not None else default_tail(env)
            self.ext = _history_grid(window, T_tail)
            self.i0 = self.ext.index_of(window.t_start)
            self.shift = shift
            t_hist = self.ext.nodes[:self.i0]
            m = np.ceil((window.t_start - t_hist) / shift - 1e-12)
            self.t_src = t_hist + m * shift
            if self.i0 and self.t_src.max() > window.t_end + 1e-9:
                raise ValueError("window shorter than the history shift")
            self.hom = 0.0
        else:
            self.ext = window
            self.i0 = 0
            self.hom = problem.family.apply(window.nodes - window.t_start,
                                            problem.u0)

    def extend(self, u: np.ndarray) -> np.ndarray:
        if self.i0 == 0:
            return u
        hist = CubicSpline(self.window.nodes, u, axis=0)(self.t_src)
        return np.concatenate([hist, u], axis=0)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        ue = self.extend(u)
        t = self.ext.nodes
        g = np.asarray(self.p.f(t, ue), dtype=float).reshape(ue.shape)
        H = _convolve(self.p.family, GridFunction(self.ext, g), self.config)
        return self.hom + H[self.i0:self.i0 + self.window.n]


def history_shift(problem: SemilinearProblem, tau_step: float = 1e-3
                  ) -> tuple[float, float]:
    """Shift used to continue iterates below the window, and its slack.

    An explicit ``period`` wins; a commensurate trigonometric forcing gives
    its exact period; otherwise the best scanned near-period of the forcing
    up to half the window length is used and its distance is the slack.
    """
    if problem.period is not None:
        return float(problem.period), 0.0
    fo = problem.forcing
    if isinstance(fo, TrigPolynomial):
        if not np.any(fo.frequencies):
            # constant forcing: every shift is exact
            return min(1.0, problem.window.length), 0.0
        per = fo.period()
        if per is not None and per <= problem.window.length:
            return per, 0.0
    if fo is None:
        raise ValueError("AP mode needs a forcing or an explicit period "
                         "to continue iterates below the window")
    tau_max = problem.window.length / 2
    win = DEFAULT_TRIG_WINDOW if not isinstance(fo, GridFunction) else None
    scan = scan_shifts(fo, 1.0, tau_max, tau_step, window=win, tau_min=1.0)
    i = int(np.argmin(scan.distance))
    return float(scan.taus[i]), float(scan.distance[i] + scan.slack)


@dataclass
class SolveResult:
    u: GridFunction
    iterations: int
    diffs: list
    residual: float
    mode: str
    certificate: ContractionReport
    rate: float | None
    certified: bool = True
    ratios: list = field(default_factory=list)
    history_shift: float | None = None
    history_slack: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "iterations": self.iterations,
            "diffs": list(self.diffs), "ratios": list(self.ratios),
            "residual": self.residual, "rate": self.rate,
            "certified": self.certified,
            "history_shift": self.history_shift,
            "history_slack": self.history_slack,
            "certificate": self.certificate.to_dict(),
            "diagnostics": self.diagnostics,
        }


def _initial(mapper: _Map, initial) -> np.ndarray:
    n, d = mapper.window.n, mapper.p.dim
    base = np.zeros((n, d)) if mapper.p.mode == "AP" else np.array(mapper.hom)
    if initial is None:
        return base
    if isinstance(initial, GridFunction):
        return np.array(initial.values, dtype=float)
    return base + np.broadcast_to(np.asarray(initial, dtype=float), (n, d))


def _iterate(mapper: _Map, rate: float | None, step: int, tol: float,
             max_iter: int, initial=None):
    u = _initial(mapper, initial)
    diffs, ratios = [], []
    for it in range(1, max_iter + 1):
        new = mapper(u)
        diff = float(np.max(np.linalg.norm(new - u, axis=1)))
        u = new
        diffs.append(diff)
        if len(diffs) > step and diffs[-1 - step] > 10 * tol:
            ratios.append(diffs[-1] / diffs[-1 - step])
        if diff < tol:
            return u, it, diffs, ratios
    if rate is not None and ratios and max(ratios) > rate + 0.05:
        raise ContractionViolated(
            f"contraction violated numerically: ratio {max(ratios):.4g} "
            f"exceeds {rate:.4g} + 0.05")
    raise RuntimeError(f"no convergence after {max_iter} iterations "
                       f"(last diff {diffs[-1]:.3g})")


def _dfp_rate(cert: ContractionReport) -> tuple[int, float] | None:
    if cert.M_n and cert.M_n[0] < 1:
        return 1, cert.M_n[0]
    return cert.dfp_rate()


def solve_ap(problem: SemilinearProblem, tol: float = 1e-10,
             max_iter: int = 200, config: QuadratureConfig | None = None,
             initial=None, ap_eps: float | None = 0.05,
             certificate: ContractionReport | None = None) -> SolveResult:
    """Picard iteration for the whole-line map from ``u = 0``.

    Iterates are continued below the window by the history shift (see
    :func:`history_shift`).  Refuses to run without ``rho < 1``.
    """
    if problem.mode != "AP":
        raise ValueError("solve_ap needs an AP-mode problem")
    cert = contraction_report(problem) if certificate is None else certificate
    if not cert.ap_certified:
        raise CertificateError(
            f"no contraction certificate for the whole-line map (rho={cert.rho})")
    cfg = QuadratureConfig(richardson=False) if config is None else config
    shift, slack = history_shift(problem)
    mapper = _Map(problem, problem.window, cfg, shift)
    u, it, diffs, ratios = _iterate(mapper, cert.rho, 1, tol, max_iter, initial)
    residual = float(np.max(np.linalg.norm(mapper(u) - u, axis=1)))
    res = SolveResult(GridFunction(problem.window, u), it, diffs, residual, "AP",
                      cert, cert.rho, True, ratios, shift, slack)
    if ap_eps is not None:
        w = problem.window
        rep = ap_test(res.u, ap_eps, tau_max=w.length / 2, tau_step=w.step)
        res.diagnostics["ap_test"] = rep.to_dict()
    return res


def solve_dfp(problem: SemilinearProblem, tol: float = 1e-10,
              max_iter: int = 200, config: QuadratureConfig | None = None,
              force: bool = False, initial=None,
              diagnostics: bool = True,
              certificate: ContractionReport | None = None) -> SolveResult:
    """Picard iteration for the initial value map from ``T(t) u0``.

    Needs ``M_n < 1`` for some ``n`` (or the constant-bound threshold);
    with ``force`` an uncertified run is allowed and flagged.
    """
    if problem.mode != "DFP":
        raise ValueError("solve_dfp needs a DFP-mode problem")
    cert = contraction_report(problem) if certificate is None else certificate
    rate = _dfp_rate(cert)
    certified = cert.dfp_certified and rate is not None
    if not certified and not force:
        raise CertificateError("no certificate; iteration refused")
    cfg = QuadratureConfig(richardson=False) if config is None else config
    mapper = _Map(problem, problem.window, cfg, None)
    step, rho = rate if rate is not None else (1, None)
    u, it, diffs, ratios = _iterate(mapper, rho, step, tol, max_iter, initial)
    residual = float(np.max(np.linalg.norm(mapper(u) - u, axis=1)))
    per_step = None if rho is None else rho ** (1.0 / step)
    res = SolveResult(GridFunction(problem.window, u), it, diffs, residual, "DFP",
                      cert, per_step, certified, ratios)
    if diagnostics:
        w = problem.window
        try:
            rep = sp_aap_test(res.u, 1.0, 0.05, tau_max=w.length / 4,
                              tau_step=w.step)
            res.diagnostics["sp_aap_test"] = rep.to_dict()
        except ValueError as exc:
            res.diagnostics["sp_aap_test"] = {"skipped": str(exc)}
    return res


# ---------------------------------------------------------------------------
# verification


@dataclass
class Verification:
    """Post-solve checks.

    ``residual`` is ``||map(u) - u||`` on the solve grid, which the
    contraction argument bounds by ``residual_bound``; ``refined_residual``
    repeats it at doubled resolution and so also sees discretisation error
    (``quadrature_limited`` when that exceeds the contraction bound).
    """

    residual: float
    residual_bound: float
    refined_residual: float
    quadrature_limited: bool
    probe_distance: float | None = None
    probe_bound: float | None = None

    @property
    def residual_passed(self) -> bool:
        return self.residual <= self.residual_bound

    @property
    def probe_passed(self) -> bool | None:
        if self.probe_distance is None:
            return None
        return self.probe_distance <= self.probe_bound

    def to_dict(self) -> dict:
        return {"residual": self.residual, "residual_bound": self.residual_bound,
                "residual_passed": self.residual_passed,
                "refined_residual": self.refined_residual,
                "quadrature_limited": self.quadrature_limited,
                "probe_distance": self.probe_distance,
                "probe_bound": self.probe_bound,
                "probe_passed": self.probe_passed}


def map_residual(problem: SemilinearProblem, u: GridFunction,
                 refine: int = 2, config: QuadratureConfig | None = None,
                 shift: float | None = None) -> float:
    """``||u - map(u)||`` with the map evaluated on a ``refine``-times finer grid."""
    w = u.grid
    fine = TimeGrid(w.t_start, w.t_end, w.step / refine)
    cfg = QuadratureConfig(richardson=False) if config is None else config
    if problem.mode == "AP" and shift is None:
        shift, _ = history_shift(problem)
    mapper = _Map(problem, fine, cfg, shift)
    uf = u.spline()(fine.nodes)
    out = mapper(uf)[::refine]
    return float(np.max(np.linalg.norm(out - u.values, axis=1)))


def verify_solution(result: SolveResult, problem: SemilinearProblem,
                    tol: float = 1e-10, probe: bool = True,
                    config: QuadratureConfig | None = None) -> Verification:
    """Residual checks plus a perturbed-start uniqueness probe."""
    rate = result.rate
    refined = map_residual(problem, result.u, 2, config, result.history_shift)
    if rate is not None and rate < 1:
        bound = result.diffs[-1] / (1.0 - rate)
    else:
        bound = math.inf
    ver = Verification(result.residual, float(bound), refined, bool(refined > bound))
    if probe and rate is not None and rate < 1:
        e = np.zeros(problem.dim)
        e[0] = 1.0
        if problem.mode == "AP":
            other = solve_ap(problem, tol, config=config, initial=e, ap_eps=None,
                             certificate=result.certificate)
        else:
            other = solve_dfp(problem, tol, config=config, initial=e,
                              diagnostics=False, certificate=result.certificate,
                              force=not result.certified)
        ver.probe_distance = float(np.max(np.linalg.norm(
            other.u.values - result.u.values, axis=1)))
        ver.probe_bound = float(2 * tol / (1.0 - rate))
    return ver
