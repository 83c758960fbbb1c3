"""Ready-made problem instances: scalar testbeds, forcings and the heat pencil."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .ap_analysis import ap_test
from .grid import TimeGrid, TrigPolynomial
from .operators import (OperatorFamily, PencilModel, check_condition_P,
                        diagonal_family, pencil_semigroup, surrogate_family)
from .solver import SemilinearProblem
from .stepanov import LipschitzData, sp_aap_test, sp_ap_test

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# forcings


class PulseTrain:
    """Unit pulses ``1`` on ``[kP, kP + width)``, zero elsewhere."""

    def __init__(self, period: float = 2.0, width: float = 1.0, amplitude: float = 1.0):
        if not 0 < width < period:
            raise ValueError("need 0 < width < period")
        self.period, self.width, self.amplitude = period, width, amplitude

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * (np.mod(t, self.period) < self.width).astype(float)

    def mean(self, p: float) -> float:
        """``p``-mean over one period."""
        return self.amplitude * (self.width / self.period) ** (1.0 / p)


class DecayingTrig:
    """``trig(t) + amplitude * exp(-t / tau)`` in every component."""

    def __init__(self, trig: TrigPolynomial, amplitude: float, tau: float):
        self.trig, self.amplitude, self.tau = trig, amplitude, tau

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.trig(t) + self.amplitude * np.exp(-t / self.tau)[..., None]

    def decay(self, t):
        return self.amplitude * np.exp(-np.asarray(t, dtype=float) / self.tau)

    def lipschitz_bound(self) -> float:
        # valid on t >= 0, where the exponential has slope <= amplitude / tau
        return self.trig.lipschitz_bound() + self.amplitude / self.tau


@dataclass(frozen=True, eq=False)
class ForcingSpec:
    name: str
    kind: str
    parameters: dict
    declared: str
    function: object

    def __call__(self, t):
        return self.function(t)

    def verify(self) -> dict:
        """Run the test matching the declared class at ``eps = 0.05``."""
        return dict(_verify(self.name))


_TRIG_WIN = TimeGrid(0.0, 200.0, 0.05)


def _trig(name):
    if name in ("trig", "trig(1,√2)", "trig(1,sqrt2)"):
        return TrigPolynomial.sines([1.0, SQRT2])
    if name == "sin":
        return TrigPolynomial.sines([1.0])
    if name in ("sin(sqrt2)", "sin(√2)"):
        return TrigPolynomial.sines([SQRT2])
    if name == "cos":
        return TrigPolynomial.cosines([1.0])
    return None


_AAP_NAMES = ("aap", "aap(trig, 2, τ=2)", "aap(trig,2,tau=2)")
_PULSE_NAMES = ("pulse2", "pulse_train")


def forcing_names() -> list[str]:
    return ["trig(1,√2)", "sin", "sin(sqrt2)", "cos", "pulse2", "aap(trig, 2, τ=2)"]


def forcing_library(name: str, verify: bool = False) -> ForcingSpec:
    """Built-in forcings.

    * ``trig(1,√2)`` (alias ``trig``): ``sin t + sin(sqrt2 t)``, AP;
    * ``sin``, ``cos``, ``sin(sqrt2)``: single harmonics, AP;
    * ``pulse2``: period-2 unit pulses, Stepanov ``S^1``-AP but not AP;
    * ``aap(trig, 2, τ=2)``: ``trig + 2 e^{-t/2}``, ``S^1``-AAP.
    """
    tr = _trig(name)
    if tr is not None:
        spec = ForcingSpec(name, "trig", {"frequencies": sorted(
            set(np.abs(tr.frequencies).tolist()))}, "AP", tr)
    elif name in _PULSE_NAMES:
        spec = ForcingSpec(name, "pulse_train", {"period": 2.0, "width": 1.0},
                           "S^p-AP", PulseTrain(2.0, 1.0))
    elif name in _AAP_NAMES:
        spec = ForcingSpec(name, "aap_composite",
                           {"trig": "trig(1,√2)", "amplitude": 2.0, "tau": 2.0},
                           "S^p-AAP", DecayingTrig(_trig("trig"), 2.0, 2.0))
    else:
        raise KeyError(f"unknown forcing {name!r}")
    if verify:
        res = spec.verify()
        if not res["passed"]:
            raise ValueError(f"forcing {name!r} failed its declared class: {res}")
    return spec


@lru_cache(maxsize=None)
def _verify(name: str) -> tuple:
    spec = forcing_library(name)
    f = spec.function
    if spec.kind == "trig":
        per = f.period()
        tau_max = 20.0 if per is not None else 2000.0
        rep = ap_test(f, 0.05, tau_max=tau_max, tau_step=0.01)
        out = {"test": "ap_test", "passed": rep.passed, "verdict": rep.verdict,
               "inclusion_length": rep.inclusion_length}
    elif spec.kind == "pulse_train":
        rep = sp_ap_test(f, 1.0, 0.05, tau_max=20.0, tau_step=0.01,
                         window=TimeGrid(0.0, 40.0, 0.01))
        out = {"test": "sp_ap_test", "passed": rep.passed,
               "verdict": rep.ap_verdict,
               "inclusion_length": rep.ap.inclusion_length}
    else:
        rep = sp_aap_test(f, 1.0, 0.05, tau_max=2000.0, tau_step=0.01,
                          window=_TRIG_WIN)
        out = {"test": "sp_aap_test", "passed": rep.passed,
               "verdict": rep.aap_verdict, "threshold": rep.threshold,
               "inclusion_length": rep.aap.inclusion_length}
    return tuple(out.items())


# ---------------------------------------------------------------------------
# scalar testbeds


def scalar_model(a: float = 1.0, forcing="sin", k: float = 0.0,
                 window: TimeGrid | None = None, mode: str = "AP",
                 u0=None, name: str = "") -> SemilinearProblem:
    """``u' = -a u + forcing(t) + k sin u`` with ``T(t) = e^{-at}``."""
    if a <= 0:
        raise ValueError("a must be positive")
    fo = forcing_library(forcing).function if isinstance(forcing, str) else forcing
    window = TimeGrid(0.0, 100.0, 0.05) if window is None else window

    def f(t, u, fo=fo, k=k):
        return np.asarray(fo(t), dtype=float).reshape(u.shape) + k * np.sin(u)

    return SemilinearProblem(diagonal_family([-a]), f, LipschitzData.constant(k),
                             window, mode, u0, forcing=fo, name=name)


def uncertified_k(a: float) -> float:
    """Lipschitz scale with ``M_sum k = 1.1`` (ten percent past the certificate)."""
    return 1.1 * (1.0 - math.exp(-a))


_SCALAR = {
    "scalar-linear": dict(a=1.0, forcing="sin", k=0.0),
    "scalar-semilinear": dict(a=1.0, forcing="sin(sqrt2)", k=0.25),
    "scalar-uncertified": dict(a=1.0, forcing="sin(sqrt2)", k=uncertified_k(1.0)),
}


# ---------------------------------------------------------------------------
# degenerate heat pencil


@dataclass(frozen=True)
class HeatModelSpec:
    """``(m v)_t = v_xx - b v + f`` on ``(0, pi)`` with Dirichlet ends.

    ``m`` is a profile name (``one``, ``linear`` for ``x/pi``, ``vanish``
    for zero on the first ``floor(n/4)`` nodes, one elsewhere) or an array
    of nodal values.
    """

    n: int = 64
    b: float = 1.0
    m: object = "one"
    p: float = 2.0
    k: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need n >= 3 interior nodes")
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not 1 < self.p < math.inf:
            raise ValueError("p must lie in (1, inf)")
        mv = self.m_values()
        if np.any(mv < 0) or not np.all(np.isfinite(mv)):
            raise ValueError("m must be finite and >= 0")

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * math.pi / (self.n + 1)

    def m_values(self) -> np.ndarray:
        x = self.x
        if isinstance(self.m, str):
            if self.m == "one":
                return np.ones(self.n)
            if self.m == "linear":
                return x / math.pi
            if self.m == "vanish":
                out = np.ones(self.n)
                out[: self.n // 4] = 0.0
                return out
            raise ValueError(f"unknown m profile {self.m!r}")
        mv = np.asarray(self.m, dtype=float)
        if mv.shape != (self.n,):
            raise ValueError(f"m needs {self.n} nodal values")
        return mv


def laplacian(n: int) -> np.ndarray:
    """Second-order Dirichlet Laplacian on ``n`` interior nodes of ``(0, pi)``."""
    h = math.pi / (n + 1)
    return (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1)
            + np.diag(np.ones(n - 1), -1)) / h ** 2


def discrete_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues ``-(4/h^2) sin^2(j h / 2)`` of :func:`laplacian`, ``j = 1..n``."""
    h = math.pi / (n + 1)
    j = np.arange(1, n + 1)
    return -(4.0 / h ** 2) * np.sin(j * h / 2) ** 2


@dataclass
class HeatModel:
    spec: HeatModelSpec
    pencil: PencilModel
    problem: SemilinearProblem
    condition_P: dict
    report: dict = field(default_factory=dict)


def poisson_heat_model(spec: HeatModelSpec = HeatModelSpec(),
                       window: TimeGrid | None = None, mode: str = "AP",
                       u0=None, check_P: bool = True) -> HeatModel:
    """Pencil ``B = diag(m)``, ``A = Laplacian - b I`` and the forced problem.

    The state is ``u = m v``; the forcing ``F(t, x) = a sin(t) sin(x) +
    k sin(u)`` acts pointwise on it.  Condition (P) is sampled with the
    declared ``beta = 1/p``; the pencil itself always measures
    ``beta = 1`` and both are reported.
    """
    A = laplacian(spec.n) - spec.b * np.eye(spec.n)
    B = np.diag(spec.m_values())
    pm = pencil_semigroup(B, A)
    fam = pm.family
    x = spec.x
    profile = np.sin(x)
    amp, k = spec.amplitude, spec.k
    forcing = TrigPolynomial([1.0, -1.0],
                             np.stack([amp * profile / 2j, -amp * profile / 2j]))

    def f(t, u, forcing=forcing, k=k):
        return forcing(t) + k * np.sin(u)

    window = TimeGrid(0.0, 20.0, 0.05) if window is None else window
    if mode == "DFP" and u0 is None:
        u0 = np.zeros(spec.n)
    prob = SemilinearProblem(fam, f, LipschitzData.constant(k), window, mode,
                             u0, forcing=forcing, name="heat")
    beta_decl = 1.0 / spec.p
    cp = {}
    if check_P:
        rep = check_condition_P(pm, 0.5 * fam.envelope.c, beta_decl)
        cp = rep.to_dict()
    report = {
        "beta_declared": beta_decl, "beta_measured": 1.0,
        "envelope": {"M": fam.envelope.M, "c": fam.envelope.c,
                     "beta": fam.envelope.beta},
        "regular_dim": pm.regular_dim, "singular_dim": pm.singular_dim,
        "condition_P": cp,
    }
    return HeatModel(spec, pm, prob, cp, report)


def heat_mode_oracle(spec: HeatModelSpec, t: np.ndarray, u0_amp: float = 0.0,
                     ap: bool = False) -> np.ndarray:
    """Sine-basis solution for ``m = 1``, ``k = 0``.

    Only the first mode is forced: ``a' = mu a + amp sin t`` with the
    discrete eigenvalue ``mu = lam_1 - b``.  ``ap`` selects the periodic
    solution, otherwise ``a(0) = u0_amp``.  Returns ``(len(t), n)``.
    """
    if not (isinstance(spec.m, str) and spec.m == "one") or spec.k != 0:
        raise ValueError("the spectral oracle needs m = 1 and k = 0")
    mu = discrete_eigenvalues(spec.n)[0] - spec.b
    lam = -mu
    amp = spec.amplitude
    t = np.asarray(t, dtype=float)
    per = amp * (lam * np.sin(t) - np.cos(t)) / (lam ** 2 + 1)
    if ap:
        a = per
    else:
        a0_per = -amp / (lam ** 2 + 1)
        a = per + (u0_amp - a0_per) * np.exp(-lam * t)
    return np.outer(a, np.sin(spec.x))


_HEAT = {
    "heat-classical": HeatModelSpec(n=64, b=1.0, m="one", k=0.0),
    "heat-degenerate": HeatModelSpec(n=64, b=1.0, m="linear", k=0.05),
    "heat-vanishing": HeatModelSpec(n=64, b=1.0, m="vanish", k=0.05),
}


def model_names() -> list[str]:
    return list(_SCALAR) + list(_HEAT)


def get_model(name: str, mode: str = "AP", window: TimeGrid | None = None,
              u0=None) -> SemilinearProblem:
    """Problem for a registered model name."""
    if name in _SCALAR:
        return scalar_model(**_SCALAR[name], window=window, mode=mode,
                            u0=(u0 if u0 is not None else [0.0]) if mode == "DFP" else None,
                            name=name)
    if name in _HEAT:
        return poisson_heat_model(_HEAT[name], window, mode, u0,
                                  check_P=False).problem
    raise KeyError(f"unknown model {name!r}")


def heat_spec(name: str) -> HeatModelSpec:
    return _HEAT[name]


# ---------------------------------------------------------------------------
# problem documents

PROBLEM_KEYS = {"family_ref", "forcing_ref", "nonlinearity", "lipschitz",
                "exponents", "u0", "window", "mode", "tol", "period"}


def family_from_dict(doc) -> OperatorFamily:
    """``{kind, dim, parameters}`` or a registered model name."""
    if isinstance(doc, str):
        return get_model(doc).family
    kind = _field(doc, "kind", "family_ref")
    par = doc.get("parameters", {})
    if kind == "diagonal":
        fam = diagonal_family(_field(par, "mu", "family_ref.parameters"))
    elif kind == "pencil":
        B = np.asarray(_field(par, "B", "family_ref.parameters"), dtype=float)
        A = np.asarray(_field(par, "A", "family_ref.parameters"), dtype=float)
        fam = pencil_semigroup(B, A).family
    elif kind == "spectral_surrogate":
        fam = surrogate_family(float(_field(par, "beta", "family_ref.parameters")),
                               float(_field(par, "c", "family_ref.parameters")),
                               int(par.get("N", 64)), int(par.get("seed", 0)))
    else:
        raise ValueError(f"family_ref.kind: unknown kind {kind!r}")
    if "dim" in doc and int(doc["dim"]) != fam.dim:
        raise ValueError(f"family_ref.dim: {doc['dim']} does not match {fam.dim}")
    return fam


def _field(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ValueError(f"{where}.{key}: missing field")
    return doc[key]


def forcing_from_ref(ref):
    if isinstance(ref, str):
        return forcing_library(ref).function
    if isinstance(ref, dict):
        from .serialize import trig_from_dict
        return trig_from_dict(ref)
    raise ValueError("forcing_ref: expected a name or a trigonometric polynomial")


def window_from(value, where: str = "window") -> TimeGrid:
    try:
        t0, t1, h = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ValueError(f"{where}: expected [t_start, t_end, step]")
    return TimeGrid(t0, t1, h)


def problem_from_document(doc: dict) -> SemilinearProblem:
    """Build a problem from ``{family_ref, forcing_ref, nonlinearity, lipschitz,
    exponents, u0, window, mode, tol}``; unknown keys are rejected."""
    from .stepanov import StepanovExponents
    unknown = set(doc) - PROBLEM_KEYS
    if unknown:
        raise ValueError(f"unknown field {sorted(unknown)[0]!r}")
    fam = family_from_dict(_field(doc, "family_ref", "problem"))
    fo = forcing_from_ref(doc.get("forcing_ref", "sin"))
    nl = doc.get("nonlinearity", {"name": "sin", "k": 0.0})
    if nl.get("name", "sin") != "sin":
        raise ValueError(f"nonlinearity.name: unknown {nl.get('name')!r}")
    k = float(nl.get("k", 0.0))
    d = fam.dim

    def f(t, u, fo=fo, k=k):
        v = np.asarray(fo(t), dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        return np.broadcast_to(v, u.shape) + k * np.sin(u)

    lip = doc.get("lipschitz", {"kind": "constant", "L": k})
    if lip.get("kind", "constant") != "constant":
        raise ValueError("lipschitz.kind: only 'constant' is supported in documents")
    L = float(_field(lip, "L", "lipschitz"))
    if L < k:
        raise ValueError(f"lipschitz.L: {L} is below the nonlinearity scale {k}")
    ex = doc.get("exponents")
    exps = None if ex is None else StepanovExponents(ex.get("p"), ex.get("r"))
    mode = doc.get("mode", "AP")
    u0 = doc.get("u0")
    if mode == "DFP" and u0 is None:
        u0 = [0.0] * d
    window = window_from(doc.get("window", [0.0, 100.0, 0.05]))
    return SemilinearProblem(fam, f, LipschitzData.constant(L), window, mode,
                             u0 if mode == "DFP" else None, exps, fo,
                             doc.get("period"), "document")
