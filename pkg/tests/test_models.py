import math

import numpy as np
import pytest

import oracles
from apcauchy.ap_analysis import ap_test, c0_tail_test
from apcauchy.grid import GridFunction, TimeGrid
from apcauchy.models import (HeatModelSpec, discrete_eigenvalues, forcing_library,
                             forcing_names, get_model, heat_mode_oracle, laplacian,
                             model_names, poisson_heat_model, problem_from_document,
                             scalar_model, uncertified_k)
from apcauchy.solver import contraction_report, solve_ap, solve_dfp


class TestForcings:
    def test_names_resolve(self):
        for name in forcing_names():
            assert forcing_library(name).name == name
        with pytest.raises(KeyError):
            forcing_library("nope")

    def test_trig_passes_ap(self):
        rep = ap_test(forcing_library("trig(1,√2)").function, 0.1, tau_max=1000.0,
                      tau_step=0.01)
        assert rep.passed

    def test_pulse_declared_class(self):
        spec = forcing_library("pulse2")
        assert not ap_test(spec.function, 0.5, tau_max=20.0, tau_step=0.01,
                           window=TimeGrid(0.0, 40.0, 0.01)).passed
        assert spec.verify()["passed"]

    def test_aap_declared_class(self):
        res = forcing_library("aap(trig, 2, τ=2)").verify()
        assert res["test"] == "sp_aap_test" and res["passed"]

    def test_pulse_mean(self):
        assert forcing_library("pulse2").function.mean(1.0) == 0.5


class TestScalarModels:
    def test_registry(self):
        names = model_names()
        assert {"scalar-linear", "scalar-semilinear", "scalar-uncertified"} <= set(names)
        with pytest.raises(KeyError):
            get_model("nope")

    def test_semilinear_certificate(self):
        rep = contraction_report(get_model("scalar-semilinear"))
        assert abs(rep.M_sum - 1.582) < 1e-3 and abs(rep.rho - 0.396) < 1e-3

    def test_uncertified_by_construction(self):
        assert math.isclose(uncertified_k(1.0), 1.1 * (1 - math.exp(-1)))
        rep = contraction_report(get_model("scalar-uncertified"))
        assert rep.rho > 1 and math.isclose(rep.rho, 1.1, rel_tol=1e-10)

    def test_linear_is_benchmark(self):
        res = solve_ap(get_model("scalar-linear"), ap_eps=None)
        assert np.abs(res.u.values[:, 0] - oracles.linear_ap(res.u.t)).max() < 1e-4

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            scalar_model(a=0.0)


class TestHeat:
    def test_discrete_spectrum(self):
        n = 32
        ev = np.sort(np.linalg.eigvalsh(laplacian(n)))[::-1]
        assert np.allclose(ev, discrete_eigenvalues(n), rtol=1e-10)
        # low modes approach -k^2
        assert np.allclose(discrete_eigenvalues(200)[:3], -np.arange(1, 4) ** 2, rtol=1e-3)

    def test_classical_matches_spectral_oracle(self):
        spec = HeatModelSpec(n=32)
        w = TimeGrid(0.0, 20.0, 0.05)
        model = poisson_heat_model(spec, w, "AP", check_P=False)
        res = solve_ap(model.problem, ap_eps=None)
        ref = np.outer(oracles.heat_ap_amplitude(32, 1.0, w.nodes), np.sin(spec.x))
        assert np.abs(res.u.values - ref).max() < 1e-4
        assert np.abs(heat_mode_oracle(spec, w.nodes, ap=True) - ref).max() < 1e-12

    def test_classical_dfp(self):
        spec = HeatModelSpec(n=32)
        w = TimeGrid(0.0, 10.0, 0.05)
        u0 = 0.3 * np.sin(spec.x)
        model = poisson_heat_model(spec, w, "DFP", u0=u0, check_P=False)
        res = solve_dfp(model.problem, diagnostics=False)
        ref = np.outer(oracles.heat_dfp_amplitude(32, 1.0, w.nodes, 0.3), np.sin(spec.x))
        assert np.abs(res.u.values - ref).max() < 1e-4

    def test_vanishing_profile(self):
        spec = HeatModelSpec(n=32, m="vanish", k=0.05)
        model = poisson_heat_model(spec, TimeGrid(0.0, 5.0, 0.05))
        assert model.pencil.singular_dim == 32 // 4
        assert model.condition_P["verdict"] == "pass"
        assert math.isfinite(model.condition_P["M"])
        assert model.report["beta_declared"] == 0.5 and model.report["beta_measured"] == 1.0

    def test_linear_profile_dfp_approaches_ap(self):
        spec = HeatModelSpec(n=64, m="linear", k=0.05)
        w = TimeGrid(0.0, 30.0, 0.05)
        ap = solve_ap(poisson_heat_model(spec, w, "AP", check_P=False).problem, ap_eps=None)
        dfp = solve_dfp(poisson_heat_model(spec, w, "DFP", u0=0.5 * np.sin(spec.x),
                                           check_P=False).problem, diagnostics=False)
        assert dfp.certified
        diff = GridFunction(w, dfp.u.values - ap.u.values)
        assert c0_tail_test(diff, 1e-3).verdict

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            HeatModelSpec(n=2)
        with pytest.raises(ValueError):
            HeatModelSpec(p=1.0)
        with pytest.raises(ValueError):
            HeatModelSpec(n=4, m=[1.0, -1.0, 1.0, 1.0])


class TestDocuments:
    DOC = {"family_ref": {"kind": "diagonal", "parameters": {"mu": [-1.0]}},
           "forcing_ref": "sin", "nonlinearity": {"name": "sin", "k": 0.25},
           "lipschitz": {"kind": "constant", "L": 0.25},
           "window": [0.0, 50.0, 0.05], "mode": "AP"}

    def test_round_trip_solve(self):
        prob = problem_from_document(self.DOC)
        assert prob.dim == 1 and prob.window.t_end == 50.0
        res = solve_ap(prob, ap_eps=None)
        assert res.certified

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown field 'colour'"):
            problem_from_document(dict(self.DOC, colour="red"))

    def test_missing_family_field(self):
        with pytest.raises(ValueError, match="family_ref"):
            problem_from_document(dict(self.DOC, family_ref={"parameters": {}}))

    def test_lipschitz_below_scale(self):
        with pytest.raises(ValueError, match="lipschitz.L"):
            problem_from_document(dict(self.DOC, lipschitz={"kind": "constant", "L": 0.1}))

    def test_pencil_family(self):
        doc = dict(self.DOC, family_ref={"kind": "pencil", "parameters": {
            "B": [[1, 0], [0, 0]], "A": [[-1, 0], [0, -1]]}},
            mode="DFP", u0=[1.0, 0.0])
        prob = problem_from_document(doc)
        assert prob.dim == 2
