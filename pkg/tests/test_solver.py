import math

import numpy as np
import pytest

import oracles
from apcauchy.ap_analysis import c0_tail_test
from apcauchy.grid import GridFunction, TimeGrid, TrigPolynomial
from apcauchy.models import get_model, scalar_model
from apcauchy.operators import diagonal_family
from apcauchy.solver import (CertificateError, SemilinearProblem, compute_Mn,
                             contraction_report, kret_threshold, map_residual,
                             solve_ap, solve_dfp, verify_solution)
from apcauchy.stepanov import LipschitzData, StepanovExponents


def lipschitz_problem(L, beta_one=True):
    fam = diagonal_family([-1.0])
    f = lambda t, u: L * np.sin(u)
    return SemilinearProblem(fam, f, LipschitzData.constant(L), TimeGrid(0.0, 10.0, 0.1),
                             period=2 * math.pi)


class TestCertificate:
    def test_geometric_block_times_L(self):
        rep = contraction_report(lipschitz_problem(0.5))
        assert math.isclose(rep.M_sum, oracles.geometric_block_sum(1, 1), rel_tol=1e-12)
        assert math.isclose(rep.rho, 0.5 * rep.M_sum, rel_tol=1e-12)
        assert abs(rep.rho - 0.791) < 1e-3
        assert rep.verdicts["zeljeznica"] == "pass"

    def test_above_one_fails(self):
        rep = contraction_report(lipschitz_problem(0.7))
        assert abs(rep.rho - 1.107) < 1e-3
        assert rep.verdicts["zeljeznica"] == "fail" and not rep.ap_certified

    def test_zero_lipschitz(self):
        rep = contraction_report(lipschitz_problem(0.0))
        assert rep.rho == 0.0 and rep.verdicts["zeljeznica"] == "pass"
        assert all(m == 0 for m in rep.M_n)

    def test_kret_equivalence_is_literal(self):
        for L in np.linspace(0.0, 2.0, 41):
            rep = contraction_report(lipschitz_problem(float(L)))
            assert (rep.verdicts["kret"] == "pass") == (rep.M_n[0] < 1)

    def test_block_condition_violation_is_reported(self):
        fam = diagonal_family([-1.0])
        from apcauchy.operators import surrogate_family
        fam = surrogate_family(0.5, 1.0, N=8)
        prob = SemilinearProblem(fam, lambda t, u: 0.1 * u, LipschitzData.constant(0.1),
                                 TimeGrid(0.0, 10.0, 0.1), exponents=StepanovExponents(2.0),
                                 period=1.0)
        rep = contraction_report(prob)
        assert rep.verdicts["zeljeznica"] == "hypotheses fail"
        assert rep.rho is None

    def test_to_dict_has_every_field(self):
        d = contraction_report(lipschitz_problem(0.25)).to_dict()
        for key in ("q_conj", "M_sum", "lipschitz_scale", "rho", "kret_threshold",
                    "M_n", "weissinger_sum", "verdicts"):
            assert key in d


class TestMn:
    @pytest.mark.parametrize("beta,c", [(1.0, 1.0), (0.5, 2.0)])
    def test_closed_form_and_quadrature(self, beta, c):
        M, L = 1.2, 0.3
        ref = oracles.m1_closed(M, L, c, beta)
        assert math.isclose(compute_Mn(L, M, c, beta, 1), ref, rel_tol=1e-12)
        q1 = compute_Mn(L, M, c, beta, 1, method="quadrature")
        q2 = compute_Mn(L, M, c, beta, 2, method="quadrature")
        assert abs(q1 - ref) < 1e-6
        assert abs(q2 - q1 ** 2) < 1e-4 * q1 ** 2

    def test_zero(self):
        assert compute_Mn(0.0, 1.0, 1.0, 0.5, 3) == 0.0

    def test_monte_carlo_agrees(self):
        ref = oracles.m1_closed(1.0, 0.4, 1.0, 0.5) ** 2
        mc = compute_Mn(LipschitzData.sampled(GridFunction(TimeGrid(0, 50, 0.05),
                                                           np.full(1001, 0.4))),
                        1.0, 1.0, 0.5, 2, method="montecarlo", n_samples=20000)
        assert abs(mc - ref) < 0.05 * ref

    def test_threshold(self):
        assert math.isclose(kret_threshold(2.0, 4.0, 0.5),
                            oracles.kret_threshold(2.0, 4.0, 0.5))

    def test_bad_n(self):
        with pytest.raises(ValueError):
            compute_Mn(0.1, 1, 1, 1, 0)


class TestSolveAP:
    def test_linear(self):
        res = solve_ap(scalar_model(forcing="sin"))
        assert np.abs(res.u.values[:, 0] - oracles.linear_ap(res.u.t)).max() < 1e-4

    def test_zero_forcing(self):
        zero = TrigPolynomial.constant(0.0)
        res = solve_ap(scalar_model(forcing=zero), ap_eps=None)
        assert np.abs(res.u.values).max() == 0.0

    def test_semilinear_contraction(self, semilinear_ap):
        prob, res = semilinear_ap
        assert res.max_ratio <= res.rate + 0.01
        assert res.diagnostics["ap_test"]["verdict"] == "pass"
        assert res.residual <= res.diffs[-1] / (1 - res.rate)

    def test_uncertified_is_refused(self):
        with pytest.raises(CertificateError):
            solve_ap(get_model("scalar-uncertified"))


class TestSolveDFP:
    def test_homogeneous_flow(self):
        zero = TrigPolynomial.constant(0.0)
        res = solve_dfp(scalar_model(forcing=zero, mode="DFP", u0=[1.5]), diagnostics=False)
        assert np.abs(res.u.values[:, 0] - 1.5 * np.exp(-res.u.t)).max() < 1e-8

    def test_linear(self):
        res = solve_dfp(scalar_model(forcing="sin", mode="DFP", u0=[1.0]), diagnostics=False)
        assert np.abs(res.u.values[:, 0] - oracles.linear_dfp(res.u.t, 1.0)).max() < 1e-4

    def test_converges_to_ap_orbit(self, semilinear_ap, semilinear_dfp):
        _, ap = semilinear_ap
        _, dfp = semilinear_dfp
        diff = GridFunction(ap.u.grid, dfp.u.values - ap.u.values)
        late = diff.restrict(15.0, diff.grid.t_end)
        assert late.sup_norm() < 1e-3
        assert c0_tail_test(diff, 1e-3).verdict

    def test_uncertified_ap_model_is_certified_for_dfp(self):
        # M_1 = k / kret_threshold = 1.1 (1 - 1/e) < 1 although rho = 1.1
        res = solve_dfp(get_model("scalar-uncertified", "DFP", u0=[0.0]), diagnostics=False)
        assert res.certified and not res.certificate.ap_certified

    def test_uncertified_refused_unless_forced(self):
        prob = scalar_model(k=1.5, mode="DFP", u0=[0.0])
        with pytest.raises(CertificateError, match="no certificate"):
            solve_dfp(prob)
        res = solve_dfp(prob, force=True, diagnostics=False, max_iter=400)
        assert not res.certified

    def test_inadmissible_initial_value(self):
        from apcauchy.operators import pencil_semigroup
        fam = pencil_semigroup(np.diag([1.0, 0.0]), -np.eye(2)).family
        with pytest.raises(ValueError, match="projector"):
            SemilinearProblem(fam, lambda t, u: 0 * u, LipschitzData.constant(0.0),
                              TimeGrid(0, 1, 0.1), "DFP", [0.0, 1.0])


class TestVerification:
    def test_certified_run(self, semilinear_ap):
        prob, res = semilinear_ap
        ver = verify_solution(res, prob)
        assert ver.residual_passed
        assert ver.probe_passed

    def test_perturbed_solution_is_detected(self, semilinear_ap):
        prob, res = semilinear_ap
        bad = GridFunction(res.u.grid, res.u.values + 0.1 * np.sin(res.u.t)[:, None])
        assert map_residual(prob, bad, shift=res.history_shift) >= 0.05
