import math

import numpy as np
import pytest

import oracles
from apcauchy.quadrature import (jacobi_rule, legendre_rule, singular_integral,
                                 singular_product_quadrature, singular_rule)


class TestRules:
    def test_legendre_integrates_polynomials_on_unit_interval(self):
        s, w = legendre_rule(6)
        for k in range(12):
            assert math.isclose(w @ s ** k, 1.0 / (k + 1), rel_tol=1e-13)

    @pytest.mark.parametrize("a", [-0.7, -0.5, 0.0, 0.8])
    def test_jacobi_moments(self, a):
        s, w = jacobi_rule(8, a)
        for k in range(16):
            assert math.isclose(w @ s ** k, 1.0 / (k + a + 1), rel_tol=1e-12)

    def test_rules_are_cached_and_read_only(self):
        s, w = jacobi_rule(8, -0.5)
        assert jacobi_rule(8, -0.5)[0] is s
        with pytest.raises(ValueError):
            w[0] = 1.0


class TestSingular:
    @pytest.mark.parametrize("beta", [0.3, 0.5, 1.0])
    def test_incomplete_gamma_cell(self, beta):
        got = singular_product_quadrature(lambda s: np.exp(-s), beta, 1.0)
        assert math.isclose(got, oracles.lower_gamma(beta, 1.0), rel_tol=1e-13)

    def test_exact_for_polynomials(self):
        got = singular_product_quadrature(lambda s: 3 * s ** 2 + 1, 0.5, 2.0, n=4)
        # int_0^2 (3s^2 + 1) s^{-1/2} ds
        ref = 3 * 2 ** 2.5 / 2.5 + 2 * 2 ** 0.5
        assert math.isclose(got, ref, rel_tol=1e-13)

    @pytest.mark.parametrize("beta", [0.3, 0.5, 1.0])
    def test_gamma_on_half_line(self, beta):
        got = singular_integral(lambda s: np.exp(-s), beta - 1, 60.0, 1.0)
        assert math.isclose(got, oracles.gamma(beta), rel_tol=1e-12)

    def test_rule_covers_interval(self):
        s, w = singular_rule(-0.5, 10.0, 2.0)
        assert s.min() > 0 and s.max() < 10.0
        assert math.isclose(w.sum(), 2 * math.sqrt(10.0), rel_tol=1e-10)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            singular_product_quadrature(np.exp, 0.5, -1.0)
        with pytest.raises(ValueError):
            singular_product_quadrature(np.exp, 1.5, 1.0)
