import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apcauchy.grid import GridFunction, TimeGrid, TrigPolynomial, as_evaluator


class TestTimeGrid:
    def test_nodes_and_count(self):
        g = TimeGrid(0.0, 1.0, 0.25)
        assert g.n == 5
        assert np.allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
        assert g.length == 1.0

    def test_from_count(self):
        g = TimeGrid.from_count(2.0, 4.0, 21)
        assert math.isclose(g.step, 0.1)
        assert g.n == 21

    def test_index_and_sub(self):
        g = TimeGrid(0.0, 10.0, 0.5)
        assert g.index_of(2.5) == 5
        s = g.sub(2.0, 4.0)
        assert s.n == 5 and s.t_start == 2.0

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0.0, 0.1)


class TestGridFunction:
    def test_from_callable_and_norms(self):
        g = TimeGrid.from_count(0.0, 2 * math.pi, 629)
        f = GridFunction.from_callable(np.sin, g)
        assert f.dim == 1
        assert abs(f.sup_norm() - 1.0) < 1e-3

    def test_interpolation_is_linear(self):
        g = TimeGrid(0.0, 1.0, 0.5)
        f = GridFunction(g, np.array([0.0, 1.0, 0.0]))
        assert np.allclose(f(np.array([0.25, 0.75])).ravel(), [0.5, 0.5])

    def test_arithmetic(self):
        g = TimeGrid(0.0, 1.0, 0.1)
        a = GridFunction.from_callable(np.cos, g)
        b = GridFunction.from_callable(np.sin, g)
        assert np.allclose((a + b).values - (a - b).values, 2 * b.values)
        assert np.allclose((2.0 * a).values, 2 * a.values)

    def test_restrict(self):
        g = TimeGrid(0.0, 10.0, 0.1)
        f = GridFunction.from_callable(lambda t: t, g)
        r = f.restrict(5.0, 6.0)
        assert r.grid.n == 11
        assert math.isclose(r.values[0, 0], 5.0)


class TestTrigPolynomial:
    def test_sines_match_numpy(self):
        tp = TrigPolynomial.sines([1.0, math.sqrt(2)])
        t = np.linspace(-5, 5, 101)
        assert np.allclose(tp(t).ravel(), np.sin(t) + np.sin(math.sqrt(2) * t))

    def test_shift(self):
        tp = TrigPolynomial.cosines([2.0])
        t = np.linspace(0, 3, 31)
        assert np.allclose(tp.shifted(0.7)(t), tp(t + 0.7))

    def test_bounds(self):
        tp = TrigPolynomial.sines([1.0, 3.0])
        assert tp.sup_bound() >= 2.0 - 1e-12
        assert tp.lipschitz_bound() >= 4.0 - 1e-12

    def test_period_detection(self):
        assert math.isclose(TrigPolynomial.sines([1.0, 2.0]).period(), 2 * math.pi)
        assert TrigPolynomial.sines([1.0, math.sqrt(2)]).period() is None

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-50, 50), st.floats(0.1, 5))
    def test_modulus_bounded_by_sup_bound(self, t, lam):
        tp = TrigPolynomial.sines([lam, 1.0])
        assert abs(tp(np.array([t]))[0, 0]) <= tp.sup_bound() + 1e-12


def test_as_evaluator_accepts_plain_callable():
    ev = as_evaluator(np.cos)
    out = ev(np.array([0.0, math.pi]))
    assert np.allclose(np.ravel(out), [1.0, -1.0])
