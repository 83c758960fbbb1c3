import math

import numpy as np
import pytest

import oracles
from apcauchy.convolution import (QuadratureConfig, default_tail, finite_convolution,
                                  infinite_convolution)
from apcauchy.grid import GridFunction, TimeGrid, TrigPolynomial
from apcauchy.operators import BlockDivergenceError, KernelEnvelope, diagonal_family


def ones(grid, d=1):
    return GridFunction(grid, np.ones((grid.n, d)))


class TestModalPath:
    def test_exponential_against_constant(self):
        g = TimeGrid(0.0, 10.0, 0.05)
        res = finite_convolution(diagonal_family([-1.0]), ones(g))
        assert np.abs(res.values.values[:, 0] - (1 - np.exp(-g.nodes))).max() < 1e-12

    def test_sine_forcing(self):
        g = TimeGrid(0.0, 20.0, 0.02)
        f = GridFunction.from_callable(np.sin, g)
        res = finite_convolution(diagonal_family([-1.0]), f)
        ref = oracles.linear_dfp(g.nodes, 0.0)
        assert np.abs(res.values.values[:, 0] - ref).max() < 1e-8

    @pytest.mark.parametrize("rate", [1.7e3, 1e5])
    def test_stiff_mode_stays_bounded(self, rate):
        g = TimeGrid(0.0, 2.0, 0.01)
        res = finite_convolution(diagonal_family([-rate]), ones(g))
        ref = (1 - np.exp(-rate * g.nodes)) / rate
        assert np.all(np.isfinite(res.values.values))
        assert np.abs(res.values.values[1:, 0] - ref[1:]).max() < 1e-6 / rate

    def test_vector_family(self):
        g = TimeGrid(0.0, 5.0, 0.05)
        res = finite_convolution(diagonal_family([-1.0, -2.0]), ones(g, 2))
        ref2 = (1 - np.exp(-2 * g.nodes)) / 2
        assert np.abs(res.values.values[:, 1] - ref2).max() < 1e-12

    def test_dimension_mismatch(self):
        g = TimeGrid(0.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            finite_convolution(diagonal_family([-1.0, -2.0]), ones(g))


class TestSingularPath:
    @pytest.mark.parametrize("beta", [0.3, 0.5, 1.0])
    def test_incomplete_gamma(self, beta):
        g = TimeGrid(0.0, 5.0, 0.05)
        env = KernelEnvelope(1.0, 1.0, beta)
        res = finite_convolution(env, ones(g), p=math.inf)
        ref = np.array([oracles.singular_conv_const(beta, 1.0, t) for t in g.nodes])
        assert np.abs(res.values.values[:, 0] - ref).max() < 1e-10

    def test_richardson_estimate_is_reported(self):
        g = TimeGrid(0.0, 5.0, 0.05)
        f = GridFunction.from_callable(np.cos, g)
        res = finite_convolution(KernelEnvelope(1.0, 1.0, 0.5), f)
        assert res.error.shape == (g.n,)
        assert 0 <= res.max_error < 1e-5

    def test_pianino_boundary(self):
        g = TimeGrid(0.0, 1.0, 0.1)
        with pytest.raises(BlockDivergenceError):
            finite_convolution(KernelEnvelope(1.0, 1.0, 0.5), ones(g), p=2.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            QuadratureConfig(n_b=2)
        with pytest.raises(ValueError):
            QuadratureConfig(sigma=0.5)
        assert QuadratureConfig().grading(0.25) == 8.0


class TestInfinite:
    def test_matches_bounded_solution(self):
        w = TimeGrid(0.0, 20.0, 0.02)
        res = infinite_convolution(diagonal_family([-1.0]), TrigPolynomial.sines([1.0]), w)
        assert np.abs(res.values.values[:, 0] - oracles.linear_ap(w.nodes)).max() < 1e-7
        assert 0 <= res.tail_bound < 1e-8

    def test_tail_bound_follows_history_length(self):
        w = TimeGrid(0.0, 5.0, 0.05)
        f = TrigPolynomial.sines([1.0])
        env = KernelEnvelope(1.0, 1.0, 1.0)
        short = infinite_convolution(env, f, w, QuadratureConfig(T_tail=5.0))
        long = infinite_convolution(env, f, w, QuadratureConfig(T_tail=15.0))
        assert long.tail_bound < short.tail_bound
        # p = inf pairs with the L^1 block norm: the kernel mass beyond T_tail
        assert math.isclose(short.tail_bound, math.exp(-5), rel_tol=1e-9)

    def test_grid_history_must_cover(self):
        w = TimeGrid(0.0, 5.0, 0.05)
        f = GridFunction.from_callable(np.sin, w)
        with pytest.raises(ValueError, match="history"):
            infinite_convolution(diagonal_family([-1.0]), f, w)

    def test_default_tail(self):
        T = default_tail(KernelEnvelope(1.0, 1.0, 1.0))
        assert T == float(int(T)) and 20 <= T <= 30
