import math

import numpy as np
import pytest

from fracsource.errors import InvalidParameterError
from fracsource.fractime import (
    TimeGrid,
    caputo_apply,
    cq_weights,
    gamma_fn,
    rl_integral,
    series_coefficients,
)

# frozen: Gamma(1.5) = sqrt(pi)/2
GAMMA_15 = 0.8862269254527580


def test_time_grid_basic():
    grid = TimeGrid(4, T=2.0)
    assert grid.tau == 0.5
    assert np.allclose(grid.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_time_grid_rejects_bad_args():
    with pytest.raises(InvalidParameterError):
        TimeGrid(0)
    with pytest.raises(InvalidParameterError):
        TimeGrid(2.5)
    with pytest.raises(InvalidParameterError):
        TimeGrid(4, T=0.0)


def test_weights_leading_terms():
    alpha = 0.3
    w = cq_weights(alpha, 4).w
    # closed forms of the first binomial coefficients of (1-z)^alpha
    assert w[0] == 1.0
    assert abs(w[1] - (-alpha)) < 1e-15
    assert abs(w[2] - alpha * (alpha - 1.0) / 2.0 * (-1.0) ** 2) < 1e-15
    assert abs(w[3] - (-alpha * (alpha - 1.0) * (alpha - 2.0) / 6.0)) < 1e-15


def test_weights_against_binomial_oracle():
    mpmath = pytest.importorskip("mpmath")
    for alpha in (0.25, 0.75):
        w = cq_weights(alpha, 200).w
        oracle = [float((-1) ** j * mpmath.binomial(alpha, j)) for j in range(201)]
        assert np.max(np.abs(w - np.array(oracle))) < 1e-15


def test_weights_signs_and_sum():
    # w_0 = 1, all later weights negative, partial sums positive and -> 0
    w = cq_weights(0.5, 500).w
    assert w[0] == 1.0
    assert np.all(w[1:] < 0.0)
    partial = np.cumsum(w)
    assert np.all(partial > 0.0)
    assert partial[-1] < 0.03


def test_weights_rejects_bad_order():
    for bad in (0.0, 1.0, -0.2, 1.4):
        with pytest.raises(InvalidParameterError):
            cq_weights(bad, 10)


def test_caputo_of_constant_is_zero():
    grid = TimeGrid(50)
    w = cq_weights(0.4, grid.N)
    u = np.full(grid.N + 1, 3.7)
    assert np.all(caputo_apply(w, grid, u) == 0.0)


def test_caputo_linearity():
    grid = TimeGrid(64)
    w = cq_weights(0.6, grid.N)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(grid.N + 1)
    v = rng.standard_normal(grid.N + 1)
    lhs = caputo_apply(w, grid, 2.0 * u - 3.0 * v)
    rhs = 2.0 * caputo_apply(w, grid, u) - 3.0 * caputo_apply(w, grid, v)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_caputo_power_rule_first_order():
    # Caputo of t is t^(1-alpha)/Gamma(2-alpha); BE-CQ converges at O(tau)
    alpha = 0.5
    errs = []
    for N in (100, 200):
        grid = TimeGrid(N)
        w = cq_weights(alpha, grid.N)
        approx = caputo_apply(w, grid, grid.nodes)
        exact = grid.nodes ** (1.0 - alpha) / GAMMA_15
        errs.append(abs(approx[-1] - exact[-1]))
    assert errs[0] < 0.01
    assert 1.6 < errs[0] / errs[1] < 2.4


def test_caputo_columns_match_scalar():
    grid = TimeGrid(30)
    w = cq_weights(0.25, grid.N)
    rng = np.random.default_rng(2)
    U = rng.standard_normal((grid.N + 1, 3))
    out = caputo_apply(w, grid, U)
    for k in range(3):
        np.testing.assert_allclose(out[:, k], caputo_apply(w, grid, U[:, k]), atol=1e-14)


def test_caputo_rejects_oversized_samples():
    grid = TimeGrid(10)
    w = cq_weights(0.5, grid.N)
    with pytest.raises(InvalidParameterError):
        caputo_apply(w, grid, np.zeros(grid.N + 2))


def test_series_coefficients_negative_order_positive():
    # coefficients of (1-z)^(-beta) are positive and increasing toward 1 slowly
    b = series_coefficients(-0.5, 50)
    assert b[0] == 1.0
    assert np.all(b > 0.0)


def test_rl_integral_of_one():
    # right-sided integral of order beta=1-alpha of u=1 is (T-t)^beta/Gamma(1+beta)
    alpha = 0.5
    grid = TimeGrid(400)
    u = np.ones(grid.N + 1)
    out = rl_integral(alpha, grid, u)
    exact = (grid.T - grid.nodes) ** 0.5 / gamma_fn(1.5)
    assert out[-1] == 0.0
    assert np.max(np.abs(out[:-1] - exact[:-1])) < 0.06
    # interior nodes away from the endpoint are much more accurate
    assert np.max(np.abs(out[: grid.N // 2] - exact[: grid.N // 2])) < 0.005


def test_rl_integral_linear_oracle():
    # integral of (T-s) is (T-t)^(1+beta)/Gamma(2+beta)
    alpha = 0.5
    errs = []
    for N in (200, 400):
        grid = TimeGrid(N)
        u = grid.T - grid.nodes
        out = rl_integral(alpha, grid, u)
        exact = (grid.T - grid.nodes) ** 1.5 / gamma_fn(2.5)
        errs.append(np.max(np.abs(out - exact)))
    assert errs[0] < 0.005
    assert errs[0] / errs[1] > 1.5


def test_rl_integral_linearity_and_terminal_zero():
    grid = TimeGrid(32)
    rng = np.random.default_rng(9)
    u = rng.standard_normal(grid.N + 1)
    v = rng.standard_normal(grid.N + 1)
    lhs = rl_integral(0.3, grid, u + 4.0 * v)
    rhs = rl_integral(0.3, grid, u) + 4.0 * rl_integral(0.3, grid, v)
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    assert lhs[-1] == 0.0


def test_rl_integral_requires_full_grid():
    grid = TimeGrid(10)
    with pytest.raises(InvalidParameterError):
        rl_integral(0.5, grid, np.zeros(5))


def test_gamma_fn():
    assert abs(gamma_fn(1.5) - GAMMA_15) < 1e-15
    assert gamma_fn(1.0) == 1.0
    assert abs(gamma_fn(4.0) - 6.0) < 1e-12
    with pytest.raises(InvalidParameterError):
        gamma_fn(0.0)
