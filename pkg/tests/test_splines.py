"""Penalized-spline fitting: null-space exactness, GCV, degeneracy."""
import numpy as np
import pytest

from intraday_exec.errors import DegenerateInput
from intraday_exec.splines import (
    GCV_GRID,
    SplineModel,
    design_matrix,
    fit_pspline,
    knot_vector,
    second_diff_penalty,
)


def test_coefficient_count_matches_interior_knots_plus_degree_plus_one():
    x = np.linspace(0, 10, 50)
    y = np.sin(x)
    m = fit_pspline(x, y, n_interior_knots=7)
    assert len(m.coefficients) == len(m.knots) + 3 + 1
    assert np.all(np.diff(m.knots) > 0)


@pytest.mark.parametrize("gamma", [1e-4, 1.0, 1e4])
def test_affine_response_reproduced_exactly_for_any_gamma(gamma):
    rng = np.random.default_rng(5)
    x = np.sort(rng.uniform(0, 7, 60))
    y = 2.5 - 0.75 * x
    m = fit_pspline(x, y, n_interior_knots=9, gamma=gamma)
    np.testing.assert_allclose(m(x), y, atol=1e-8)


def test_large_gamma_converges_to_least_squares_line():
    rng = np.random.default_rng(6)
    x = np.sort(rng.uniform(-2, 3, 80))
    y = 1.0 + 0.5 * x + 0.8 * x**2
    m = fit_pspline(x, y, gamma=1e12)
    slope, intercept = np.polyfit(x, y, 1)
    np.testing.assert_allclose(m(x), intercept + slope * x, atol=1e-4)


def test_three_distinct_x_rejected():
    with pytest.raises(DegenerateInput):
        fit_pspline([0.0, 1.0, 2.0, 1.0, 0.0], [1, 2, 3, 2, 1])


def test_gcv_recovers_smooth_signal():
    rng = np.random.default_rng(42)
    x = np.sort(rng.uniform(0, 2 * np.pi, 300))
    truth = np.sin(x)
    y = truth + rng.normal(0, 0.1, x.size)
    m = fit_pspline(x, y)
    assert m.smoothing in GCV_GRID
    rmse = float(np.sqrt(np.mean((m(x) - truth) ** 2)))
    assert rmse < 0.05


def test_fit_is_deterministic():
    rng = np.random.default_rng(9)
    x = np.sort(rng.uniform(0, 5, 100))
    y = np.cos(x) + rng.normal(0, 0.2, x.size)
    m1 = fit_pspline(x, y)
    m2 = fit_pspline(x, y)
    np.testing.assert_array_equal(m1.coefficients, m2.coefficients)
    assert m1.smoothing == m2.smoothing


def test_evaluation_clamps_outside_training_domain():
    x = np.linspace(1, 4, 40)
    y = x**2
    m = fit_pspline(x, y, gamma=1e-4)
    assert m(10.0)[0] == pytest.approx(m(4.0)[0])
    assert m(-3.0)[0] == pytest.approx(m(1.0)[0])


def test_weights_steer_the_fit():
    x = np.linspace(0, 1, 30)
    y = np.where(x < 0.5, 0.0, 10.0)
    w_low = np.where(x < 0.5, 1.0, 1e-9)
    m = fit_pspline(x, y, weights=w_low, gamma=1e3)
    assert abs(m(0.25)[0]) < 0.5


def test_serialization_round_trip():
    x = np.linspace(0, 3, 40)
    y = np.exp(-x)
    m = fit_pspline(x, y)
    m2 = SplineModel.from_dict(m.to_dict())
    np.testing.assert_allclose(m2(x), m(x), rtol=0, atol=0)


def test_penalty_matrix_null_space_is_affine():
    p = second_diff_penalty(8)
    const = np.ones(8)
    lin = np.arange(8.0)
    assert np.allclose(p @ const, 0)
    assert np.allclose(p @ lin, 0)
    assert np.linalg.matrix_rank(p) == 6


def test_design_matrix_partition_of_unity():
    knots = knot_vector(0.0, 1.0, 5)
    x = np.linspace(0, 1, 37)
    b = design_matrix(x, knots)
    np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-12)
