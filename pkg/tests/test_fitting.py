"""Engine contract: minimization quality, covariance convention,
determinism, and the Monte Carlo error calibration oracle."""

import warnings

import numpy as np
import pytest

from dotkit.fitting import (FitProblem, UnderdeterminedFit, least_squares,
                            model_fit)


def gaussian(x, b, a, mu, s):
    return b + a * np.exp(-((x - mu) ** 2) / (2 * s**2))


def test_exact_linear_fit():
    x = np.arange(10.0)
    y = 2.0 * x
    res = model_fit(lambda xx, a: a * xx, x, y, [1.0])
    assert res.converged
    np.testing.assert_allclose(res.params, [2.0], rtol=1e-12)
    assert res.rss < 1e-20


def test_noiseless_gaussian_center_recovery():
    x = np.arange(0.0, 500.0)
    y = gaussian(x, 5.0, 120.0, 250.0, 8.0)
    res = model_fit(gaussian, x, y, [4.0, 100.0, 252.0, 10.0])
    assert res.converged
    assert abs(res.params[2] - 250.0) < 1e-6


def test_monte_carlo_error_calibration():
    # Oracle for the reported standard errors: over many Poisson
    # realizations (fitted with the matching per-point sigma vector) the
    # empirical scatter of the fitted center must match the mean reported
    # standard error within 20 %.
    x = np.arange(0.0, 80.0)
    truth = gaussian(x, 20.0, 150.0, 40.0, 6.0)
    sigma = np.sqrt(truth)
    rng = np.random.default_rng(42)
    centers, reported = [], []
    for _ in range(1000):
        y = rng.poisson(truth).astype(float)
        res = model_fit(gaussian, x, y, [18.0, 140.0, 41.0, 6.5], sigma=sigma)
        if res.converged:
            centers.append(res.params[2])
            reported.append(res.std_errors[2])
    assert len(centers) > 950
    empirical = np.std(centers, ddof=1)
    mean_reported = np.mean(reported)
    assert abs(empirical - mean_reported) / empirical < 0.20


def test_bitwise_reproducibility():
    x = np.arange(0.0, 120.0)
    y = gaussian(x, 3.0, 40.0, 60.0, 9.0) + np.sin(x)  # fixed pseudo-noise
    run = [model_fit(gaussian, x, y, [2.0, 35.0, 58.0, 8.0])
           for _ in range(2)]
    assert np.array_equal(run[0].params, run[1].params)
    assert np.array_equal(run[0].covariance, run[1].covariance)
    assert run[0].rss == run[1].rss


def test_scale_equivariance():
    x = np.arange(0.0, 200.0)
    y = gaussian(x, 10.0, 90.0, 100.0, 12.0) + np.cos(0.7 * x)
    c = 2.0
    res1 = model_fit(gaussian, x, y, [8.0, 80.0, 98.0, 11.0])
    res2 = model_fit(gaussian, x, c * y, [c * 8.0, c * 80.0, 98.0, 11.0])
    np.testing.assert_allclose(res2.params[1], c * res1.params[1], rtol=1e-9)
    np.testing.assert_allclose(res2.std_errors[1], c * res1.std_errors[1],
                               rtol=1e-9)
    np.testing.assert_allclose(res2.params[2], res1.params[2], rtol=1e-9)
    np.testing.assert_allclose(res2.params[3], res1.params[3], rtol=1e-9)


def test_ols_closed_form_errors():
    # straight-line fit: the engine's standard errors must match the
    # textbook ordinary-least-squares expressions
    x = np.arange(0.0, 25.0)
    y = 3.0 * x + 1.5 + np.sin(5.0 * x)  # deterministic residuals
    res = model_fit(lambda xx, a, b: a * xx + b, x, y, [1.0, 0.0])
    n = x.size
    resid = y - (res.params[0] * x + res.params[1])
    s2 = resid @ resid / (n - 2)
    sxx = np.sum((x - x.mean()) ** 2)
    slope_err = np.sqrt(s2 / sxx)
    intercept_err = np.sqrt(s2 * (1.0 / n + x.mean() ** 2 / sxx))
    np.testing.assert_allclose(res.std_errors[0], slope_err, rtol=1e-9)
    np.testing.assert_allclose(res.std_errors[1], intercept_err, rtol=1e-9)


def test_underdetermined_raises():
    with pytest.raises(UnderdeterminedFit):
        least_squares(FitProblem(lambda p: np.array([p[0] - 1.0]),
                                 [0.0, 0.0]))


def test_singular_normal_matrix_flagged():
    # duplicated parameter direction: J^T J is singular, pseudo-inverse used
    x = np.arange(0.0, 12.0)
    y = 2.0 * x + np.cos(x)

    def residual(p):
        return (p[0] + p[1]) * x - y

    res = least_squares(FitProblem(residual, [1.0, 1.0]))
    assert res.singular
    assert np.all(np.isfinite(res.std_errors))


def test_nonconvergence_warns_and_flags():
    x = np.arange(0.0, 150.0)
    y = gaussian(x, 2.0, 50.0, 75.0, 5.0) + np.sin(3.1 * x)

    problem = FitProblem(
        residual=lambda p: gaussian(x, *p) - y,
        x0=[0.0, 10.0, 20.0, 60.0],
        max_iterations=1,
    )
    with pytest.warns(RuntimeWarning):
        res = least_squares(problem)
    assert not res.converged


def test_bounds_are_respected():
    x = np.arange(0.0, 60.0)
    y = gaussian(x, 0.0, 50.0, 30.0, 4.0)
    res = model_fit(gaussian, x, y, [0.5, 40.0, 28.0, 5.0],
                    lower=[0.0, 0.0, 0.0, 4.5],
                    upper=[np.inf, np.inf, 59.0, 20.0])
    assert res.params[3] >= 4.5 - 1e-12


def test_sigma_weighting_changes_covariance():
    x = np.arange(0.0, 40.0)
    y = 2.0 * x + 1.0 + np.sin(2.0 * x)
    sigma = np.full_like(x, 2.0)
    unweighted = model_fit(lambda xx, a, b: a * xx + b, x, y, [1.0, 0.0])
    weighted = model_fit(lambda xx, a, b: a * xx + b, x, y, [1.0, 0.0],
                         sigma=sigma)
    # constant weights leave the optimum and the errors unchanged (the
    # residual variance estimate absorbs the scale)
    np.testing.assert_allclose(weighted.params, unweighted.params, rtol=1e-9)
    np.testing.assert_allclose(weighted.std_errors, unweighted.std_errors,
                               rtol=1e-7)


def test_initial_params_must_be_finite_and_in_bounds():
    with pytest.raises(ValueError):
        least_squares(FitProblem(lambda p: np.zeros(3), [np.nan]))
    with pytest.raises(ValueError):
        least_squares(FitProblem(lambda p: np.zeros(3), [2.0],
                                 lower=[0.0], upper=[1.0]))
