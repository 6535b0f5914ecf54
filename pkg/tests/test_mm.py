"""MM trend filter, cross-validation, and bootstrap intervals."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from btrend import (
    MMConfig,
    RngStream,
    bootstrap_intervals,
    default_lambda_grid,
    difference_operator,
    kfold_cv,
    mm_fit,
)
from btrend.mm import interleaved_folds, lambda_max, perturbed_objective

from oracles import dense_difference_operator, exact_trend_filter


def pw_linear_data(n=50, sigma=0.3, stream=0):
    x = np.arange(1.0, n + 1.0)
    truth = np.interp(x, [1.0, 20.0, 45.0, 80.0, 100.0], [0.0, 1.9, -1.1, 1.7, 0.7])
    y = truth + sigma * RngStream(55, stream).standard_normal(n)
    return x, y, truth


class TestMMFit:
    def test_lambda_zero_returns_data(self):
        x, y, _ = pw_linear_data()
        fit = mm_fit(y, x, 1, MMConfig(0.0))
        assert_allclose(fit.f_hat, y)
        assert fit.iterations == 1
        assert fit.converged

    def test_huge_lambda_collapses_to_mean(self):
        rng = RngStream(8)
        x = np.arange(20.0)
        y = rng.standard_normal(20)
        fit = mm_fit(y, x, 0, MMConfig(1e8, max_iter=2000))
        assert np.abs(fit.f_hat - y.mean()).max() < 1e-3

    def test_descent_on_perturbed_objective(self):
        rng = np.random.default_rng(9)
        for k in (0, 1, 2):
            for lam in (0.1, 2.0, 50.0):
                x = np.sort(rng.uniform(0.0, 30.0, size=40))
                y = np.sin(x / 3.0) + 0.4 * rng.standard_normal(40)
                fit = mm_fit(y, x, k, MMConfig(lam))
                assert fit.max_ascent <= 1e-8
                assert fit.objective_trace[0] >= fit.objective_trace[-1]

    def test_objective_value_reported(self):
        x, y, _ = pw_linear_data()
        fit = mm_fit(y, x, 1, MMConfig(3.0))
        D = difference_operator(x, 1)
        assert_allclose(fit.objective, perturbed_objective(y, D, fit.f_hat, 3.0, 1e-4))

    def test_nonconvergence_flagged(self):
        x, y, _ = pw_linear_data()
        fit = mm_fit(y, x, 1, MMConfig(5.0, max_iter=2))
        assert not fit.converged
        assert fit.iterations == 2

    def test_agrees_with_exact_solver(self):
        rng = np.random.default_rng(31)
        diffs = []
        for trial in range(20):
            n = int(rng.integers(20, 51))
            k = int(rng.integers(0, 2))
            x = np.cumsum(rng.uniform(0.5, 1.5, size=n))
            y = np.sin(x / 4.0) + 0.5 * rng.standard_normal(n)
            dense = dense_difference_operator(x, k)
            lam = float(rng.uniform(0.5, 4.0))
            f_star, rel_gap = exact_trend_filter(y, dense, lam)
            assert rel_gap < 2e-10
            fit = mm_fit(y, x, k, MMConfig(lam, max_iter=3000, tau=1e-8))
            diffs.append(np.mean(np.abs(fit.f_hat - f_star)))
        assert np.mean(diffs) <= 1e-2

    def test_shrinkage_monotone_in_lambda(self):
        x, y, _ = pw_linear_data()
        D = difference_operator(x, 1)
        ladder = np.geomspace(1e-3, 1e3, 13)
        norms = [np.abs(D.apply(mm_fit(y, x, 1, MMConfig(lam)).f_hat)).sum()
                 for lam in ladder]
        for a, b in zip(norms, norms[1:]):
            assert b <= a + 1e-6

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MMConfig(-1.0)
        with pytest.raises(ValueError):
            MMConfig(1.0, epsilon=0.0)
        with pytest.raises(ValueError):
            MMConfig(1.0, max_iter=0)


class TestLambdaGrid:
    def test_lambda_max_flattens_fit(self):
        x, y, _ = pw_linear_data()
        D = difference_operator(x, 1)
        top = lambda_max(y, D)
        fit = mm_fit(y, x, 1, MMConfig(2.0 * top, max_iter=2000))
        # above lambda_max the solution is the affine least-squares fit
        coef = np.polyfit(x, y, 1)
        assert np.abs(fit.f_hat - np.polyval(coef, x)).max() < 1e-2

    def test_default_grid_spans_and_sorted(self):
        x, y, _ = pw_linear_data()
        D = difference_operator(x, 1)
        grid = default_lambda_grid(y, D, size=16)
        assert grid.size == 16
        assert np.all(np.diff(grid) > 0)
        assert_allclose(grid[-1] / grid[0], 1e5, rtol=1e-6)


class TestKFoldCV:
    def test_single_lambda_grid(self):
        x, y, _ = pw_linear_data()
        cv = kfold_cv(y, x, 1, [0.37], folds=5)
        assert cv.lam == 0.37
        assert cv.cv_errors.shape == (1,)

    def test_pure_noise_returns_finite_minimizer(self):
        rng = RngStream(77)
        x = np.arange(40.0)
        y = rng.standard_normal(40)
        grid = np.geomspace(1e-4, 1e4, 9)
        cv = kfold_cv(y, x, 1, grid, folds=5)
        assert cv.lam in grid
        assert np.all(np.isfinite(cv.cv_errors))

    def test_ties_prefer_larger_lambda(self):
        x, y, _ = pw_linear_data()
        cv = kfold_cv(y, x, 1, [0.5, 0.5, 0.5], folds=5)
        assert cv.lam == 0.5
        # duplicated grid entries collapse
        assert cv.lambda_grid.shape == (1,)

    def test_interleaved_assignment(self):
        folds = interleaved_folds(7, 3)
        assert list(folds) == [0, 1, 2, 0, 1, 2, 0]

    def test_cv_beats_undersmoothing_on_structured_data(self):
        grid = None
        wins = 0
        reps = 50
        for rep in range(reps):
            x, y, truth = pw_linear_data(50, 0.3, stream=rep)
            D = difference_operator(x, 1)
            if grid is None:
                grid = default_lambda_grid(y, D, size=12)
            cv = kfold_cv(y, x, 1, grid, folds=5)
            f_cv = mm_fit(y, x, 1, MMConfig(cv.lam), D=D).f_hat
            f_small = mm_fit(y, x, 1, MMConfig(grid[0]), D=D).f_hat
            wins += np.mean((f_cv - truth) ** 2) < np.mean((f_small - truth) ** 2)
        assert wins >= 0.8 * reps

    def test_determinism(self):
        x, y, _ = pw_linear_data()
        grid = np.geomspace(1e-3, 1e2, 8)
        a = kfold_cv(y, x, 1, grid, folds=5)
        b = kfold_cv(y, x, 1, grid, folds=5)
        assert a.lam == b.lam
        assert np.array_equal(a.cv_errors, b.cv_errors)

    def test_fold_validation(self):
        x, y, _ = pw_linear_data(10)
        with pytest.raises(ValueError, match="folds"):
            kfold_cv(y, x, 1, [1.0], folds=6)
        with pytest.raises(ValueError, match="nonempty"):
            kfold_cv(y, x, 1, [], folds=5)


class TestBootstrap:
    def test_zero_residuals_zero_width(self):
        x = np.arange(30.0)
        y = 2.0 + 0.3 * x  # affine data, k=1: fitted exactly at lambda -> anything
        band = bootstrap_intervals(y, x, 1, 1.0, 150, rng=RngStream(3))
        assert_allclose(band.lower, band.f_hat, atol=1e-8)
        assert_allclose(band.upper, band.f_hat, atol=1e-8)
        assert band.n_dropped == 0

    def test_width_grows_with_noise(self):
        widths = []
        for sigma in (0.2, 0.4):
            x, y, _ = pw_linear_data(50, sigma, stream=13)
            band = bootstrap_intervals(y, x, 1, 2.0, 200, rng=RngStream(4))
            widths.append(np.mean(band.upper - band.lower))
        assert widths[1] > widths[0]

    def test_pointwise_coverage_on_single_knot_function(self):
        # n=50 tent with one interior knot; average pointwise coverage over
        # 20 replications (single replications can fail badly when CV picks
        # a tiny lambda, which is the known failure mode of this pipeline)
        cover = []
        for rep in range(20):
            x = np.arange(1.0, 51.0)
            truth = np.where(x <= 25.0, 0.08 * (x - 1.0), 0.08 * 24.0 - 0.06 * (x - 25.0))
            y = truth + 0.3 * RngStream(55, 20 + rep).standard_normal(50)
            grid = default_lambda_grid(y, difference_operator(x, 1), size=12)
            lam = kfold_cv(y, x, 1, grid, folds=10).lam
            band = bootstrap_intervals(y, x, 1, lam, 500, rng=RngStream(5, rep))
            cover.append(np.mean((band.lower <= truth) & (truth <= band.upper)))
        assert np.mean(cover) >= 0.8

    def test_needs_at_least_100_replicates(self):
        x, y, _ = pw_linear_data()
        with pytest.raises(ValueError, match="100"):
            bootstrap_intervals(y, x, 1, 1.0, 99)

    def test_deterministic_given_stream(self):
        x, y, _ = pw_linear_data()
        a = bootstrap_intervals(y, x, 1, 2.0, 120, rng=RngStream(6, 1))
        b = bootstrap_intervals(y, x, 1, 2.0, 120, rng=RngStream(6, 1))
        assert np.array_equal(a.lower, b.lower)
        assert np.array_equal(a.upper, b.upper)
