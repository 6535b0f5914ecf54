"""Gibbs sampler: exact conditional parameters, Monte Carlo checks, chain behavior."""

import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from btrend import (
    PriorSpec,
    RngStream,
    SamplerConfig,
    difference_operator,
    run_chain,
    summarize,
)
from btrend.gibbs import (
    ChainDraws,
    draws_table,
    lambda_params,
    omega_params,
    sigma2_params,
    step_f,
    step_lambda,
    step_omega,
    step_sigma2,
)

from oracles import batch_means_se, dense_gibbs_chain


def dhm_data(n=100, sigma=0.05, stream=0):
    x = np.linspace(0.0, 1.0, n)
    truth = np.exp(-7.5 * x) * np.cos(10.0 * np.pi * x)
    y = truth + sigma * RngStream(7, stream).standard_normal(n)
    return x, y, truth


class TestConditionalParameters:
    """The distribution parameters, on hand-computed instances."""

    def test_omega_params(self):
        mean, shape = omega_params(lam=2.0, sigma2=1.0, abs_df=np.array([0.5]))
        assert_allclose(mean, [4.0])
        assert shape == 4.0

        mean, shape = omega_params(lam=1.0, sigma2=4.0, abs_df=np.array([2.0]))
        assert_allclose(mean, [1.0])
        assert shape == 1.0

    def test_sigma2_params(self):
        y = np.array([1.0, 2.0, 3.0])
        f = np.ones(3)
        df = np.zeros(2)  # first differences of a constant
        shape, scale = sigma2_params(y, f, df, omega=np.ones(2))
        assert shape == 3
        assert scale == 2.5

    def test_sigma2_params_zero_residual(self):
        y = f = np.array([1.0, 2.0, 4.0])
        df = np.array([1.0, 2.0])
        _, scale = sigma2_params(y, f, df, omega=np.array([2.0, 4.0]))
        assert scale == 0.5 * (1.0 / 2.0 + 4.0 / 4.0)

    def test_lambda_params_dexp(self):
        prior = PriorSpec("dexp", alpha=1.0, rho=0.01)
        shape, rate = lambda_params(prior, omega=np.array([2.0, 2.0, 2.0]),
                                    abs_df=None, sigma=None)
        assert shape == 4.0
        assert_allclose(rate, 3.01)

    def test_lambda_params_gdp(self):
        prior = PriorSpec("gdp", alpha=1.0, rho=0.01)
        shape, rate = lambda_params(prior, omega=np.zeros(3),
                                    abs_df=np.array([0.5, 0.5, 0.5]), sigma=0.5)
        assert shape == 4.0
        assert_allclose(rate, 3.01)


class TestStepF:
    def test_conditional_mean_hand_solved(self):
        # n=3, k=0, omega=(1,1): precision ((2,-1,0),(-1,3,-1),(0,-1,2))
        y = np.array([0.0, 3.0, 0.0])
        D = difference_operator(np.arange(3.0), 0)
        rng = RngStream(21)
        draws = np.array([
            step_f(rng, y, np.ones(2), 1.0, D)[0] for _ in range(40000)
        ])
        assert_allclose(draws.mean(axis=0), [0.75, 1.5, 0.75], atol=0.02)

    def test_vanishing_penalty_mean_is_y(self):
        y = np.array([2.0, -1.0, 0.5, 3.0])
        D = difference_operator(np.arange(4.0), 0)
        rng = RngStream(22)
        f, _, _, _, _ = step_f(rng, y, np.full(3, 1e14), 1e-20, D)
        assert_allclose(f, y, atol=1e-6)

    def test_guard_resamples_then_clamps(self):
        y = np.array([0.0, 3.0, 0.0])
        D = difference_operator(np.arange(3.0), 0)
        rng = RngStream(23)
        # impossible threshold: every draw violates, so the guard exhausts and clamps
        f, df, abs_df, n_res, clamped = step_f(rng, y, np.ones(2), 1.0, D,
                                               guard_threshold=1e6, guard_max_attempts=3)
        assert clamped
        assert n_res == 3
        assert np.all(abs_df >= 1e6)
        assert np.abs(df).max() < 1e6  # the true differences were left alone


class TestStepOmega:
    def test_monte_carlo_reciprocal_mean(self):
        # E[1/omega_j] = lam * sigma / |Df|_j
        lam, sigma2 = 2.0, 0.25
        abs_df = np.full(10**6, 0.4)
        rng = RngStream(24)
        omega, n_capped = step_omega(rng, lam, sigma2, abs_df)
        want = lam * np.sqrt(sigma2) / 0.4
        assert n_capped == 0
        assert abs((1.0 / omega).mean() - want) < 0.01 * want

    def test_positivity(self):
        rng = RngStream(25)
        omega, _ = step_omega(rng, 1e-4, 1e-6, np.full(1000, 1e-10))
        assert np.all(omega > 0)

    def test_cap_counts_events(self):
        rng = RngStream(26)
        omega, n_capped = step_omega(rng, 10.0, 1.0, np.full(1000, 1e-9), cap=1.0)
        assert n_capped == 1000
        assert np.all(1.0 / omega <= 1.0 + 1e-12)


class TestStepSigma2:
    def test_monte_carlo_mean(self):
        # fixed scale s, shape n: inverse-gamma mean s / (n - 1)
        y = np.array([1.0, 2.0, 3.0])
        f = np.ones(3)
        df = np.zeros(2)
        rng = RngStream(27)
        draws = np.array([step_sigma2(rng, y, f, df, np.ones(2)) for _ in range(10**5)])
        assert abs(draws.mean() - 2.5 / 2.0) < 0.01

    def test_zero_scale_is_an_error(self):
        rng = RngStream(28)
        y = f = np.array([1.0, 2.0])
        with pytest.raises(FloatingPointError):
            step_sigma2(rng, y, f, np.zeros(1), np.ones(1))


class TestStepLambda:
    def test_dexp_draws_lambda_squared(self):
        prior = PriorSpec("dexp", alpha=1.0, rho=0.01)
        rng = RngStream(29)
        draws = np.array([
            step_lambda(rng, prior, np.array([2.0, 2.0, 2.0]), None, None)
            for _ in range(10**5)
        ])
        # lambda^2 ~ gamma(4, 3.01), so E[lambda^2] = 4/3.01
        assert abs((draws**2).mean() - 4.0 / 3.01) < 0.02

    def test_gdp_mean(self):
        prior = PriorSpec("gdp", alpha=1.0, rho=0.01)
        rng = RngStream(30)
        draws = np.array([
            step_lambda(rng, prior, np.zeros(3), np.array([0.5, 0.5, 0.5]), 0.5)
            for _ in range(10**5)
        ])
        assert abs(draws.mean() - 4.0 / 3.01) < 0.02

    def test_monotone_decreasing_in_rho(self):
        omega = np.array([1.0, 1.5, 2.0])
        means = []
        for rho in (0.01, 1.0, 100.0):
            rng = RngStream(31)
            prior = PriorSpec("dexp", alpha=1.0, rho=rho)
            means.append(np.mean([
                step_lambda(rng, prior, omega, None, None) for _ in range(20000)
            ]))
        assert means[0] > means[1] > means[2]


class TestRunChain:
    def test_iterations_equal_burnin_gives_empty(self):
        x, y, _ = dhm_data(20)
        draws = run_chain(y, x, 1, PriorSpec("gdp"), SamplerConfig(50, 50, seed=0))
        assert len(draws) == 0

    def test_retains_iterations_minus_burnin(self):
        x, y, _ = dhm_data(30)
        draws = run_chain(y, x, 2, PriorSpec("dexp"), SamplerConfig(40, 15, seed=0))
        assert len(draws) == 25
        assert draws.f.shape == (25, 30)
        assert draws.omega.shape == (25, 27)

    def test_determinism_end_to_end(self):
        x, y, _ = dhm_data(40)
        cfg = SamplerConfig(200, 50, seed=99, stream=3)
        a = run_chain(y, x, 3, PriorSpec("gdp"), cfg)
        b = run_chain(y, x, 3, PriorSpec("gdp"), cfg)
        assert np.array_equal(a.f, b.f)
        assert np.array_equal(a.sigma2, b.sigma2)
        assert np.array_equal(a.lam, b.lam)

    def test_positivity_every_sweep(self):
        x, y, _ = dhm_data(50)
        for family in ("dexp", "gdp"):
            draws = run_chain(y, x, 3, PriorSpec(family), SamplerConfig(300, 0, seed=1))
            assert np.all(draws.omega > 0)
            assert np.all(draws.sigma2 > 0)
            assert np.all(draws.lam > 0)

    def test_guard_floor_respected(self):
        x, y, _ = dhm_data(60)
        cfg = SamplerConfig(300, 100, seed=2, guard_threshold=1e-10)
        draws = run_chain(y, x, 3, PriorSpec("gdp"), cfg)
        assert draws.diagnostics.min_abs_df_used >= 1e-10

    def test_f_frozen_between_redraws(self):
        x, y, _ = dhm_data(25)
        draws = run_chain(y, x, 1, PriorSpec("gdp"),
                          SamplerConfig(6, 0, f_every=2, seed=5))
        assert np.array_equal(draws.f[0], draws.f[1])
        assert np.array_equal(draws.f[2], draws.f[3])
        assert not np.array_equal(draws.f[1], draws.f[2])

    def test_mismatched_inputs_rejected(self):
        x, y, _ = dhm_data(20)
        with pytest.raises(ValueError):
            run_chain(y[:-1], x, 1, PriorSpec("gdp"), SamplerConfig(10, 0))
        D = difference_operator(x, 2)
        with pytest.raises(ValueError, match="does not match"):
            run_chain(y, x, 1, PriorSpec("gdp"), SamplerConfig(10, 0), D=D)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(10, 20)
        with pytest.raises(ValueError):
            SamplerConfig(10, 0, f_every=0)
        with pytest.raises(ValueError):
            PriorSpec("cauchy")
        with pytest.raises(ValueError):
            PriorSpec("gdp", alpha=0.0)

    def test_two_seeds_agree_on_dhm(self):
        x, y, _ = dhm_data(100, 0.05)
        cfg_a = SamplerConfig(3000, 1000, seed=1, stream=0)
        cfg_b = SamplerConfig(3000, 1000, seed=2, stream=0)
        a = run_chain(y, x, 3, PriorSpec("gdp", 1.0, 0.01), cfg_a)
        b = run_chain(y, x, 3, PriorSpec("gdp", 1.0, 0.01), cfg_b)
        fa, fb = a.f.mean(axis=0), b.f.mean(axis=0)
        se = np.array([
            np.hypot(batch_means_se(a.f[:, i]), batch_means_se(b.f[:, i]))
            for i in range(len(fa))
        ])
        assert np.mean(np.abs(fa - fb)) < 3.0 * np.mean(se)


class TestAgainstDenseSampler:
    """Posterior agreement with an independently coded dense-matrix sampler."""

    @pytest.mark.parametrize("family", ["dexp", "gdp"])
    def test_posterior_means_agree(self, family):
        rng = RngStream(42)
        n = 15
        x = np.arange(float(n))
        y = 0.3 * x - 0.02 * (x - 7.0) ** 2 + 0.5 * rng.standard_normal(n)

        mine = run_chain(y, x, 1, PriorSpec(family, 1.0, 0.1),
                         SamplerConfig(12000, 2000, seed=9, stream=1))
        f_ref, s2_ref, _ = dense_gibbs_chain(y, x, 1, family, 1.0, 0.1, 12000, 2000, seed=123)

        for i in range(n):
            se = np.hypot(batch_means_se(mine.f[:, i]), batch_means_se(f_ref[:, i]))
            assert abs(mine.f[:, i].mean() - f_ref[:, i].mean()) < 5.0 * se
        se2 = np.hypot(batch_means_se(mine.sigma2), batch_means_se(s2_ref))
        assert abs(mine.sigma2.mean() - s2_ref.mean()) < 5.0 * se2


class TestSigma2Coverage:
    def test_interval_covers_truth_in_most_replications(self):
        hits = 0
        reps = 50
        for rep in range(reps):
            x = np.linspace(0.0, 1.0, 100)
            truth = np.exp(-7.5 * x) * np.cos(10.0 * np.pi * x)
            y = truth + 0.05 * RngStream(100, rep).standard_normal(100)
            draws = run_chain(y, x, 3, PriorSpec("gdp", 1.0, 0.01),
                              SamplerConfig(1500, 500, seed=11, stream=rep))
            s = summarize(draws)
            hits += s.sigma2_lower <= 0.05**2 <= s.sigma2_upper
        assert hits >= 0.6 * reps


class TestSummarize:
    def make_draws(self, f):
        f = np.asarray(f, dtype=float)
        r = f.shape[0]
        return ChainDraws(x=np.arange(float(f.shape[1])), k=0, f=f,
                          omega=np.ones((r, 1)), sigma2=np.full(r, 2.0),
                          lam=np.linspace(1.0, 2.0, r))

    def test_constant_draws_zero_width(self):
        draws = self.make_draws(np.tile([1.5, -0.5], (10, 1)))
        s = summarize(draws)
        assert_allclose(s.f_mean, [1.5, -0.5])
        assert_allclose(s.f_lower, s.f_upper)
        assert s.sigma2_lower == s.sigma2_upper == 2.0
        assert s.n_draws == 10

    def test_quantile_convention_linear_interpolation(self):
        draws = self.make_draws(np.array([[1.0], [2.0], [3.0], [4.0]]))
        s = summarize(draws, level=0.5)
        assert_allclose(s.f_lower, [1.75])
        assert_allclose(s.f_upper, [3.25])

    def test_ordering_invariant(self):
        rng = np.random.default_rng(0)
        draws = self.make_draws(rng.standard_normal((500, 4)))
        s = summarize(draws)
        assert np.all(s.f_lower <= s.f_mean)
        assert np.all(s.f_mean <= s.f_upper)
        assert s.sigma2_lower <= s.sigma2_mean <= s.sigma2_upper

    def test_too_few_draws(self):
        with pytest.raises(ValueError, match="at least 2"):
            summarize(self.make_draws(np.array([[1.0]])))

    def test_bad_level(self):
        with pytest.raises(ValueError, match="level"):
            summarize(self.make_draws(np.zeros((5, 2))), level=1.0)


class TestExports:
    def test_draws_table_layout(self):
        x, y, _ = dhm_data(10)
        draws = run_chain(y, x, 1, PriorSpec("gdp"), SamplerConfig(5, 3, seed=0))
        rows = list(draws_table(draws))
        per_iter = 10 + 8 + 2  # f, omega, sigma2 + lambda
        assert len(rows) == 2 * per_iter
        assert rows[0][:3] == (0, "f", 0)
        assert rows[per_iter - 1][1] == "lambda"
        assert draws.state(1).sigma2 == draws.sigma2[1]


class TestCostScaling:
    def test_per_sweep_time_roughly_linear_in_n(self):
        times = []
        for n in (200, 400, 800):
            x = np.linspace(0.0, 1.0, n)
            y = np.sin(3.0 * x) + 0.1 * RngStream(1, n).standard_normal(n)
            cfg = SamplerConfig(100, 0, seed=3)
            best = np.inf
            for _ in range(2):
                t0 = time.perf_counter()
                run_chain(y, x, 3, PriorSpec("gdp"), cfg)
                best = min(best, time.perf_counter() - t0)
            times.append(best)
        assert times[1] / times[0] < 3.0
        assert times[2] / times[1] < 3.0
