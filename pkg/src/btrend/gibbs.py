"""Gibbs sampler for Bayesian trend filtering.

The hierarchical model places a Gaussian likelihood on the observations and
a scale-mixture-of-normals shrinkage prior on the (k+1)-th divided
differences of the latent function values ``f``.  Two prior families are
supported for the penalty weight ``lambda``:

* ``dexp`` -- double exponential (Laplace) conditional prior, induced by a
  gamma prior on ``lambda^2``;
* ``gdp``  -- generalized double Pareto, induced by a gamma prior on
  ``lambda`` itself.

One sweep updates, in this order: ``f`` (only on every ``f_every``-th sweep),
the latent scales ``omega``, ``lambda``, and the noise variance ``sigma2``.
All conditionals are conjugate; the ``f`` update solves a banded SPD system
so a sweep costs ``O(n (k+1)^2)`` rather than a dense ``O(n^3)`` inversion.

Numerical guard: the ``omega`` conditional inverts ``|Df|``, so a draw of
``f`` with any ``|Df|_j`` below ``guard_threshold`` is discarded and the
whole vector redrawn; if redraws are exhausted, the offending entries are
clamped to the threshold for the downstream ``omega`` update only, and a
diagnostics counter records the event.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .difference import check_grid, difference_operator
from .rng import (
    RngStream,
    draw_gamma,
    draw_gaussian_banded,
    draw_inverse_gamma,
    draw_inverse_gaussian,
)

PRIOR_FAMILIES = ("dexp", "gdp")

# The f-update factorizes I + D' diag(1/omega) D.  Heavy-tailed draws of
# 1/omega can push the Gram term so far above the identity that positive
# definiteness is lost to roundoff (the identity falls below the Gram's
# floating-point granularity).  Weights are therefore capped so the Gram
# stays below this magnitude: shrinkage at the cap is already numerically
# infinite, so the fitted function is unaffected, and cap events are counted
# in the diagnostics.
GRAM_LIMIT = 1e12
_WEIGHT_FLOOR = 1e-290  # keeps omega = 1/weight finite in float64


def weight_cap(D):
    """Largest per-element Gram weight keeping ``I + D' W D`` representable."""
    colsq = np.zeros(D.n)
    m = D.m
    for j in range(D.k + 2):
        colsq[j : j + m] += D.bands[:, j] ** 2
    return GRAM_LIMIT / float(colsq.max())


@dataclass(frozen=True)
class PriorSpec:
    """Shrinkage prior family plus its gamma hyperparameters."""

    family: str
    alpha: float = 1.0
    rho: float = 0.01

    def __post_init__(self):
        if self.family not in PRIOR_FAMILIES:
            raise ValueError(f"prior family must be one of {PRIOR_FAMILIES}, got {self.family!r}")
        if self.alpha <= 0 or self.rho <= 0:
            raise ValueError("prior hyperparameters alpha and rho must be strictly positive")


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, thinning of the f-update, guard policy, and rng identity."""

    iterations: int
    burnin: int
    f_every: int = 1
    guard_threshold: float = 1e-10
    guard_max_attempts: int = 100
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.burnin < 0 or self.iterations < self.burnin:
            raise ValueError("need iterations >= burnin >= 0")
        if self.f_every < 1:
            raise ValueError("f_every must be at least 1")
        if self.guard_threshold <= 0:
            raise ValueError("guard_threshold must be strictly positive")
        if self.guard_max_attempts < 0:
            raise ValueError("guard_max_attempts must be nonnegative")


@dataclass
class ChainState:
    """One Gibbs iterate: function values, latent scales, variance, penalty."""

    f: np.ndarray
    omega: np.ndarray
    sigma2: float
    lam: float


@dataclass
class GuardDiagnostics:
    """Counters for the |Df| resampling guard, accumulated over a chain."""

    n_sweeps: int = 0
    n_f_draws: int = 0
    n_resample_sweeps: int = 0
    n_resamples: int = 0
    n_clamp_events: int = 0
    n_weight_caps: int = 0
    min_abs_df_used: float = np.inf

    def merge(self, other):
        self.n_sweeps += other.n_sweeps
        self.n_f_draws += other.n_f_draws
        self.n_resample_sweeps += other.n_resample_sweeps
        self.n_resamples += other.n_resamples
        self.n_clamp_events += other.n_clamp_events
        self.n_weight_caps += other.n_weight_caps
        self.min_abs_df_used = min(self.min_abs_df_used, other.min_abs_df_used)


@dataclass
class ChainDraws:
    """Post-burn-in draws, stacked along the first axis."""

    x: np.ndarray
    k: int
    f: np.ndarray        # (draws, n)
    omega: np.ndarray    # (draws, n - k - 1)
    sigma2: np.ndarray   # (draws,)
    lam: np.ndarray      # (draws,)
    diagnostics: GuardDiagnostics = field(default_factory=GuardDiagnostics)

    def __len__(self):
        return self.f.shape[0]

    def state(self, i):
        return ChainState(
            f=self.f[i], omega=self.omega[i], sigma2=float(self.sigma2[i]), lam=float(self.lam[i])
        )


@dataclass(frozen=True)
class PosteriorSummary:
    """Pointwise posterior means and equal-tailed credible intervals.

    Quantiles use linear interpolation between order statistics
    (``numpy.quantile`` with ``method="linear"``).
    """

    f_mean: np.ndarray
    f_lower: np.ndarray
    f_upper: np.ndarray
    sigma2_mean: float
    sigma2_lower: float
    sigma2_upper: float
    lambda_mean: float
    level: float
    n_draws: int


# --------------------------------------------------------------------------
# Full-conditional parameters.  Kept as standalone functions so each formula
# is unit-testable against hand-computed instances.
# --------------------------------------------------------------------------

def omega_params(lam, sigma2, abs_df):
    """Inverse-Gaussian (mean, shape) for the 1/omega_j conditionals.

    mean_j = lam * sigma / |Df|_j, shape = lam^2, elementwise over j.
    """
    mean = lam * np.sqrt(sigma2) / abs_df
    return mean, lam * lam


def sigma2_params(y, f, df, omega):
    """Inverse-gamma (shape, scale) for the sigma^2 conditional.

    shape = n and scale = 0.5*||y - f||^2 + 0.5 * sum_j (Df)_j^2 / omega_j.
    """
    resid = y - f
    scale = 0.5 * float(resid @ resid) + 0.5 * float(np.sum(df * df / omega))
    return y.size, scale


def lambda_params(prior, omega, abs_df, sigma):
    """Gamma (shape, rate) for the lambda conditional.

    Under ``dexp`` the gamma draw is of lambda^2 with rate sum(omega)/2 + rho;
    under ``gdp`` it is of lambda itself with rate ||Df||_1 / sigma + rho.
    The shape is m + alpha in both cases, m = len(omega) = n - k - 1.
    """
    shape = omega.size + prior.alpha
    if prior.family == "dexp":
        rate = 0.5 * float(np.sum(omega)) + prior.rho
    else:
        rate = float(np.sum(abs_df)) / sigma + prior.rho
    return shape, rate


# --------------------------------------------------------------------------
# Full-conditional updates.
# --------------------------------------------------------------------------

def step_f(rng, y, omega, sigma2, D, guard_threshold=1e-10, guard_max_attempts=100):
    """Draw f from N((I + Sf^-1)^-1 y, sigma^2 (I + Sf^-1)^-1), guarded.

    ``Sf^-1 = D' diag(1/omega) D``.  Returns ``(f, df, abs_df, n_resamples,
    clamped)`` where ``abs_df`` is ``|Df|`` with any sub-threshold entries
    clamped after guard exhaustion, and ``n_resamples`` counts full redraws
    of the vector beyond the first.
    """
    precision = D.weighted_gram(1.0 / omega).add_identity()
    f = df = abs_df = None
    for attempt in range(guard_max_attempts + 1):
        f = draw_gaussian_banded(rng, y, precision, sigma2)
        df = D.apply(f)
        abs_df = np.abs(df)
        if abs_df.min() >= guard_threshold:
            return f, df, abs_df, attempt, False
    return f, df, np.maximum(abs_df, guard_threshold), guard_max_attempts, True


def step_omega(rng, lam, sigma2, abs_df, cap=None):
    """Draw each omega_j as the reciprocal of an inverse-Gaussian variate.

    Callers must pass ``abs_df`` already guarded (all entries at or above
    the guard threshold), as produced by :func:`step_f`.  ``cap`` bounds the
    reciprocal draws (the Gram weights) for numerical stability; see
    :func:`weight_cap`.  Returns ``(omega, n_capped)``.
    """
    mean, shape = omega_params(lam, sigma2, abs_df)
    v = draw_inverse_gaussian(rng, mean, shape)
    n_capped = 0
    if cap is not None:
        n_capped = int(np.count_nonzero(v > cap))
        v = np.minimum(v, cap)
    v = np.maximum(v, _WEIGHT_FLOOR)
    return 1.0 / v, n_capped


def step_sigma2(rng, y, f, df, omega):
    """Draw sigma^2 from its inverse-gamma conditional."""
    shape, scale = sigma2_params(y, f, df, omega)
    if scale <= 0:
        raise FloatingPointError("sigma^2 conditional received a nonpositive scale")
    return draw_inverse_gamma(rng, shape, scale)


def step_lambda(rng, prior, omega, abs_df, sigma):
    """Draw lambda; under dexp the gamma draw is of lambda^2, so take the root."""
    shape, rate = lambda_params(prior, omega, abs_df, sigma)
    draw = draw_gamma(rng, shape, rate)
    return float(np.sqrt(draw)) if prior.family == "dexp" else float(draw)


def run_chain(y, x, k, prior, config, D=None):
    """Run one Gibbs chain and return the post-burn-in draws.

    Parameters
    ----------
    y : array, shape (n,)
        Observations at the grid points.
    x : array, shape (n,)
        Strictly increasing inputs.
    k : int
        Order of the fitted piecewise polynomial (k=3 for cubic).
    prior : PriorSpec
    config : SamplerConfig
    D : DifferenceOperator, optional
        Prebuilt operator for (x, k); built on the fly when omitted.

    Initialization: ``f = y``, ``omega = 1``, ``sigma2 = var(y)``,
    ``lambda = 1``.  ``f`` is retained every sweep even though it is only
    redrawn on every ``f_every``-th sweep.
    """
    y = np.ascontiguousarray(y, dtype=float)
    x = check_grid(x, k)
    if y.shape != x.shape:
        raise ValueError(f"y has shape {y.shape} but grid has shape {x.shape}")
    if D is None:
        D = difference_operator(x, k)
    elif D.n != x.size or D.k != k:
        raise ValueError("supplied operator does not match (x, k)")

    n = y.size
    m = D.m
    rng = RngStream(config.seed, config.stream)
    diag = GuardDiagnostics()
    cap = weight_cap(D)

    f = y.copy()
    # unit initial omega, except that the implied Gram weights 1/omega must
    # already respect the representability cap on fine grids
    omega = np.full(m, max(1.0, 1.0 / cap))
    sigma2 = float(np.var(y))
    if sigma2 <= 0:
        sigma2 = 1.0
    lam = 1.0
    df = D.apply(f)
    abs_df = np.maximum(np.abs(df), config.guard_threshold)

    keep = config.iterations - config.burnin
    out_f = np.empty((keep, n))
    out_omega = np.empty((keep, m))
    out_sigma2 = np.empty(keep)
    out_lam = np.empty(keep)

    for it in range(config.iterations):
        try:
            if it % config.f_every == 0:
                f, df, abs_df, n_res, clamped = step_f(
                    rng, y, omega, sigma2, D,
                    config.guard_threshold, config.guard_max_attempts,
                )
                diag.n_f_draws += 1
                diag.n_resamples += n_res
                diag.n_resample_sweeps += n_res > 0
                diag.n_clamp_events += clamped
            diag.min_abs_df_used = min(diag.min_abs_df_used, float(abs_df.min()))
            omega, n_capped = step_omega(rng, lam, sigma2, abs_df, cap=cap)
            diag.n_weight_caps += n_capped
            lam = step_lambda(rng, prior, omega, abs_df, np.sqrt(sigma2))
            sigma2 = step_sigma2(rng, y, f, df, omega)
        except Exception as exc:
            exc.args = (f"sweep {it}: {exc}",)
            raise
        diag.n_sweeps += 1
        if it >= config.burnin:
            j = it - config.burnin
            out_f[j] = f
            out_omega[j] = omega
            out_sigma2[j] = sigma2
            out_lam[j] = lam

    return ChainDraws(
        x=x, k=k, f=out_f, omega=out_omega, sigma2=out_sigma2, lam=out_lam, diagnostics=diag
    )


def summarize(draws, level=0.95):
    """Posterior means and equal-tailed intervals for f and sigma^2."""
    if len(draws) < 2:
        raise ValueError("need at least 2 retained draws to summarize")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    tail = 0.5 * (1.0 - level)
    f_lo, f_hi = np.quantile(draws.f, [tail, 1.0 - tail], axis=0, method="linear")
    s_lo, s_hi = np.quantile(draws.sigma2, [tail, 1.0 - tail], method="linear")
    return PosteriorSummary(
        f_mean=draws.f.mean(axis=0),
        f_lower=f_lo,
        f_upper=f_hi,
        sigma2_mean=float(draws.sigma2.mean()),
        sigma2_lower=float(s_lo),
        sigma2_upper=float(s_hi),
        lambda_mean=float(draws.lam.mean()),
        level=level,
        n_draws=len(draws),
    )


def draws_table(draws):
    """Yield (iteration, parameter, index, value) rows for CSV export."""
    for i in range(len(draws)):
        for idx, v in enumerate(draws.f[i]):
            yield i, "f", idx, float(v)
        for idx, v in enumerate(draws.omega[i]):
            yield i, "omega", idx, float(v)
        yield i, "sigma2", 0, float(draws.sigma2[i])
        yield i, "lambda", 0, float(draws.lam[i])
