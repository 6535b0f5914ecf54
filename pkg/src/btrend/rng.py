"""Reproducible random-variate generation for the Gibbs sampler.

Every distribution the sampler touches is drawn through an :class:`RngStream`
so that a (seed, stream) pair reproduces an identical draw sequence
bit-for-bit.  Streams with different ids are statistically independent; one
stream is owned by exactly one chain or replication worker.

The multivariate Gaussian sampler works directly on a banded precision
matrix.  With the upper Cholesky factor ``U`` of the precision ``P``
(``P = U' U``) and a standard normal vector ``e``, the triangular solve
``U v = e`` gives ``cov(v) = U^{-1} U^{-T} = (U' U)^{-1} = P^{-1}``, so
``mean + sigma * v`` has exactly the requested covariance without ever
forming a dense inverse.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve_banded, solve_banded

_MAX_REDRAWS = 1000


class RngStream:
    """A seeded, stream-indexed wrapper around numpy's PCG64 generator."""

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)

    def choice_with_replacement(self, n, size):
        return self._gen.integers(0, n, size=size)


def draw_gamma(rng, shape, rate, size=None):
    """Draw from the gamma distribution with the given shape and *rate*.

    Mean is ``shape / rate``.  Zero draws (possible underflow at very small
    shapes) are retried so the result is strictly positive.
    """
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("gamma shape and rate must be strictly positive")
    out = rng._gen.gamma(shape, 1.0 / rate, size=size)
    if np.ndim(out) == 0:
        for _ in range(_MAX_REDRAWS):
            if out > 0:
                return float(out)
            out = rng._gen.gamma(shape, 1.0 / rate, size=size)
    else:
        for _ in range(_MAX_REDRAWS):
            bad = ~(out > 0)
            if not bad.any():
                return out
            out[bad] = rng._gen.gamma(
                np.broadcast_to(shape, out.shape)[bad],
                np.broadcast_to(1.0 / rate, out.shape)[bad],
            )
    raise RuntimeError("gamma sampler failed to produce a positive draw")


def draw_inverse_gamma(rng, shape, scale, size=None):
    """Draw from the inverse gamma: the reciprocal of a gamma(shape, rate=scale) draw."""
    return 1.0 / draw_gamma(rng, shape, scale, size=size)


def draw_inverse_gaussian(rng, mean, shape, size=None):
    """Draw from the inverse-Gaussian distribution with mean ``mean`` and shape ``shape``.

    Uses the transformation method based on the unit roots of the quadratic
    in ``chi^2(1)`` followed by the acceptance step.  The *larger* root is
    the numerically safe one (a sum of nonnegative terms), so the smaller
    candidate root is formed as ``mean^2 / larger`` instead of the textbook
    difference formula, which cancels catastrophically for large chi-square
    values.  Nonpositive candidates from underflow are redrawn internally.
    """
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if np.any(mean <= 0) or np.any(shape <= 0):
        raise ValueError("inverse-Gaussian mean and shape must be strictly positive")
    scalar = size is None and mean.ndim == 0 and shape.ndim == 0
    if size is None:
        size = np.broadcast_shapes(mean.shape, shape.shape)
    mu_all = np.broadcast_to(mean, size).ravel()
    lam_all = np.broadcast_to(shape, size).ravel()

    out = np.empty(mu_all.shape)
    pending = np.arange(out.size)
    for _ in range(_MAX_REDRAWS):
        mu = mu_all[pending]
        lam = lam_all[pending]
        w = mu * rng._gen.standard_normal(mu.shape) ** 2
        larger = mu * (1.0 + (w + np.sqrt(w * (4.0 * lam + w))) / (2.0 * lam))
        smaller = mu * mu / larger
        take_small = rng._gen.random(mu.shape) <= mu / (mu + smaller)
        cand = np.where(take_small, smaller, larger)
        ok = (cand > 0) & np.isfinite(cand)
        out[pending[ok]] = cand[ok]
        pending = pending[~ok]
        if pending.size == 0:
            return float(out[0]) if scalar else out.reshape(size)
    raise RuntimeError("inverse-Gaussian sampler failed to produce a positive draw")


def draw_gaussian_banded(rng, rhs, precision, scale2):
    """Draw from ``N(P^{-1} rhs, scale2 * P^{-1})`` for a banded SPD precision ``P``.

    ``precision`` is a :class:`btrend.difference.BandedSPD`.  Total cost is
    one banded Cholesky plus two triangular solves, ``O(n * halfbw^2)``.
    Raises ``scipy.linalg.LinAlgError`` if the Cholesky factorization fails.
    """
    rhs = np.asarray(rhs, dtype=float)
    if scale2 <= 0:
        raise ValueError("scale2 must be strictly positive")
    cb = precision.cholesky()
    mean = cho_solve_banded((cb, False), rhs)
    e = rng._gen.standard_normal(precision.n)
    fluct = solve_banded((0, precision.halfbw), cb, e)
    return mean + np.sqrt(scale2) * fluct
