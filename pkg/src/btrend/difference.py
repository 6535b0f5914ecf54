"""Discrete difference operators for trend filtering penalties.

Builds the order-(k+1) divided-difference matrix for a strictly increasing
grid of inputs, applies it without ever materializing a dense matrix, and
forms the weighted Gram matrix ``D' diag(w) D`` in symmetric band storage.

Band storage convention (internal contract)
-------------------------------------------
A ``DifferenceOperator`` of order ``k`` on ``n`` inputs is an
``m x n`` matrix with ``m = n - k - 1`` rows; row ``i`` has exactly
``k + 2`` contiguous nonzeros in columns ``i .. i + k + 1``.  It is stored
as the dense array ``bands`` of shape ``(m, k + 2)`` with
``bands[i, j] == D[i, i + j]``.

Symmetric positive (semi-)definite band matrices use scipy's *upper* band
layout: ``ab`` has shape ``(halfbw + 1, n)`` with
``ab[halfbw + i - j, j] == A[i, j]`` for ``max(0, j - halfbw) <= i <= j``,
i.e. the main diagonal sits in the last row of ``ab``.  This is the layout
consumed directly by :func:`scipy.linalg.cholesky_banded` and
:func:`scipy.linalg.solveh_banded`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


def check_grid(x, k=0):
    """Validate a grid of inputs and return it as a float array.

    Requires strictly increasing values and at least ``k + 2`` points so
    that the order-``k`` operator has a positive number of rows.
    """
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("grid must be one-dimensional")
    if x.size < k + 2:
        raise ValueError(
            f"grid of size {x.size} is too short for order k={k}; need at least {k + 2} points"
        )
    if np.any(np.diff(x) <= 0):
        bad = int(np.nonzero(np.diff(x) <= 0)[0][0])
        raise ValueError(
            f"grid must be strictly increasing; violation between positions {bad} and {bad + 1}"
        )
    return x


@dataclass(frozen=True)
class DifferenceOperator:
    """Banded order-(k+1) divided-difference matrix for a fixed grid.

    Immutable after construction; safe to share across worker processes
    and concurrent chains.

    Attributes
    ----------
    x : ndarray, shape (n,)
        The strictly increasing input grid.
    k : int
        Derivative order; the matrix encodes (k+1)-th divided differences.
    bands : ndarray, shape (n - k - 1, k + 2)
        Row ``i`` holds the nonzeros of matrix row ``i`` (columns
        ``i .. i + k + 1``).
    """

    x: np.ndarray
    k: int
    bands: np.ndarray

    @property
    def n(self):
        return self.x.size

    @property
    def m(self):
        return self.bands.shape[0]

    def apply(self, f):
        """Return ``D @ f`` using only the stored bands."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {f.shape}")
        m = self.m
        out = np.zeros(m)
        for j in range(self.k + 2):
            out += self.bands[:, j] * f[j : j + m]
        return out

    def weighted_gram(self, w):
        """Return ``D' diag(w) D`` as a :class:`BandedSPD` (positive semi-definite).

        Adding 1 to the diagonal afterwards yields the strictly positive
        definite matrix ``I + D' diag(w) D``.
        """
        w = np.asarray(w, dtype=float)
        if w.shape != (self.m,):
            raise ValueError(f"expected weight vector of length {self.m}, got shape {w.shape}")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        return self._gram_banded(w)

    def _gram_banded(self, w):
        # Accumulate one (band-column, band-column) product per diagonal.
        u = self.k + 1
        m = self.m
        ab = np.zeros((u + 1, self.n))
        for d in range(u + 1):
            row = u - d
            for j in range(self.k + 2 - d):
                ab[row, j + d : j + d + m] += w * self.bands[:, j] * self.bands[:, j + d]
        return BandedSPD(n=self.n, halfbw=u, ab=ab)

    def toarray(self):
        """Dense copy of the operator (for small problems and diagnostics)."""
        dense = np.zeros((self.m, self.n))
        for i in range(self.m):
            dense[i, i : i + self.k + 2] = self.bands[i]
        return dense


def difference_operator(x, k):
    """Build the divided-difference operator of order ``k`` for grid ``x``.

    The recursion starts from the first-difference matrix (rows ``[-1, +1]``)
    and repeatedly scales by ``j / (x[i + j] - x[i])`` before differencing
    again.  On a unit-spaced grid this reduces to the usual repeated
    difference matrix, so e.g. ``k = 1`` gives rows ``(1, -2, 1)``.
    """
    if k < 0:
        raise ValueError("order k must be nonnegative")
    x = check_grid(x, k)
    n = x.size
    # D^(x,1): (n-1) rows of (-1, +1)
    bands = np.tile(np.array([-1.0, 1.0]), (n - 1, 1))
    for j in range(1, k + 1):
        scale = j / (x[j:] - x[:-j])  # length n - j, one factor per row
        s = bands * scale[:, None]
        rows, width = s.shape
        nxt = np.zeros((rows - 1, width + 1))
        nxt[:, 0] = -s[:-1, 0]
        nxt[:, 1:width] = s[1:, : width - 1] - s[:-1, 1:]
        nxt[:, width] = s[1:, width - 1]
        bands = nxt
    return DifferenceOperator(x=x, k=k, bands=bands)


@dataclass(frozen=True)
class BandedSPD:
    """Symmetric banded matrix in scipy upper band storage.

    ``ab[halfbw + i - j, j] == A[i, j]``; the main diagonal is ``ab[halfbw]``.
    Construction does not verify definiteness; :meth:`cholesky` raises
    ``scipy.linalg.LinAlgError`` when a pivot fails.
    """

    n: int
    halfbw: int
    ab: np.ndarray

    def add_identity(self, c=1.0):
        """Return a copy with ``c`` added to the main diagonal."""
        ab = self.ab.copy()
        ab[self.halfbw] += c
        return BandedSPD(n=self.n, halfbw=self.halfbw, ab=ab)

    def cholesky(self):
        """Upper Cholesky factor ``U`` (``A = U' U``) in upper band storage."""
        return cholesky_banded(self.ab, lower=False)

    def solve(self, b):
        """Solve ``A z = b`` through the banded Cholesky factorization."""
        return cho_solve_banded((self.cholesky(), False), b)

    def toarray(self):
        """Dense symmetric copy (for small problems and tests)."""
        a = np.zeros((self.n, self.n))
        u = self.halfbw
        for d in range(u + 1):
            diag = self.ab[u - d, d:]
            idx = np.arange(self.n - d)
            a[idx, idx + d] = diag
            a[idx + d, idx] = diag
        return a
