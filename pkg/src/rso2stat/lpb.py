"""Linear process bootstrap with a banded, trapezoid-tapered autocovariance.

The sample autocovariances up to lag ``band_len`` are tapered (weight 1 up
to ``band_len / 2``, then linearly down to 0 at ``band_len``) and placed in
a Toeplitz matrix. After an eigenvalue floor repairs positive definiteness,
its Cholesky factor whitens the source series. Resamples draw the
standardized innovations iid with replacement and recolor them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .imputation import as_stream

EIGEN_FLOOR = 1e-6
MIN_LENGTH = 100


def sample_autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased (divide-by-n) autocovariances of a centered series, lags 0..max_lag."""
    n = x.size
    return np.array([x[: n - k] @ x[k:] / n for k in range(max_lag + 1)])


def trapezoid_taper(max_lag: int, band_len: int) -> np.ndarray:
    k = np.arange(max_lag + 1, dtype=float)
    w = np.clip(2.0 * (1.0 - k / band_len), 0.0, 1.0)
    w[k > band_len] = 0.0
    return w


def default_band_length(n: int) -> int:
    return min(max(10, 2 * math.ceil(n ** (1.0 / 3.0))), (n - 1) // 2)


@dataclass(frozen=True)
class LpbModel:
    source: np.ndarray
    mean: float
    band_len: int
    acvf: np.ndarray  # tapered autocovariances, lags 0..band_len
    raw_acvf: np.ndarray
    min_eigenvalue: float
    floored: bool
    factor: np.ndarray = field(repr=False)
    innovations: np.ndarray = field(repr=False)
    standardized: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.source.size

    def covariance(self, n: int) -> np.ndarray:
        return _toeplitz(self.acvf, n)

    def factor_for(self, n: int) -> np.ndarray:
        """Lower Cholesky factor of the n x n banded covariance."""
        if n <= self.n:
            # The leading block of a lower Cholesky factor factors the leading block.
            return self.factor[:n, :n]
        return _factor(_toeplitz(self.acvf, n), self.acvf[0])[0]

    def recolor(self, innovations: np.ndarray) -> np.ndarray:
        return self.factor_for(innovations.shape[0]) @ innovations


def _toeplitz(acvf: np.ndarray, n: int) -> np.ndarray:
    col = np.zeros(n)
    m = min(n, acvf.size)
    col[:m] = acvf[:m]
    return linalg.toeplitz(col)


def _factor(cov: np.ndarray, gamma0: float) -> tuple[np.ndarray, float, bool]:
    eigvals, eigvecs = linalg.eigh(cov)
    floor = EIGEN_FLOOR * gamma0
    floored = bool(eigvals.min() < floor)
    if floored:
        eigvals = np.maximum(eigvals, floor)
        cov = (eigvecs * eigvals) @ eigvecs.T
        cov = 0.5 * (cov + cov.T)
    return linalg.cholesky(cov, lower=True), float(eigvals.min()), floored


def fit_lpb(residuals, band_len: int | None = None, taper: str = "trapezoid") -> LpbModel:
    """Fit the linear-process bootstrap model to a residual series."""
    x = np.asarray(residuals, dtype=float)
    n = x.size
    if n < MIN_LENGTH:
        raise ValueError(f"need at least {MIN_LENGTH} residuals, got {n}")
    if band_len is None:
        band_len = default_band_length(n)
    if band_len < 1:
        raise ValueError("band_len must be >= 1")
    if band_len >= n / 2:
        raise ValueError("band_len must be smaller than half the series length")
    if taper != "trapezoid":
        raise ValueError(f"unsupported taper {taper!r}")
    mean = float(x.mean())
    xc = x - mean
    raw = sample_autocovariance(xc, band_len)
    if raw[0] <= 0:
        raise ValueError("residual series has zero variance")
    acvf = raw * trapezoid_taper(band_len, band_len)
    factor, min_eig, floored = _factor(_toeplitz(acvf, n), acvf[0])
    innovations = linalg.solve_triangular(factor, xc, lower=True)
    standardized = (innovations - innovations.mean()) / innovations.std()
    return LpbModel(
        source=xc,
        mean=mean,
        band_len=band_len,
        acvf=acvf,
        raw_acvf=raw,
        min_eigenvalue=min_eig,
        floored=floored,
        factor=factor,
        innovations=innovations,
        standardized=standardized,
    )


def lpb_resample(model: LpbModel, n_out: int, rng) -> np.ndarray:
    """One zero-mean residual series of length ``n_out``."""
    gen = as_stream(rng).generator()
    draws = gen.choice(model.standardized, size=n_out, replace=True)
    return model.recolor(draws)


def lpb_resample_many(model: LpbModel, n_out: int, n_series: int, rng) -> np.ndarray:
    """``(n_out, n_series)`` resamples; column ``j`` uses stream ``rng / ("lpb", j)``."""
    stream = as_stream(rng)
    draws = np.column_stack(
        [stream.child("lpb", j).generator().choice(model.standardized, size=n_out, replace=True) for j in range(n_series)]
    )
    return model.recolor(draws)
