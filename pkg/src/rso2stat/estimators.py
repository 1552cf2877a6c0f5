"""MAUC and slope estimators under multiple imputation, and their baselines.

Each imputed copy of a segment is smoothed with a GCV-tuned penalized
spline. MAUC is the time average of the smooth over an interval; the slope
is the OLS slope of the smooth, evaluated at the observation times, on time.
Standard errors combine a block-bootstrap within-imputation variance with
the between-imputation variance::

    var = mean(W_m) + (1 + 1/M) * B

The GCV smooth of a serially correlated series follows much of the noise,
so its residuals miss the low-frequency variation that drives the variance
of a time average. By default the bootstrap residuals are therefore taken
about a *coarse* smooth: a GCV spline through the means of consecutive
groups of ``2 * block_len`` points, where the serial correlation has mostly
averaged out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import check_boot, default_block_length, moving_block_indices
from .imputation import DEFAULT_M_ESTIMATION, as_stream, imputation_matrix
from .ingest import Rso2Series
from .spline import DEFAULT_SMOOTHER, PenalizedSpline, SmootherConfig, SplineError, design_matrix, smoother_for

DEFAULT_N_BOOT = 500
MAUC_BOOT_SCHEMES = ("coarse", "residual", "observation")
SLOPE_RESIDUAL_SOURCES = ("coarse", "smooth", "linear")
COARSE_SPAN = 2  # block lengths per averaged group
_MIN_GROUPS = 8


@dataclass(frozen=True)
class MaucEstimate:
    value: float
    per_imputation: np.ndarray
    se: float | None
    interval: tuple[float, float]
    n_imputations: int
    n_boot: int
    block_len: int | None
    within: np.ndarray | None = None
    between: float = 0.0


@dataclass(frozen=True)
class SlopeEstimate:
    value: float
    per_imputation: np.ndarray
    se: float | None
    intercepts: np.ndarray
    n_imputations: int
    n_boot: int
    block_len: int | None
    within: np.ndarray | None = None
    between: float = 0.0


def rubin_variance(per_imputation, within) -> float:
    """Total MI variance ``mean(W) + (1 + 1/M) * B``."""
    per_imputation = np.asarray(per_imputation, dtype=float)
    m = per_imputation.size
    if m < 2:
        raise ValueError("Rubin's rules need at least two imputations")
    between = float(np.var(per_imputation, ddof=1))
    return float(np.mean(within)) + (1.0 + 1.0 / m) * between


def between_variance(per_imputation) -> float:
    per_imputation = np.asarray(per_imputation, dtype=float)
    if np.ptp(per_imputation) == 0.0:
        return 0.0
    return float(np.var(per_imputation, ddof=1))


def _resolve_interval(series: Rso2Series, interval) -> tuple[float, float]:
    lo, hi = series.span
    if interval is None:
        return lo, hi
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("MAUC interval must satisfy a < b")
    if a < lo or b > hi:
        raise ValueError(f"MAUC interval ({a}, {b}) lies outside the data range [{lo}, {hi}]")
    return a, b


def _imputed(series: Rso2Series, n_imputations: int, rng) -> np.ndarray:
    return imputation_matrix(
        series.values, series.censored, series.detection_limit, as_stream(rng), n_imputations
    )


def ols_slopes(times: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise OLS ``values ~ a + b * times``; returns ``(b, a)``."""
    tc = times - times.mean()
    sxx = tc @ tc
    if sxx <= 0:
        raise ValueError("slope needs at least two distinct time points")
    slope = tc @ values / sxx
    intercept = values.mean(axis=0) - slope * times.mean()
    return slope, intercept


def coarse_fit(times: np.ndarray, values: np.ndarray, block_len: int, config: SmootherConfig = DEFAULT_SMOOTHER):
    """Block-scale smooth of each column of ``values``, or ``None`` if the series is too short.

    Points are split into consecutive groups of about ``COARSE_SPAN * block_len``;
    a GCV spline through the group means is evaluated at ``times`` and held
    constant beyond the first and last group centres.
    """
    n_groups = times.size // (COARSE_SPAN * block_len)
    if n_groups < _MIN_GROUPS:
        return None
    starts = np.array([g[0] for g in np.array_split(np.arange(times.size), n_groups)])
    counts = np.diff(np.append(starts, times.size))
    tg = np.add.reduceat(times, starts) / counts
    yg = np.add.reduceat(values, starts, axis=0) / counts[:, None]
    sm = smoother_for(tg, config)
    basis = design_matrix(sm.knots, sm.degree, np.clip(times, tg[0], tg[-1]))
    return basis @ sm.fit_many(yg).coefficients


def _slope_contrast(times: np.ndarray) -> np.ndarray:
    tc = times - times.mean()
    return tc / (tc @ tc)


# -- MAUC -------------------------------------------------------------------


def _all_columns_equal(imputed: np.ndarray) -> bool:
    return imputed.shape[1] > 1 and bool(np.all(imputed == imputed[:, :1]))


def mauc_per_imputation(smoother: PenalizedSpline, imputed: np.ndarray, interval) -> np.ndarray:
    a, b = interval
    weights = smoother.integral_weights(a, b) / (b - a)
    if _all_columns_equal(imputed):
        # Nothing was imputed: fit once so the between variance is exactly zero.
        return np.repeat(weights @ smoother.fit_many(imputed[:, :1]).coefficients, imputed.shape[1])
    return weights @ smoother.fit_many(imputed).coefficients


def mauc(
    series: Rso2Series,
    interval=None,
    n_imputations: int = DEFAULT_M_ESTIMATION,
    rng=0,
    config: SmootherConfig = DEFAULT_SMOOTHER,
    n_boot: int = DEFAULT_N_BOOT,
    block_len: int | None = None,
    scheme: str = "coarse",
) -> MaucEstimate:
    """Multiply-imputed MAUC over ``interval`` (default: the data span).

    ``n_boot=0`` skips the standard error (``se`` is then ``None``).
    ``scheme`` picks the within-imputation bootstrap: ``"coarse"`` or
    ``"residual"`` resample blocks of residuals about the coarse or the GCV
    smooth and add them back; ``"observation"`` resamples blocks of the
    imputed values themselves.
    """
    if n_imputations < 1:
        raise ValueError("n_imputations must be >= 1")
    interval = _resolve_interval(series, interval)
    stream = as_stream(rng)
    smoother = smoother_for(series.times, config)
    imputed = _imputed(series, n_imputations, stream)
    per_imp = mauc_per_imputation(smoother, imputed, interval)
    between = between_variance(per_imp) if n_imputations > 1 else 0.0
    se = within = None
    if n_boot:
        if block_len is None:
            block_len = default_block_length(len(series))
        within = _mauc_within(smoother, imputed, interval, stream, n_boot, block_len, scheme)
        se = float(np.sqrt(np.mean(within) + (1.0 + 1.0 / n_imputations) * between))
    return MaucEstimate(
        value=float(per_imp.mean()),
        per_imputation=per_imp,
        se=se,
        interval=interval,
        n_imputations=n_imputations,
        n_boot=n_boot,
        block_len=block_len,
        within=within,
        between=between,
    )


def _mauc_within(smoother, imputed, interval, stream, n_boot, block_len, scheme) -> np.ndarray:
    check_boot(n_boot)
    if scheme not in MAUC_BOOT_SCHEMES:
        raise ValueError(f"scheme must be one of {MAUC_BOOT_SCHEMES}")
    n, n_imp = imputed.shape
    a, b = interval
    weights = smoother.integral_weights(a, b) / (b - a)
    within = np.empty(n_imp)
    for j in range(n_imp):
        y = imputed[:, j]
        gen = stream.child("boot_mauc", j + 1).generator()
        idx = moving_block_indices(n, block_len, n_boot, gen)
        if scheme == "observation":
            boot = y[idx].T
        else:
            fitted = _residual_base(smoother, y, block_len, scheme)
            resid = y - fitted
            resid = resid - resid.mean()
            boot = fitted[:, None] + resid[idx].T
        stats = weights @ smoother.fit_many(boot).coefficients
        within[j] = np.var(stats, ddof=1)
    return within


def _residual_base(smoother: PenalizedSpline, y: np.ndarray, block_len: int, kind: str) -> np.ndarray:
    if kind == "coarse":
        base = coarse_fit(smoother.times, y[:, None], block_len, smoother.config)
        if base is not None:
            return base[:, 0]
    return smoother.fit_many(y).fitted[:, 0]


def mauc_se(
    series: Rso2Series,
    per_imputation,
    interval=None,
    rng=0,
    n_boot: int = DEFAULT_N_BOOT,
    block_len: int | None = None,
    config: SmootherConfig = DEFAULT_SMOOTHER,
    scheme: str = "coarse",
) -> float:
    """Rubin-combined standard error for a MAUC computed with the same ``rng``.

    Imputations are regenerated from the stream, so ``per_imputation`` must
    come from :func:`mauc` called with identical ``rng`` and ``config``.
    """
    per_imputation = np.asarray(per_imputation, dtype=float)
    if per_imputation.size < 2:
        raise ValueError("mauc_se needs at least two imputations")
    check_boot(n_boot)
    interval = _resolve_interval(series, interval)
    stream = as_stream(rng)
    smoother = smoother_for(series.times, config)
    imputed = _imputed(series, per_imputation.size, stream)
    if block_len is None:
        block_len = default_block_length(len(series))
    within = _mauc_within(smoother, imputed, interval, stream, n_boot, block_len, scheme)
    return float(np.sqrt(np.mean(within) + (1.0 + 1.0 / per_imputation.size) * between_variance(per_imputation)))


# -- slope ------------------------------------------------------------------


def slope_per_imputation(smoother: PenalizedSpline, imputed: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slopes, intercepts and smooth fits (at the observation times) per column."""
    if _all_columns_equal(imputed):
        m = imputed.shape[1]
        fitted = smoother.fit_many(imputed[:, :1]).fitted
        slope, intercept = ols_slopes(smoother.times, fitted)
        return np.repeat(slope, m), np.repeat(intercept, m), np.repeat(fitted, m, axis=1)
    fitted = smoother.fit_many(imputed).fitted
    slope, intercept = ols_slopes(smoother.times, fitted)
    return slope, intercept, fitted


def slope(
    series: Rso2Series,
    n_imputations: int = DEFAULT_M_ESTIMATION,
    rng=0,
    config: SmootherConfig = DEFAULT_SMOOTHER,
    n_boot: int = DEFAULT_N_BOOT,
    block_len: int | None = None,
    residual_source: str = "coarse",
) -> SlopeEstimate:
    """Multiply-imputed slope of the smoothed series (units per second).

    Bootstrap replicates add resampled residual blocks to the m-th fitted
    line and rerun the spline and OLS steps. ``residual_source`` says what
    the residuals are taken about: the coarse smooth, the GCV smooth or the
    fitted line.
    """
    if n_imputations < 1:
        raise ValueError("n_imputations must be >= 1")
    if np.unique(series.times).size < 3:
        raise SplineError("slope needs at least 3 distinct time points")
    stream = as_stream(rng)
    smoother = smoother_for(series.times, config)
    imputed = _imputed(series, n_imputations, stream)
    slopes, intercepts, fitted = slope_per_imputation(smoother, imputed)
    between = between_variance(slopes) if n_imputations > 1 else 0.0
    se = within = None
    if n_boot:
        if block_len is None:
            block_len = default_block_length(len(series))
        within = _slope_within(smoother, imputed, fitted, slopes, intercepts, stream, n_boot, block_len, residual_source)
        se = float(np.sqrt(np.mean(within) + (1.0 + 1.0 / n_imputations) * between))
    return SlopeEstimate(
        value=float(slopes.mean()),
        per_imputation=slopes,
        se=se,
        intercepts=intercepts,
        n_imputations=n_imputations,
        n_boot=n_boot,
        block_len=block_len,
        within=within,
        between=between,
    )


def _slope_within(smoother, imputed, fitted, slopes, intercepts, stream, n_boot, block_len, residual_source):
    check_boot(n_boot)
    if residual_source not in SLOPE_RESIDUAL_SOURCES:
        raise ValueError(f"residual_source must be one of {SLOPE_RESIDUAL_SOURCES}")
    times = smoother.times
    n, n_imp = imputed.shape
    within = np.empty(n_imp)
    for j in range(n_imp):
        line = intercepts[j] + slopes[j] * times
        if residual_source == "linear":
            base = line
        elif residual_source == "smooth":
            base = fitted[:, j]
        else:
            base = _residual_base(smoother, imputed[:, j], block_len, "coarse")
        resid = imputed[:, j] - base
        resid = resid - resid.mean()
        gen = stream.child("boot_slope", j + 1).generator()
        idx = moving_block_indices(n, block_len, n_boot, gen)
        boot = line[:, None] + resid[idx].T
        boot_slopes, _, _ = slope_per_imputation(smoother, boot)
        within[j] = np.var(boot_slopes, ddof=1)
    return within


def slope_se(
    series: Rso2Series,
    per_imputation,
    rng=0,
    n_boot: int = DEFAULT_N_BOOT,
    block_len: int | None = None,
    config: SmootherConfig = DEFAULT_SMOOTHER,
    residual_source: str = "coarse",
) -> float:
    """Rubin-combined standard error for a slope computed with the same ``rng``."""
    per_imputation = np.asarray(per_imputation, dtype=float)
    if per_imputation.size < 2:
        raise ValueError("slope_se needs at least two imputations")
    check_boot(n_boot)
    stream = as_stream(rng)
    smoother = smoother_for(series.times, config)
    imputed = _imputed(series, per_imputation.size, stream)
    slopes, intercepts, fitted = slope_per_imputation(smoother, imputed)
    if block_len is None:
        block_len = default_block_length(len(series))
    within = _slope_within(smoother, imputed, fitted, slopes, intercepts, stream, n_boot, block_len, residual_source)
    return float(np.sqrt(np.mean(within) + (1.0 + 1.0 / per_imputation.size) * between_variance(per_imputation)))


# -- baselines --------------------------------------------------------------


def sample_mean_baseline(
    series: Rso2Series, n_boot: int = DEFAULT_N_BOOT, block_len: int | None = None, rng=0
) -> tuple[float, float]:
    """Mean of the observed (clamped) values and its moving-block bootstrap SE."""
    y = series.values
    if y.size == 0:
        raise ValueError("empty series")
    mean = float(y.mean())
    if not n_boot:
        return mean, float("nan")
    check_boot(n_boot)
    if np.ptp(y) == 0.0:
        return mean, 0.0
    if block_len is None:
        block_len = default_block_length(y.size)
    gen = as_stream(rng).child("boot_mean").generator()
    idx = moving_block_indices(y.size, block_len, n_boot, gen)
    boot = y[idx].mean(axis=1)
    return mean, float(np.std(boot, ddof=1))


def naive_slope_baseline(
    series: Rso2Series, n_boot: int = DEFAULT_N_BOOT, block_len: int | None = None, rng=0
) -> tuple[float, float]:
    """OLS slope of the observed values on time; SE by block bootstrap of OLS residuals."""
    t, y = series.times, series.values
    b, a = ols_slopes(t, y[:, None])
    b, a = float(b[0]), float(a[0])
    if not n_boot:
        return b, float("nan")
    check_boot(n_boot)
    if block_len is None:
        block_len = default_block_length(y.size)
    line = a + b * t
    resid = y - line
    resid = resid - resid.mean()
    gen = as_stream(rng).child("boot_naive_slope").generator()
    idx = moving_block_indices(y.size, block_len, n_boot, gen)
    contrast = _slope_contrast(t)
    boot = b + resid[idx] @ contrast
    return b, float(np.std(boot, ddof=1)) if np.ptp(resid) > 0 else 0.0


def pooled_curve(
    series: Rso2Series, n_imputations: int = DEFAULT_M_ESTIMATION, rng=0, config: SmootherConfig = DEFAULT_SMOOTHER
) -> np.ndarray:
    """Average of the per-imputation smooths at the observation times.

    With the same ``rng`` as :func:`mauc` this is the curve whose time
    average is the reported MAUC.
    """
    imputed = _imputed(series, n_imputations, as_stream(rng))
    return smoother_for(series.times, config).fit_many(imputed).fitted.mean(axis=1)
