"""Penalized cubic regression splines with a GCV-chosen smoothing parameter.

The basis is a clamped cubic B-spline with interior knots at empirical
quantiles of the sampling times. The penalty is the squared second divided
difference of the coefficients taken over their Greville abscissae, which
annihilates exactly the coefficient vectors of affine functions even on a
non-uniform knot sequence.

All fits on a given time grid share one Demmler-Reinsch decomposition::

    B^T B = L L^T,    L^{-1} P L^{-T} = U diag(s) U^T,    T = L^{-T} U

so that for any smoothing parameter ``lam``

    coef(lam) = T diag(1 / (1 + lam * s)) T^T B^T y,
    tr H(lam) = sum(1 / (1 + lam * s)).

Once the grid is decomposed, a GCV search costs O(n_basis) per candidate,
and many right-hand sides (imputations, permutations, bootstrap
replicates) can be fitted as a single matrix product.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERS = 40
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)


class SplineError(ValueError):
    """Raised when a spline cannot be fitted to the supplied data."""


class ExtrapolationError(SplineError):
    """Raised when a fit is evaluated or integrated outside its data range."""


@dataclass(frozen=True)
class SmootherConfig:
    """Knot and smoothing-parameter search settings.

    ``lambda_log10_range`` bounds the coarse grid of ``grid_points`` values of
    log10(lambda); golden-section search then refines around its minimizer.
    """

    max_interior_knots: int = 40
    degree: int = 3
    lambda_log10_range: tuple[float, float] = (-6.0, 8.0)
    grid_points: int = 25

    def __post_init__(self):
        lo, hi = self.lambda_log10_range
        object.__setattr__(self, "lambda_log10_range", (float(lo), float(hi)))
        if self.max_interior_knots < 1:
            raise ValueError("max_interior_knots must be >= 1")
        if self.degree != 3:
            raise ValueError("only cubic splines (degree 3) are supported")
        if not lo < hi:
            raise ValueError("lambda_log10_range must be an increasing pair")
        if self.grid_points < 3:
            raise ValueError("grid_points must be >= 3")

    @classmethod
    def from_mapping(cls, data) -> "SmootherConfig":
        known = {"max_interior_knots", "degree", "lambda_log10_range", "grid_points"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown smoother key(s): {sorted(unknown)}")
        kwargs = dict(data)
        if "lambda_log10_range" in kwargs:
            kwargs["lambda_log10_range"] = tuple(kwargs["lambda_log10_range"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "max_interior_knots": self.max_interior_knots,
            "degree": self.degree,
            "lambda_log10_range": list(self.lambda_log10_range),
            "grid_points": self.grid_points,
        }


DEFAULT_SMOOTHER = SmootherConfig()


def quantile_knots(times: np.ndarray, max_interior: int, degree: int = 3) -> np.ndarray:
    """Clamped knot vector with ``min(max_interior, n // 4)`` quantile knots."""
    n = times.size
    n_interior = min(max_interior, n // 4)
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.unique(np.quantile(times, probs))
    interior = interior[(interior > times[0]) & (interior < times[-1])]
    return np.concatenate(
        [np.repeat(times[0], degree + 1), interior, np.repeat(times[-1], degree + 1)]
    )


def greville_abscissae(knots: np.ndarray, degree: int) -> np.ndarray:
    n_basis = knots.size - degree - 1
    return np.array([knots[j + 1 : j + degree + 1].mean() for j in range(n_basis)])


def divided_difference_matrix(abscissae: np.ndarray) -> np.ndarray:
    """Second divided differences over ``abscissae``, scaled so that equally
    spaced abscissae give the ordinary ``[1, -2, 1]`` stencil."""
    h = np.diff(abscissae)
    h = h / h.mean()
    n = abscissae.size
    d = np.zeros((n - 2, n))
    for j in range(n - 2):
        scale = 2.0 / (h[j] + h[j + 1])
        d[j, j] = scale / h[j]
        d[j, j + 1] = -scale * (1.0 / h[j] + 1.0 / h[j + 1])
        d[j, j + 2] = scale / h[j + 1]
    return d


def design_matrix(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    return BSpline.design_matrix(np.asarray(x, dtype=float), knots, degree).toarray()


@dataclass(frozen=True)
class SplineFit:
    """A fitted penalized cubic spline on ``domain``."""

    knots: np.ndarray
    degree: int
    coefficients: np.ndarray
    lam: float
    edf: float
    gcv: float
    domain: tuple[float, float]
    fitted: np.ndarray = field(repr=False)

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.degree + 1 : -(self.degree + 1)]

    @property
    def n_basis(self) -> int:
        return self.coefficients.size

    def __call__(self, t):
        return evaluate(self, t)

    def integrate(self, a: float, b: float) -> float:
        return integrate(self, a, b)


class PenalizedSpline:
    """Basis, penalty and Demmler-Reinsch factors for one sampling grid.

    Instances depend only on the time grid and the config, so they are shared
    across every fit on that grid (see :func:`smoother_for`).
    """

    def __init__(self, times, config: SmootherConfig = DEFAULT_SMOOTHER):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1:
            raise SplineError("times must be one-dimensional")
        if times.size < 8:
            raise SplineError(f"need at least 8 points to fit a spline, got {times.size}")
        if np.any(np.diff(times) <= 0):
            raise SplineError("times must be strictly increasing")
        self.times = times
        self.config = config
        self.n = times.size
        self.degree = config.degree
        self.knots = quantile_knots(times, config.max_interior_knots, self.degree)
        self.basis = design_matrix(self.knots, self.degree, times)
        self.n_basis = self.basis.shape[1]
        self.penalty_operator = divided_difference_matrix(
            greville_abscissae(self.knots, self.degree)
        )
        penalty = self.penalty_operator.T @ self.penalty_operator

        gram = self.basis.T @ self.basis
        try:
            chol = linalg.cholesky(gram, lower=True)
        except linalg.LinAlgError:
            raise SplineError("rank-deficient spline basis for these sampling times") from None
        if np.min(np.abs(np.diag(chol))) < 1e-10 * np.max(np.abs(np.diag(chol))):
            raise SplineError("rank-deficient spline basis for these sampling times")
        chol_inv = linalg.solve_triangular(chol, np.eye(self.n_basis), lower=True)
        reduced = chol_inv @ penalty @ chol_inv.T
        eigvals, eigvecs = linalg.eigh(0.5 * (reduced + reduced.T))
        eigvals = np.clip(eigvals, 0.0, None)
        # The penalty null space is exactly the affine functions (dimension 2).
        eigvals[:2] = 0.0
        self.eigenvalues = eigvals
        self.transform = chol_inv.T @ eigvecs
        # Columns of basis @ transform are orthonormal.
        self.ortho_basis = self.basis @ self.transform

    # -- linear functionals -------------------------------------------------

    def integral_weights(self, a: float, b: float) -> np.ndarray:
        """Vector ``w`` with ``w @ coef == integral of the spline over [a, b]``."""
        t0, t1 = self.times[0], self.times[-1]
        if not a < b:
            raise SplineError("integration bounds must satisfy a < b")
        if a < t0 or b > t1:
            raise ExtrapolationError(f"[{a}, {b}] is outside the data range [{t0}, {t1}]")
        breaks = np.unique(np.concatenate([[a, b], self.knots[(self.knots > a) & (self.knots < b)]]))
        lo, hi = breaks[:-1], breaks[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = (mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]).ravel()
        weights = (half[:, None] * _GAUSS_WEIGHTS[None, :]).ravel()
        return weights @ design_matrix(self.knots, self.degree, nodes)

    # -- fitting ------------------------------------------------------------

    def project(self, values: np.ndarray) -> np.ndarray:
        """Coordinates of the data in the orthonormal Demmler-Reinsch basis."""
        return self.ortho_basis.T @ values

    def gcv_scores(self, log10_lam, z: np.ndarray, base_rss: np.ndarray) -> np.ndarray:
        """GCV scores ``n * RSS / (n - tr H)**2`` for each column of ``z``.

        ``log10_lam`` has shape ``(..., n_cols)``; the result has the same shape.
        """
        lam = 10.0 ** np.asarray(log10_lam, dtype=float)
        ls = lam[..., None, :] * self.eigenvalues[:, None]
        shrink = ls / (1.0 + ls)
        rss = base_rss + np.sum((z * shrink) ** 2, axis=-2)
        rss = np.where(rss <= 1e-24 * np.sum(z**2, axis=-2), 0.0, rss)
        edf = np.sum(1.0 / (1.0 + ls), axis=-2)
        return self.n * np.maximum(rss, 0.0) / (self.n - edf) ** 2

    def select_lambda(self, z: np.ndarray, base_rss: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coarse grid then golden-section search of log10(lambda), per column.

        Grid ties go to the larger lambda; the refined point replaces the grid
        point only when it scores strictly better.
        """
        n_cols = z.shape[1]
        lo, hi = self.config.lambda_log10_range
        grid = np.linspace(lo, hi, self.config.grid_points)
        scores = self.gcv_scores(np.repeat(grid[:, None], n_cols, axis=1), z, base_rss)
        best = scores.min(axis=0)
        tol = 1e-10 * np.maximum(best, np.finfo(float).tiny)
        tied = scores <= best + tol
        idx = grid.size - 1 - np.argmax(tied[::-1], axis=0)
        grid_log = grid[idx]
        grid_score = scores[idx, np.arange(n_cols)]

        a = grid[np.maximum(idx - 1, 0)]
        b = grid[np.minimum(idx + 1, grid.size - 1)]
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc = self.gcv_scores(c, z, base_rss)
        fd = self.gcv_scores(d, z, base_rss)
        for _ in range(_GOLDEN_ITERS):
            left = fc < fd
            a, b = np.where(left, a, c), np.where(left, d, b)
            new_c = np.where(left, b - _GOLDEN * (b - a), d)
            new_d = np.where(left, c, a + _GOLDEN * (b - a))
            f_new = self.gcv_scores(np.where(left, new_c, new_d), z, base_rss)
            fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
            c, d = new_c, new_d
        refined = 0.5 * (a + b)
        refined_score = self.gcv_scores(refined, z, base_rss)
        better = refined_score < grid_score - tol
        return np.where(better, refined, grid_log), np.where(better, refined_score, grid_score)

    def fit_many(self, values: np.ndarray, log10_lam=None) -> "BatchFit":
        """Fit every column of ``values`` (shape ``(n, n_cols)``).

        With ``log10_lam`` given the smoothing parameter is held fixed;
        otherwise GCV chooses it per column.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.n:
            raise SplineError(f"expected {self.n} rows, got {values.shape[0]}")
        z = self.project(values)
        base_rss = np.sum((values - self.ortho_basis @ z) ** 2, axis=0)
        # Round-off level residuals count as an exact fit so grid ties resolve upward.
        base_rss[base_rss <= 1e-24 * np.sum(values**2, axis=0)] = 0.0
        if log10_lam is None:
            log_lam, score = self.select_lambda(z, base_rss)
        else:
            log_lam = np.broadcast_to(np.asarray(log10_lam, dtype=float), (values.shape[1],)).copy()
            score = self.gcv_scores(log_lam, z, base_rss)
        lam = 10.0**log_lam
        damp = 1.0 / (1.0 + lam[None, :] * self.eigenvalues[:, None])
        coef = self.transform @ (damp * z)
        return BatchFit(self, coef, lam, damp.sum(axis=0), score)

    def fit(self, values, log10_lam=None) -> SplineFit:
        return self.fit_many(np.asarray(values, dtype=float)[:, None], log10_lam).spline(0)

    def hat_matrix(self, lam: float) -> np.ndarray:
        """Dense smoother matrix; meant for diagnostics and tests."""
        damp = 1.0 / (1.0 + lam * self.eigenvalues)
        return (self.ortho_basis * damp) @ self.ortho_basis.T


@dataclass(frozen=True)
class BatchFit:
    """Coefficients for many fits sharing one :class:`PenalizedSpline`."""

    smoother: PenalizedSpline
    coefficients: np.ndarray  # (n_basis, n_cols)
    lam: np.ndarray
    edf: np.ndarray
    gcv: np.ndarray

    @property
    def fitted(self) -> np.ndarray:
        return self.smoother.basis @ self.coefficients

    def spline(self, j: int) -> SplineFit:
        sm = self.smoother
        fitted = sm.basis @ self.coefficients[:, j]
        return SplineFit(
            knots=sm.knots,
            degree=sm.degree,
            coefficients=self.coefficients[:, j].copy(),
            lam=float(self.lam[j]),
            edf=float(self.edf[j]),
            gcv=float(self.gcv[j]),
            domain=(float(sm.times[0]), float(sm.times[-1])),
            fitted=fitted,
        )


@functools.lru_cache(maxsize=64)
def _cached_smoother(times_bytes: bytes, config: SmootherConfig) -> PenalizedSpline:
    return PenalizedSpline(np.frombuffer(times_bytes, dtype=float), config)


def smoother_for(times, config: SmootherConfig = DEFAULT_SMOOTHER) -> PenalizedSpline:
    """Shared :class:`PenalizedSpline` for a time grid (memoized by value)."""
    times = np.ascontiguousarray(times, dtype=float)
    return _cached_smoother(times.tobytes(), config)


def fit_spline(times, values, config: SmootherConfig = DEFAULT_SMOOTHER) -> SplineFit:
    """Penalized spline fit at the GCV-optimal smoothing parameter."""
    values = np.asarray(values, dtype=float)
    if np.shape(times) != values.shape:
        raise SplineError("times and values must have the same length")
    return smoother_for(times, config).fit(values)


def gcv_score(lam: float, times, values, config: SmootherConfig = DEFAULT_SMOOTHER) -> float:
    """GCV criterion ``n * RSS(lam) / (n - tr H_lam)**2``."""
    if lam < 0:
        raise SplineError("lambda must be non-negative")
    sm = smoother_for(times, config)
    values = np.asarray(values, dtype=float)[:, None]
    z = sm.project(values)
    base_rss = np.sum((values - sm.ortho_basis @ z) ** 2, axis=0)
    damp = 1.0 / (1.0 + lam * sm.eigenvalues)
    edf = damp.sum()
    if edf >= sm.n:
        raise SplineError("degenerate GCV: trace of the hat matrix reaches n")
    rss = base_rss[0] + np.sum((z[:, 0] * (1.0 - damp)) ** 2)
    return float(sm.n * max(rss, 0.0) / (sm.n - edf) ** 2)


def _check_domain(fit: SplineFit, t: np.ndarray) -> None:
    lo, hi = fit.domain
    if np.any(t < lo) or np.any(t > hi) or np.any(~np.isfinite(t)):
        raise ExtrapolationError(f"evaluation point outside the data range [{lo}, {hi}]")


def evaluate(fit: SplineFit, t):
    """Value of the fitted smooth at ``t`` (scalar or array); no extrapolation."""
    arr = np.asarray(t, dtype=float)
    _check_domain(fit, arr)
    out = BSpline(fit.knots, fit.coefficients, fit.degree, extrapolate=False)(arr)
    return float(out) if out.ndim == 0 else out


def integrate(fit: SplineFit, a: float, b: float) -> float:
    """Exact integral of the piecewise cubic over ``[a, b]`` (3-point Gauss-Legendre per knot span)."""
    if not a < b:
        raise SplineError("integration bounds must satisfy a < b")
    lo, hi = fit.domain
    if a < lo or b > hi:
        raise ExtrapolationError(f"[{a}, {b}] is outside the data range [{lo}, {hi}]")
    breaks = np.unique(np.concatenate([[a, b], fit.knots[(fit.knots > a) & (fit.knots < b)]]))
    left, right = breaks[:-1], breaks[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]
    vals = BSpline(fit.knots, fit.coefficients, fit.degree, extrapolate=False)(nodes)
    return float(np.sum(half[:, None] * _GAUSS_WEIGHTS[None, :] * vals))
