"""MI-nested permutation tests for pre/post changes, and baseline tests.

The MAUC test pools the pre and post values, permutes them over the fixed
pooled time grid and splits the result back at the pre length. The slope
test permutes values within each segment separately, which keeps any
difference in level between the segments out of the null distribution.
Censoring flags travel with their values, and every permuted sample is
imputed ``M`` times before the statistic is averaged.

The p-value counts strict exceedances, ``mean(|delta_perm| > |delta_obs|)``,
so it can be exactly 0; ``plus_one=True`` switches to ``(1 + count) / (1 + G)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .estimators import mauc, naive_slope_baseline, ols_slopes, slope
from .imputation import DEFAULT_M_TESTING, as_stream, imputation_matrix
from .ingest import Session
from .spline import DEFAULT_SMOOTHER, SmootherConfig, smoother_for

DEFAULT_G = 1000
MIN_G = 100
_CHUNK = 64


@dataclass(frozen=True)
class PermTestResult:
    statistic_name: str
    delta_obs: float
    delta_perm: np.ndarray
    p_value: float
    G: int
    M: int
    seed: int
    degenerate: bool = False
    plus_one: bool = False
    estimate_pre: float = float("nan")
    estimate_post: float = float("nan")

    @property
    def n_exceed(self) -> int:
        return int(np.count_nonzero(np.abs(self.delta_perm) > abs(self.delta_obs)))

    @property
    def resolution(self) -> float:
        """Smallest non-zero p-value attainable with this many permutations."""
        return 1.0 / (self.G + 1) if self.plus_one else 1.0 / self.G

    def describe_p(self) -> str:
        if self.p_value == 0.0:
            return f"< {self.resolution:g} (0 of {self.G} permutations exceeded)"
        return f"{self.p_value:g}"


class BaselineTest(NamedTuple):
    delta: float
    p_value: float


def permutation_p_value(delta_obs: float, delta_perm, plus_one: bool = False) -> float:
    delta_perm = np.asarray(delta_perm, dtype=float)
    count = int(np.count_nonzero(np.abs(delta_perm) > abs(delta_obs)))
    if plus_one:
        return (1 + count) / (1 + delta_perm.size)
    return count / delta_perm.size


def _check_g(G: int) -> None:
    if G < MIN_G:
        raise ValueError(f"G must be at least {MIN_G}, got {G}")


def _is_flat(values, censored) -> bool:
    return not np.any(censored) and np.ptp(values) == 0.0


def mauc_perm_test(
    session: Session,
    G: int = DEFAULT_G,
    M: int = DEFAULT_M_TESTING,
    rng=0,
    config: SmootherConfig = DEFAULT_SMOOTHER,
    plus_one: bool = False,
) -> PermTestResult:
    """Permutation test for ``MAUC_post - MAUC_pre`` over each segment's full span."""
    _check_g(G)
    stream = as_stream(rng)
    pre, post = session.pre, session.post
    est_pre = mauc(pre, None, M, stream.child("pre"), config, n_boot=0).value
    est_post = mauc(post, None, M, stream.child("post"), config, n_boot=0).value
    delta_obs = est_post - est_pre

    sm_pre = smoother_for(pre.times, config)
    sm_post = smoother_for(post.times, config)
    w_pre = sm_pre.integral_weights(*pre.span) / (pre.span[1] - pre.span[0])
    w_post = sm_post.integral_weights(*post.span) / (post.span[1] - post.span[0])
    values = np.concatenate([pre.values, post.values])
    censored = np.concatenate([pre.censored, post.censored])
    limit = pre.detection_limit
    k_pre, k_all = len(pre), values.size

    delta_perm = np.empty(G)
    for start in range(0, G, _CHUNK):
        gs = range(start, min(start + _CHUNK, G))
        blocks = []
        for g in gs:
            g_stream = stream.child("perm", g + 1)
            order = g_stream.child("order").generator().permutation(k_all)
            blocks.append(imputation_matrix(values[order], censored[order], limit, g_stream, M))
        imputed = np.concatenate(blocks, axis=1)
        stat_pre = w_pre @ sm_pre.fit_many(imputed[:k_pre]).coefficients
        stat_post = w_post @ sm_post.fit_many(imputed[k_pre:]).coefficients
        delta_perm[start : start + len(gs)] = (stat_post - stat_pre).reshape(len(gs), M).mean(axis=1)

    degenerate = _is_flat(values, censored)
    p = 1.0 if degenerate else permutation_p_value(delta_obs, delta_perm, plus_one)
    return PermTestResult(
        statistic_name="MAUC",
        delta_obs=float(delta_obs),
        delta_perm=delta_perm,
        p_value=float(p),
        G=G,
        M=M,
        seed=stream.master_seed,
        degenerate=degenerate,
        plus_one=plus_one,
        estimate_pre=float(est_pre),
        estimate_post=float(est_post),
    )


def slope_perm_test(
    session: Session,
    G: int = DEFAULT_G,
    M: int = DEFAULT_M_TESTING,
    rng=0,
    config: SmootherConfig = DEFAULT_SMOOTHER,
    plus_one: bool = False,
) -> PermTestResult:
    """Permutation test for ``slope_post - slope_pre``; values move only within a segment."""
    _check_g(G)
    stream = as_stream(rng)
    pre, post = session.pre, session.post
    est_pre = slope(pre, M, stream.child("pre"), config, n_boot=0).value
    est_post = slope(post, M, stream.child("post"), config, n_boot=0).value
    delta_obs = est_post - est_pre

    sm_pre = smoother_for(pre.times, config)
    sm_post = smoother_for(post.times, config)
    limit = pre.detection_limit

    delta_perm = np.empty(G)
    for start in range(0, G, _CHUNK):
        gs = range(start, min(start + _CHUNK, G))
        blocks_pre, blocks_post = [], []
        for g in gs:
            g_stream = stream.child("perm", g + 1)
            o_pre = g_stream.child("order_pre").generator().permutation(len(pre))
            o_post = g_stream.child("order_post").generator().permutation(len(post))
            blocks_pre.append(imputation_matrix(pre.values[o_pre], pre.censored[o_pre], limit, g_stream.child("pre"), M))
            blocks_post.append(imputation_matrix(post.values[o_post], post.censored[o_post], limit, g_stream.child("post"), M))
        s_pre, _ = ols_slopes(pre.times, sm_pre.fit_many(np.concatenate(blocks_pre, axis=1)).fitted)
        s_post, _ = ols_slopes(post.times, sm_post.fit_many(np.concatenate(blocks_post, axis=1)).fitted)
        delta_perm[start : start + len(gs)] = (s_post - s_pre).reshape(len(gs), M).mean(axis=1)

    degenerate = _is_flat(pre.values, pre.censored) and _is_flat(post.values, post.censored)
    p = 1.0 if degenerate else permutation_p_value(delta_obs, delta_perm, plus_one)
    return PermTestResult(
        statistic_name="slope",
        delta_obs=float(delta_obs),
        delta_perm=delta_perm,
        p_value=float(p),
        G=G,
        M=M,
        seed=stream.master_seed,
        degenerate=degenerate,
        plus_one=plus_one,
        estimate_pre=float(est_pre),
        estimate_post=float(est_post),
    )


def welch_t(a, b) -> tuple[float, float]:
    """Welch statistic for ``mean(b) - mean(a)`` and its degrees of freedom."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    t = (b.mean() - a.mean()) / np.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(t), float(df)


def t_test_baseline(session: Session) -> BaselineTest:
    """Welch two-sample t-test on the clamped values, post versus pre."""
    pre, post = session.pre.values, session.post.values
    if pre.size < 2 or post.size < 2:
        raise ValueError("t-test needs at least two values per segment")
    delta = float(post.mean() - pre.mean())
    if np.ptp(pre) == 0.0 and np.ptp(post) == 0.0:
        return BaselineTest(delta, 1.0 if delta == 0.0 else 0.0)
    res = stats.ttest_ind(post, pre, equal_var=False)
    return BaselineTest(delta, float(res.pvalue))


def naive_slope_test(session: Session, n_boot: int = 500, rng=0, block_len: int | None = None) -> BaselineTest:
    """Two-sided z-test of the raw OLS slope change against block-bootstrap SEs."""
    stream = as_stream(rng)
    b_pre, se_pre = naive_slope_baseline(session.pre, n_boot, block_len, stream.child("pre"))
    b_post, se_post = naive_slope_baseline(session.post, n_boot, block_len, stream.child("post"))
    delta = b_post - b_pre
    se = float(np.hypot(se_pre, se_post))
    if se == 0.0:
        return BaselineTest(delta, 1.0 if delta == 0.0 else 0.0)
    return BaselineTest(delta, float(2.0 * stats.norm.sf(abs(delta) / se)))
