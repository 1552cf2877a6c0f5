"""Spline-based MAUC and slope estimation for left-censored rSO2 series.

Censored readings are multiply imputed, each completed series is smoothed
with a GCV-tuned penalized spline, and the MAUC (time average of the smooth)
and slope summaries are pooled with Rubin's rules. Pre/post changes are
tested with MI-nested permutation tests.
"""

from importlib.metadata import PackageNotFoundError, version as _version

from .estimators import MaucEstimate, SlopeEstimate, mauc, naive_slope_baseline, sample_mean_baseline, slope
from .imputation import RngStream, impute, impute_set
from .inference import PermTestResult, mauc_perm_test, naive_slope_test, slope_perm_test, t_test_baseline
from .ingest import Rso2Series, Session, SessionMeta, load_session, parse_session
from .lpb import LpbModel, fit_lpb, lpb_resample
from .spline import SmootherConfig, SplineFit, evaluate, fit_spline, gcv_score, integrate

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "LpbModel",
    "MaucEstimate",
    "PermTestResult",
    "RngStream",
    "Rso2Series",
    "Session",
    "SessionMeta",
    "SlopeEstimate",
    "SmootherConfig",
    "SplineFit",
    "evaluate",
    "fit_lpb",
    "fit_spline",
    "gcv_score",
    "impute",
    "impute_set",
    "integrate",
    "load_session",
    "lpb_resample",
    "mauc",
    "mauc_perm_test",
    "naive_slope_baseline",
    "naive_slope_test",
    "parse_session",
    "sample_mean_baseline",
    "slope",
    "slope_perm_test",
    "t_test_baseline",
]
