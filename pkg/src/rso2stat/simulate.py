"""Synthetic rSO2 sessions and the Monte Carlo experiment harness.

A session is a smooth template plus linear-process-bootstrap residuals,
clamped at the detection limit. The template is a monotone cubic (PCHIP)
curve through a handful of control points. It is detrended by OLS at the
observation times and shifted so that its time average over the segment
equals the target mean, then the target linear trend is added back. The
residual source is a standardized AR(1) reference series; the noise SD of
each period is either given or calibrated so that the expected censoring
fraction under a Gaussian marginal hits the target.

Every replicate draws from the stream ``seed / scenario / ("rep", r)``, so
results depend only on the seed and the replicate index, never on how the
replicates are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, stats
from scipy.interpolate import PchipInterpolator

from .estimators import mauc, naive_slope_baseline, ols_slopes, sample_mean_baseline, slope
from .imputation import RngStream, as_stream
from .inference import mauc_perm_test, naive_slope_test, slope_perm_test, t_test_baseline
from .ingest import DEFAULT_DETECTION_LIMIT, Rso2Series, Session
from .lpb import LpbModel, fit_lpb, lpb_resample
from .spline import DEFAULT_SMOOTHER, SmootherConfig

# Control points on [0, 1]. Each shape is a plateau in the low-to-mid 20s
# interrupted by one low episode; the episode width sets the censoring level.
PROFILES: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = {
    "valley30": (
        (0.0, 1 / 7, 2 / 7, 3 / 7, 4 / 7, 5 / 7, 6 / 7, 1.0),
        (24.0, 26.0, 16.0, 3.0, 20.0, 24.0, 24.0, 26.0),
    ),
    "valley10": (
        (0.0, 0.3, 0.44, 0.47, 0.5, 0.53, 0.7, 1.0),
        (24.0, 25.0, 24.0, 14.0, 0.0, 14.0, 25.0, 24.0),
    ),
    "valley50": (
        (0.0, 1 / 7, 2 / 7, 3 / 7, 4 / 7, 5 / 7, 6 / 7, 1.0),
        (20.0, 22.0, 10.0, 6.0, 0.0, 6.0, 18.0, 21.0),
    ),
    "valley25": (
        (0.0, 1 / 7, 2 / 7, 3 / 7, 4 / 7, 5 / 7, 6 / 7, 1.0),
        (25.0, 27.0, 25.0, 20.0, 4.0, 20.0, 27.0, 26.0),
    ),
    "symvalley30": (
        (0.0, 0.25, 0.38, 0.46, 0.54, 0.62, 0.75, 1.0),
        (24.0, 25.0, 16.0, 6.0, 6.0, 16.0, 25.0, 24.0),
    ),
    # Flat-bottomed low episode left of centre, balanced by a higher early
    # plateau so the shape itself has almost no trend.
    "offvalley30": (
        (0.0, 0.245, 0.291, 0.438, 0.586, 0.631, 0.816, 1.0),
        (32.5, 32.5, 9.5, 9.5, 9.5, 24.3, 24.3, 24.3),
    ),
    "flat": ((0.0, 1.0), (0.0, 0.0)),
}

EXPERIMENTS = ("table1", "table2", "table3", "fig1", "fig2")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodSpec:
    """One segment of a simulated session.

    ``target_slope`` is in percent per ``slope_unit_s`` seconds of the
    enclosing scenario. Give either ``noise_sd`` or ``target_censoring``.
    """

    target_mean: float
    n_points: int = 360
    target_slope: float = 0.0
    profile: str = "valley30"
    control_positions: tuple[float, ...] | None = None
    control_values: tuple[float, ...] | None = None
    target_censoring: float | None = None
    noise_sd: float | None = None

    def __post_init__(self):
        if self.n_points < 8:
            raise ScenarioError("n_points must be at least 8")
        if self.control_values is None and self.profile not in PROFILES:
            raise ScenarioError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        if self.noise_sd is None and self.target_censoring is None:
            raise ScenarioError("give noise_sd or target_censoring")
        if self.noise_sd is not None and self.noise_sd < 0:
            raise ScenarioError("noise_sd must be non-negative")
        if self.target_censoring is not None and not 0.0 < self.target_censoring < 1.0:
            raise ScenarioError("target_censoring must lie in (0, 1)")

    def control_points(self) -> tuple[np.ndarray, np.ndarray]:
        if self.control_values is not None:
            vals = np.asarray(self.control_values, dtype=float)
            pos = self.control_positions
            pos = np.linspace(0.0, 1.0, vals.size) if pos is None else np.asarray(pos, dtype=float)
        else:
            pos, vals = (np.asarray(a, dtype=float) for a in PROFILES[self.profile])
        if pos.size != vals.size or pos.size < 2:
            raise ScenarioError("control positions and values must pair up (at least 2)")
        if pos[0] != 0.0 or pos[-1] != 1.0 or np.any(np.diff(pos) <= 0):
            raise ScenarioError("control positions must increase from 0 to 1")
        return pos, vals


@dataclass(frozen=True)
class SimScenario:
    name: str
    pre: PeriodSpec
    post: PeriodSpec
    detection_limit: float = DEFAULT_DETECTION_LIMIT
    cadence_s: float = 30.0
    transfusion_s: float = 1800.0
    ar_phi: float = 0.6
    reference_length: int = 2000
    reference_seed: int = 0
    band_len: int | None = None
    slope_unit_s: float = 60.0

    def __post_init__(self):
        if self.cadence_s <= 0 or self.transfusion_s <= 0:
            raise ScenarioError("cadence_s and transfusion_s must be positive")
        if not -1.0 < self.ar_phi < 1.0:
            raise ScenarioError("ar_phi must lie in (-1, 1)")
        if max(self.pre.n_points, self.post.n_points) > self.reference_length:
            raise ScenarioError("reference_length must cover the longest period")

    def times(self) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
        c = self.cadence_s
        t_pre = c * np.arange(self.pre.n_points, dtype=float)
        start = t_pre[-1] + c
        end = start + self.transfusion_s
        t_post = end + c * np.arange(1, self.post.n_points + 1, dtype=float)
        return t_pre, t_post, (start, end)


@dataclass(frozen=True)
class Template:
    """The smooth truth of one period, usable at any time in its span."""

    times: np.ndarray
    target_mean: float
    slope_per_s: float
    interp: PchipInterpolator = field(repr=False)
    shift: float
    detrend: float

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        t0, t1 = self.times[0], self.times[-1]
        tbar = self.times.mean()
        h = self.interp((t - t0) / (t1 - t0)) - self.detrend * (t - tbar) - self.shift
        return self.target_mean + self.slope_per_s * (t - tbar) + h

    @property
    def values(self) -> np.ndarray:
        return self(self.times)

    def time_average(self) -> float:
        """Exact time average over the span (PCHIP integrates in closed form)."""
        t0, t1 = self.times[0], self.times[-1]
        mid, tbar = 0.5 * (t0 + t1), self.times.mean()
        return self.target_mean + (self.slope_per_s - self.detrend) * (mid - tbar) + self.interp.integrate(0.0, 1.0) - self.shift


def build_template(spec: PeriodSpec, times: np.ndarray, slope_unit_s: float = 60.0) -> Template:
    pos, vals = spec.control_points()
    interp = PchipInterpolator(pos, vals)
    u = (times - times[0]) / (times[-1] - times[0])
    d, _ = ols_slopes(times, interp(u)[:, None])
    detrend = float(d[0])
    mid, tbar = 0.5 * (times[0] + times[-1]), times.mean()
    # Shift so the continuous time average of the detrended shape is zero.
    shift = float(interp.integrate(0.0, 1.0)) - detrend * (mid - tbar)
    return Template(times, float(spec.target_mean), spec.target_slope / slope_unit_s, interp, shift, detrend)


def expected_censoring(template_values: np.ndarray, noise_sd: float, limit: float) -> float:
    if noise_sd == 0:
        return float(np.mean(template_values <= limit))
    return float(np.mean(stats.norm.cdf((limit - template_values) / noise_sd)))


def calibrate_noise_sd(template_values: np.ndarray, target: float, limit: float) -> float:
    """Smallest Gaussian noise SD whose expected censoring fraction equals ``target``."""
    grid = np.geomspace(1e-2, 50.0, 400)
    z = (limit - template_values[None, :]) / grid[:, None]
    gap = stats.norm.cdf(z).mean(axis=1) - target
    cross = np.nonzero(np.sign(gap[:-1]) != np.sign(gap[1:]))[0]
    if cross.size == 0:
        raise ScenarioError(f"no noise SD in [0.01, 50] gives censoring fraction {target}")
    i = cross[0]
    return float(
        optimize.brentq(lambda s: expected_censoring(template_values, s, limit) - target, grid[i], grid[i + 1], xtol=1e-12)
    )


@lru_cache(maxsize=16)
def reference_model(ar_phi: float, length: int, seed: int, band_len: int | None) -> LpbModel:
    """LPB model of a standardized AR(1) reference series."""
    gen = RngStream(seed).child("reference").generator()
    burn = 500
    e = gen.standard_normal(length + burn)
    x = np.empty_like(e)
    x[0] = e[0] / math.sqrt(1.0 - ar_phi**2)
    for i in range(1, x.size):
        x[i] = ar_phi * x[i - 1] + e[i]
    x = x[burn:]
    x = (x - x.mean()) / x.std()
    return fit_lpb(x, band_len)


@dataclass(frozen=True)
class PeriodTruth:
    template: Template
    noise_sd: float
    latent: np.ndarray
    true_mean: float
    true_slope: float  # per slope unit


@dataclass(frozen=True)
class LatentTruth:
    replicate_id: int
    pre: PeriodTruth
    post: PeriodTruth


@dataclass(frozen=True)
class _Prepared:
    scenario: SimScenario
    times: tuple
    templates: tuple
    noise_sd: tuple
    model: LpbModel


@lru_cache(maxsize=32)
def prepare(scenario: SimScenario) -> _Prepared:
    t_pre, t_post, window = scenario.times()
    templates, sds = [], []
    for spec, t in ((scenario.pre, t_pre), (scenario.post, t_post)):
        tmpl = build_template(spec, t, scenario.slope_unit_s)
        sd = spec.noise_sd
        if sd is None:
            sd = calibrate_noise_sd(tmpl.values, spec.target_censoring, scenario.detection_limit)
        templates.append(tmpl)
        sds.append(float(sd))
    model = reference_model(scenario.ar_phi, scenario.reference_length, scenario.reference_seed, scenario.band_len)
    return _Prepared(scenario, (t_pre, t_post, window), tuple(templates), tuple(sds), model)


def generate_session(scenario: SimScenario, replicate_id: int, rng=0) -> tuple[Session, LatentTruth]:
    """Draw one replicate; the latent series is returned alongside the clamped session."""
    prep = prepare(scenario)
    t_pre, t_post, window = prep.times
    stream = as_stream(rng).child("rep", replicate_id).child("data")
    limit = scenario.detection_limit
    series, truths = [], []
    for label, spec, t, tmpl, sd in zip(("pre", "post"), (scenario.pre, scenario.post), (t_pre, t_post), prep.templates, prep.noise_sd):
        mu = tmpl.values
        if sd > 0:
            latent = mu + sd * lpb_resample(prep.model, t.size, stream.child(label))
        else:
            latent = mu.copy()
        series.append(Rso2Series.from_raw(t, latent, limit))
        truths.append(PeriodTruth(tmpl, sd, latent, float(spec.target_mean), float(spec.target_slope)))
    session = Session(f"{scenario.name}-{replicate_id:05d}", series[0], series[1], window)
    return session, LatentTruth(replicate_id, truths[0], truths[1])


# -- experiment harness -----------------------------------------------------


@dataclass(frozen=True)
class SimSettings:
    n_reps: int = 200
    seed: int = 0
    M: int = 20
    n_boot: int = 200
    G: int = 500
    alphas: tuple[float, ...] = (0.01, 0.05, 0.1, 0.15, 0.2)
    power_alpha: float = 0.05
    workers: int = 1
    block_len: int | None = None
    smoother: SmootherConfig = DEFAULT_SMOOTHER

    def __post_init__(self):
        if self.n_reps < 1:
            raise ScenarioError("n_reps must be >= 1")
        if self.workers < 1:
            raise ScenarioError("workers must be >= 1")
        if any(not 0.0 < a <= 1.0 for a in self.alphas):
            raise ScenarioError("alphas must lie in (0, 1]")


def _rep_stream(settings: SimSettings, scenario: SimScenario, r: int) -> RngStream:
    return RngStream(settings.seed).child(scenario.name).child("rep", r)


def _table1_record(scenario, settings, r):
    session, truth = generate_session(scenario, r, RngStream(settings.seed).child(scenario.name))
    s = _rep_stream(settings, scenario, r).child("analysis")
    out = []
    for label, seg, tr in (("pre", session.pre, truth.pre), ("post", session.post, truth.post)):
        est = mauc(seg, None, settings.M, s.child(label), settings.smoother, n_boot=0).value
        out += [est - tr.true_mean, float(seg.values.mean()) - tr.true_mean, float(seg.censored.mean())]
    return out


def _table2_record(scenario, settings, r):
    session, truth = generate_session(scenario, r, RngStream(settings.seed).child(scenario.name))
    s = _rep_stream(settings, scenario, r).child("analysis")
    unit = scenario.slope_unit_s
    out = []
    for label, seg, tr in (("pre", session.pre, truth.pre), ("post", session.post, truth.post)):
        est = slope(seg, settings.M, s.child(label), settings.smoother, n_boot=0).value * unit
        naive = naive_slope_baseline(seg, n_boot=0)[0] * unit
        out += [est - tr.true_slope, naive - tr.true_slope, float(seg.censored.mean())]
    return out


def _table3_record(scenario, settings, r):
    session, _ = generate_session(scenario, r, RngStream(settings.seed).child(scenario.name))
    s = _rep_stream(settings, scenario, r).child("analysis")
    seg = session.pre
    m = mauc(seg, None, settings.M, s.child("mauc"), settings.smoother, settings.n_boot, settings.block_len)
    b = slope(seg, settings.M, s.child("slope"), settings.smoother, settings.n_boot, settings.block_len)
    unit = scenario.slope_unit_s
    return [m.value, m.se, b.value * unit, b.se * unit]


def _fig1_record(scenario, settings, r):
    session, _ = generate_session(scenario, r, RngStream(settings.seed).child(scenario.name))
    s = _rep_stream(settings, scenario, r).child("analysis")
    proposed = mauc_perm_test(session, settings.G, settings.M, s.child("perm"), settings.smoother).p_value
    return [proposed, t_test_baseline(session).p_value]


def _fig2_record(scenario, settings, r):
    session, _ = generate_session(scenario, r, RngStream(settings.seed).child(scenario.name))
    s = _rep_stream(settings, scenario, r).child("analysis")
    proposed = slope_perm_test(session, settings.G, settings.M, s.child("perm"), settings.smoother).p_value
    naive = naive_slope_test(session, settings.n_boot, s.child("naive"), settings.block_len).p_value
    return [proposed, naive]


_RECORDS = {
    "table1": _table1_record,
    "table2": _table2_record,
    "table3": _table3_record,
    "fig1": _fig1_record,
    "fig2": _fig2_record,
}


def _run_chunk(kind, scenario, settings, reps):
    fn = _RECORDS[kind]
    return [fn(scenario, settings, r) for r in reps]


def replicate_records(kind: str, scenario: SimScenario, settings: SimSettings) -> np.ndarray:
    """``(n_reps, k)`` per-replicate records, ordered by replicate index."""
    if kind not in _RECORDS:
        raise ScenarioError(f"unknown experiment {kind!r}")
    reps = list(range(settings.n_reps))
    if settings.workers == 1:
        rows = _run_chunk(kind, scenario, settings, reps)
    else:
        chunks = [reps[i :: settings.workers] for i in range(settings.workers)]
        with ProcessPoolExecutor(settings.workers) as pool:
            parts = list(pool.map(_run_chunk, [kind] * len(chunks), [scenario] * len(chunks), [settings] * len(chunks), chunks))
        rows = [None] * len(reps)
        for chunk, part in zip(chunks, parts):
            for r, rec in zip(chunk, part):
                rows[r] = rec
    return np.asarray(rows, dtype=float)


def _sd(x) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def run_table1(scenarios, settings: SimSettings) -> list[dict]:
    """MAUC vs sample-mean bias: three rows (pre, post, difference) per scenario."""
    rows = []
    for sc in scenarios:
        rec = replicate_records("table1", sc, settings)
        m_pre, s_pre, c_pre, m_post, s_post, c_post = rec.T
        for label, true, cens, mb, sb in (
            ("pre", sc.pre.target_mean, c_pre.mean(), m_pre, s_pre),
            ("post", sc.post.target_mean, c_post.mean(), m_post, s_post),
            ("difference", sc.post.target_mean - sc.pre.target_mean, float("nan"), m_post - m_pre, s_post - s_pre),
        ):
            rows.append(
                {
                    "scenario": sc.name,
                    "row": label,
                    "true_value": true,
                    "censored_fraction": cens,
                    "mauc_bias": mb.mean(),
                    "mauc_sd": _sd(mb),
                    "sample_mean_bias": sb.mean(),
                    "sample_mean_sd": _sd(sb),
                    "n_reps": settings.n_reps,
                }
            )
    return rows


def run_table2(scenarios, settings: SimSettings) -> list[dict]:
    """Proposed vs naive slope bias, in percent per ``slope_unit_s`` seconds."""
    rows = []
    for sc in scenarios:
        rec = replicate_records("table2", sc, settings)
        p_pre, n_pre, c_pre, p_post, n_post, c_post = rec.T
        for label, true, cens, pb, nb in (
            ("pre", sc.pre.target_slope, c_pre.mean(), p_pre, n_pre),
            ("post", sc.post.target_slope, c_post.mean(), p_post, n_post),
            ("difference", sc.post.target_slope - sc.pre.target_slope, float("nan"), p_post - p_pre, n_post - n_pre),
        ):
            rows.append(
                {
                    "scenario": sc.name,
                    "row": label,
                    "true_value": true,
                    "slope_unit_s": sc.slope_unit_s,
                    "censored_fraction": cens,
                    "proposed_bias": pb.mean(),
                    "proposed_sd": _sd(pb),
                    "naive_bias": nb.mean(),
                    "naive_sd": _sd(nb),
                    "n_reps": settings.n_reps,
                }
            )
    return rows


def run_table3(scenarios, settings: SimSettings) -> list[dict]:
    """Mean proposed SE against the Monte Carlo SD of the estimates (pre segment)."""
    rows = []
    for sc in scenarios:
        m, m_se, b, b_se = replicate_records("table3", sc, settings).T
        rows.append(
            {
                "scenario": sc.name,
                "true_mauc": sc.pre.target_mean,
                "mauc_mc_sd": _sd(m),
                "mauc_se_mean": m_se.mean(),
                "mauc_se_sd": _sd(m_se),
                "mauc_ratio": m_se.mean() / _sd(m) if _sd(m) > 0 else float("nan"),
                "true_slope": sc.pre.target_slope,
                "slope_unit_s": sc.slope_unit_s,
                "slope_mc_sd": _sd(b),
                "slope_se_mean": b_se.mean(),
                "slope_se_sd": _sd(b_se),
                "slope_ratio": b_se.mean() / _sd(b) if _sd(b) > 0 else float("nan"),
                "n_reps": settings.n_reps,
            }
        )
    return rows


def rejection_rate(p_values, alpha: float) -> float:
    """Share of p-values at or below ``alpha``; ``alpha = 1`` always rejects."""
    return float(np.mean(np.asarray(p_values) <= alpha))


def run_figures(kind: str, scenarios, settings: SimSettings) -> list[dict]:
    """Rejection-rate curves for the proposed test and its baseline."""
    if kind not in ("fig1", "fig2"):
        raise ScenarioError("figure kind must be 'fig1' or 'fig2'")
    names = ("mi_permutation", "t_test") if kind == "fig1" else ("mi_permutation", "naive_slope")
    rows = []
    for sc in scenarios:
        p = replicate_records(kind, sc, settings)
        for j, method in enumerate(names):
            for a in settings.alphas:
                rows.append(
                    {
                        "scenario": sc.name,
                        "method": method,
                        "alpha": a,
                        "rejection_rate": rejection_rate(p[:, j], a),
                        "n_reps": settings.n_reps,
                    }
                )
    return rows


def _plain(rows: list[dict]) -> list[dict]:
    return [{k: float(v) if isinstance(v, np.floating) else v for k, v in row.items()} for row in rows]


def run_experiment(kind: str, scenarios, settings: SimSettings) -> list[dict]:
    if not scenarios:
        raise ScenarioError("scenario list is empty")
    runners = {"table1": run_table1, "table2": run_table2, "table3": run_table3}
    if kind in runners:
        return _plain(runners[kind](scenarios, settings))
    return _plain(run_figures(kind, scenarios, settings))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 12))
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(rows[0]))
    for row in rows:
        writer.writerow([_fmt(float(v)) if isinstance(v, np.floating) else _fmt(v) for v in row.values()])
    return buf.getvalue()


def scenario_to_dict(scenario: SimScenario) -> dict:
    return asdict(scenario)
