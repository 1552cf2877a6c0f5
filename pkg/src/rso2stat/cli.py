"""Command-line interface: ``rso2stat {analyze,simulate,validate,version}``.

Exit codes: 0 success, 1 analysis failure (every session failed), 2 usage
or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import AnalysisConfig, ConfigError, bundled_scenario, load_analysis_config, load_experiment
from .estimators import mauc, naive_slope_baseline, pooled_curve, sample_mean_baseline, slope
from .imputation import RngStream
from .inference import mauc_perm_test, naive_slope_test, slope_perm_test, t_test_baseline
from .ingest import IngestError, SessionMeta, StructureError, censoring_fraction, parse_session
from .simulate import ScenarioError, rows_to_csv, run_experiment, scenario_to_dict
from .spline import SplineError

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


# -- analyze ----------------------------------------------------------------


def _load_meta(path: Path, config: AnalysisConfig) -> SessionMeta:
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StructureError(f"metadata is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise StructureError("metadata must be a JSON object")
    data.setdefault("detection_limit", config.detection_limit)
    return SessionMeta.from_mapping(data)


def analyze_session(session, config: AnalysisConfig, stream: RngStream) -> tuple[dict, list[list]]:
    """Report record and plot rows for one parsed session."""
    c = config
    pre, post = session.pre, session.post
    rec = {
        "subject_id": session.subject_id,
        "status": "ok",
        "n_pre": len(pre),
        "n_post": len(post),
        "n_dropped": session.n_dropped,
        "censored_fraction_pre": censoring_fraction(pre),
        "censored_fraction_post": censoring_fraction(post),
    }
    est = {}
    for label, seg in (("pre", pre), ("post", post)):
        m = mauc(seg, None, c.M, stream.child(f"mauc_{label}"), c.smoother, c.B_boot, c.block_len)
        b = slope(seg, c.M, stream.child(f"slope_{label}"), c.smoother, c.B_boot, c.block_len)
        est[label] = (m, b)
    perm_m = mauc_perm_test(session, c.G, c.M_test, stream.child("perm_mauc"), c.smoother, c.plus_one)
    perm_s = slope_perm_test(session, c.G, c.M_test, stream.child("perm_slope"), c.smoother, c.plus_one)
    rec.update(
        {
            "mauc_pre": est["pre"][0].value,
            "mauc_pre_se": est["pre"][0].se,
            "mauc_post": est["post"][0].value,
            "mauc_post_se": est["post"][0].se,
            "delta_mauc": est["post"][0].value - est["pre"][0].value,
            "p_mauc": perm_m.p_value,
            "p_mauc_text": perm_m.describe_p(),
            "slope_pre": est["pre"][1].value,
            "slope_pre_se": est["pre"][1].se,
            "slope_post": est["post"][1].value,
            "slope_post_se": est["post"][1].se,
            "delta_slope": est["post"][1].value - est["pre"][1].value,
            "p_slope": perm_s.p_value,
            "p_slope_text": perm_s.describe_p(),
        }
    )
    mean_pre, mean_pre_se = sample_mean_baseline(pre, c.B_boot, c.block_len, stream.child("mean_pre"))
    mean_post, mean_post_se = sample_mean_baseline(post, c.B_boot, c.block_len, stream.child("mean_post"))
    ttest = t_test_baseline(session)
    naive_stream = stream.child("naive_slope")
    ns_pre, ns_pre_se = naive_slope_baseline(pre, c.B_boot, c.block_len, naive_stream.child("pre"))
    ns_post, ns_post_se = naive_slope_baseline(post, c.B_boot, c.block_len, naive_stream.child("post"))
    naive = naive_slope_test(session, c.B_boot, naive_stream, c.block_len)
    rec.update(
        {
            "baseline_mean_pre": mean_pre,
            "baseline_mean_pre_se": mean_pre_se,
            "baseline_mean_post": mean_post,
            "baseline_mean_post_se": mean_post_se,
            "baseline_delta_mean": ttest.delta,
            "baseline_p_t_test": ttest.p_value,
            "baseline_slope_pre": ns_pre,
            "baseline_slope_pre_se": ns_pre_se,
            "baseline_slope_post": ns_post,
            "baseline_slope_post_se": ns_post_se,
            "baseline_delta_slope": naive.delta,
            "baseline_p_slope": naive.p_value,
        }
    )
    plot = []
    for label, seg in (("pre", pre), ("post", post)):
        curve = pooled_curve(seg, c.M, stream.child(f"mauc_{label}"), c.smoother)
        for t, mu, y, cens in zip(seg.times, curve, seg.values, seg.censored):
            plot.append([label, float(t), float(mu), float(y), int(cens)])
    for key, value in rec.items():
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError(f"non-finite result for {key}")
    return rec, plot


def _analyze_one(args) -> tuple[dict, list[list] | None]:
    index, csv_path, meta_path, config, seed = args
    stream = RngStream(seed).child("session", index)
    try:
        meta = _load_meta(Path(meta_path), config)
        session = parse_session(Path(csv_path).read_text(), meta)
        rec, plot = analyze_session(session, config, stream)
    except (OSError, IngestError, StructureError, SplineError, ValueError) as exc:
        name = Path(csv_path).stem
        line = getattr(exc, "line", None)
        rec = {"subject_id": name, "status": "error", "error": str(exc)}
        if line is not None:
            rec["line"] = line
        return rec, None
    return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in rec.items()}, plot


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def cmd_analyze(sessions, metas, config_path, seed: int, out_dir, workers: int | None = None) -> int:
    if len(sessions) != len(metas):
        raise UsageError("give one --meta per --session, in the same order")
    if not sessions:
        raise UsageError("at least one --session is required")
    config = load_analysis_config(config_path)
    n_workers = workers or config.workers
    jobs = [(i, s, m, config, seed) for i, (s, m) in enumerate(zip(sessions, metas))]
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(n_workers, len(jobs))) as pool:
            results = list(pool.map(_analyze_one, jobs))
    else:
        results = [_analyze_one(j) for j in jobs]

    report = {
        "tool": "rso2stat",
        "version": __version__,
        "seed": seed,
        "config": config.to_dict(),
        "units": {"mauc": "percent", "slope": "percent per second", "time": "seconds"},
        "sessions": [r for r, _ in results],
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    ok = [r for r, _ in results if r["status"] == "ok"]
    if ok:
        header = list(ok[0])
        rows = [[r[k] for k in header] for r in ok]
        (out / "report.csv").write_text(_csv_text(header + ["seed"], [row + [seed] for row in rows]))
    for rec, plot in results:
        if plot is not None:
            (out / f"curve_{_safe_name(rec['subject_id'])}.csv").write_text(
                _csv_text(["segment", "time_s", "mu_hat", "observed", "censored"], plot)
            )
    for rec, _ in results:
        if rec["status"] == "error":
            print(f"error: {rec['subject_id']}: {rec['error']}", file=sys.stderr)
    print(f"wrote {out / 'report.json'} ({len(ok)} of {len(results)} sessions analyzed)")
    return EXIT_OK if ok else EXIT_FAILURE


# -- simulate / validate / version -----------------------------------------


def _scenario_path(value: str) -> Path:
    path = Path(value)
    if path.exists():
        return path
    try:
        return bundled_scenario(value)
    except ConfigError:
        raise UsageError(f"scenario file not found: {value}") from None


def cmd_simulate(scenario, out_dir, seed: int | None = None, n_reps: int | None = None, workers: int | None = None) -> int:
    spec = load_experiment(_scenario_path(scenario), seed=seed, n_reps=n_reps, workers=workers)
    rows = run_experiment(spec.experiment, spec.scenarios, spec.settings)
    for row in rows:
        row["seed"] = spec.settings.seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{spec.experiment}.csv"
    csv_path.write_text(rows_to_csv(rows))
    settings = spec.settings
    meta = {
        "tool": "rso2stat",
        "version": __version__,
        "experiment": spec.experiment,
        "seed": settings.seed,
        "n_reps": settings.n_reps,
        "M": settings.M,
        "B_boot": settings.n_boot,
        "G": settings.G,
        "alphas": list(settings.alphas),
        "block_len": settings.block_len if settings.block_len is not None else "auto",
        "smoother": settings.smoother.to_dict(),
        "scenarios": [scenario_to_dict(s) for s in spec.scenarios],
    }
    (out / f"{spec.experiment}.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_validate(config_path) -> int:
    path = Path(config_path)
    if not path.exists():
        raise UsageError(f"config file not found: {config_path}")
    config = load_analysis_config(path)
    print(json.dumps({"valid": True, "config": config.to_dict()}, indent=2))
    return EXIT_OK


def cmd_version() -> int:
    print(f"rso2stat {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rso2stat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate and test pre/post changes for one or more sessions")
    p.add_argument("--session", action="append", default=[], required=True, help="session CSV (time_s,rso2); repeatable")
    p.add_argument("--meta", action="append", default=[], required=True, help="metadata JSON, one per --session")
    p.add_argument("--config", help="analysis TOML (defaults apply when omitted)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="rso2stat-out")
    p.add_argument("--workers", type=int, help="override the config's worker count")

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment from a scenario file")
    p.add_argument("--scenario", required=True, help="scenario TOML, or a bundled name such as table1")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the file's seed")
    p.add_argument("--reps", type=int, help="override the file's n_reps")
    p.add_argument("--workers", type=int, help="override the file's worker count")

    p = sub.add_parser("validate", help="check an analysis config file")
    p.add_argument("--config", required=True)

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        if args.command == "analyze":
            if args.workers is not None and args.workers < 1:
                raise UsageError("--workers must be >= 1")
            return cmd_analyze(args.session, args.meta, args.config, args.seed, args.out, args.workers)
        if args.command == "simulate":
            for flag in ("reps", "workers"):
                value = getattr(args, flag)
                if value is not None and value < 1:
                    raise UsageError(f"--{flag} must be >= 1")
            return cmd_simulate(args.scenario, args.out, args.seed, args.reps, args.workers)
        if args.command == "validate":
            return cmd_validate(args.config)
        return cmd_version()
    except (UsageError, ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
