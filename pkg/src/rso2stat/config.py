"""TOML configuration for analyses and simulation experiments.

Every validation error names the key it is about, so a failing
``rso2stat validate`` points straight at the offending line.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .imputation import DEFAULT_M_ESTIMATION, DEFAULT_M_TESTING
from .inference import DEFAULT_G, MIN_G
from .ingest import DEFAULT_DETECTION_LIMIT
from .simulate import EXPERIMENTS, PeriodSpec, ScenarioError, SimScenario, SimSettings
from .spline import DEFAULT_SMOOTHER, SmootherConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


_KEY_AT_LINE = re.compile(r"^\s*([A-Za-z0-9_.\-\"']+)\s*=")


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+)", msg)
        key = None
        if m:
            lines = text.splitlines()
            lineno = int(m.group(1))
            if 0 < lineno <= len(lines):
                km = _KEY_AT_LINE.match(lines[lineno - 1])
                key = km.group(1).strip("\"'") if km else None
        where = f" near key '{key}'" if key else ""
        raise ConfigError(f"malformed TOML{where}: {msg}", key) from exc


def _expect(data: dict, key: str, kinds, where: str = ""):
    value = data[key]
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"key '{where}{key}' must be {' or '.join(k.__name__ for k in kinds)}, got bool", key)
    if not isinstance(value, kinds):
        raise ConfigError(f"key '{where}{key}' must be {' or '.join(k.__name__ for k in kinds)}, got {type(value).__name__}", key)
    return value


def _smoother_from(data, prefix: str = "smoother.") -> SmootherConfig:
    if not isinstance(data, dict):
        raise ConfigError("key 'smoother' must be a table", "smoother")
    known = {f.name for f in fields(SmootherConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{prefix}{key}'", f"{prefix}{key}")
    for key in ("max_interior_knots", "degree", "grid_points"):
        if key in data:
            _expect(data, key, (int,), prefix)
    if "lambda_log10_range" in data:
        rng = data["lambda_log10_range"]
        if not (isinstance(rng, list) and len(rng) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rng)):
            raise ConfigError(f"key '{prefix}lambda_log10_range' must be a pair of numbers", "lambda_log10_range")
    try:
        return SmootherConfig.from_mapping(data)
    except ValueError as exc:
        raise ConfigError(f"invalid smoother settings: {exc}", "smoother") from exc


@dataclass(frozen=True)
class AnalysisConfig:
    """Settings for ``rso2stat analyze``.

    ``M`` imputations feed the estimates and ``M_test`` imputations each
    permutation; ``block_len = None`` picks ``ceil(n ** (1/3))`` per segment.
    """

    M: int = DEFAULT_M_ESTIMATION
    M_test: int = DEFAULT_M_TESTING
    G: int = DEFAULT_G
    B_boot: int = 500
    block_len: int | None = None
    detection_limit: float = DEFAULT_DETECTION_LIMIT
    workers: int = 1
    plus_one: bool = False
    smoother: SmootherConfig = field(default_factory=lambda: DEFAULT_SMOOTHER)

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "M_test": self.M_test,
            "G": self.G,
            "B_boot": self.B_boot,
            "block_len": self.block_len if self.block_len is not None else "auto",
            "detection_limit": self.detection_limit,
            "workers": self.workers,
            "plus_one": self.plus_one,
            "smoother": self.smoother.to_dict(),
        }


_INT_KEYS = {"M": 2, "M_test": 1, "G": MIN_G, "B_boot": 50, "workers": 1}


def analysis_config_from_mapping(data: dict) -> AnalysisConfig:
    known = {f.name for f in fields(AnalysisConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{key}'", key)
    kwargs = {}
    for key, minimum in _INT_KEYS.items():
        if key in data:
            value = _expect(data, key, (int,))
            if value < minimum:
                raise ConfigError(f"key '{key}' must be >= {minimum}, got {value}", key)
            kwargs[key] = value
    if "block_len" in data:
        value = data["block_len"]
        if value != "auto":
            value = _expect(data, "block_len", (int,))
            if value < 1:
                raise ConfigError("key 'block_len' must be >= 1 or \"auto\"", "block_len")
            kwargs["block_len"] = value
    if "detection_limit" in data:
        value = float(_expect(data, "detection_limit", (int, float)))
        if not value > 0:
            raise ConfigError("key 'detection_limit' must be positive", "detection_limit")
        kwargs["detection_limit"] = value
    if "plus_one" in data:
        kwargs["plus_one"] = _expect(data, "plus_one", (bool,))
    if "smoother" in data:
        kwargs["smoother"] = _smoother_from(data["smoother"])
    return AnalysisConfig(**kwargs)


def load_analysis_config(path=None) -> AnalysisConfig:
    if path is None:
        return AnalysisConfig()
    return analysis_config_from_mapping(parse_toml(Path(path).read_text()))


# -- simulation scenario files ---------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    scenarios: tuple[SimScenario, ...]
    settings: SimSettings


_PERIOD_KEYS = {f.name for f in fields(PeriodSpec)}
_SCENARIO_KEYS = {f.name for f in fields(SimScenario)}
_SETTINGS_KEYS = {"n_reps", "seed", "M", "B_boot", "G", "alphas", "power_alpha", "workers", "block_len", "smoother"}


def _period_from(data, where: str) -> PeriodSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"key '{where}' must be a table", where)
    for key in data:
        if key not in _PERIOD_KEYS:
            raise ConfigError(f"unknown key '{where}.{key}'", key)
    if "target_mean" not in data:
        raise ConfigError(f"key '{where}.target_mean' is required", "target_mean")
    kwargs = dict(data)
    for key in ("control_positions", "control_values"):
        if key in kwargs:
            kwargs[key] = tuple(float(v) for v in kwargs[key])
    try:
        return PeriodSpec(**kwargs)
    except (ScenarioError, TypeError) as exc:
        raise ConfigError(f"invalid '{where}': {exc}", where) from exc


def _scenario_from(data, index: int) -> SimScenario:
    where = f"scenarios[{index}]"
    if not isinstance(data, dict):
        raise ConfigError(f"key '{where}' must be a table", "scenarios")
    for key in data:
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown key '{where}.{key}'", key)
    for key in ("name", "pre"):
        if key not in data:
            raise ConfigError(f"key '{where}.{key}' is required", key)
    kwargs = dict(data)
    kwargs["pre"] = _period_from(data["pre"], f"{where}.pre")
    kwargs["post"] = _period_from(data["post"], f"{where}.post") if "post" in data else kwargs["pre"]
    try:
        return SimScenario(**kwargs)
    except (ScenarioError, TypeError) as exc:
        raise ConfigError(f"invalid '{where}': {exc}", where) from exc


def experiment_from_mapping(data: dict, seed: int | None = None, n_reps: int | None = None, workers: int | None = None) -> ExperimentSpec:
    """Validate a scenario file; ``seed``, ``n_reps`` and ``workers`` override the file."""
    for key in data:
        if key not in _SETTINGS_KEYS | {"experiment", "scenarios"}:
            raise ConfigError(f"unknown key '{key}'", key)
    if "experiment" not in data:
        raise ConfigError("key 'experiment' is required", "experiment")
    experiment = data["experiment"]
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"key 'experiment' must be one of {list(EXPERIMENTS)}, got {experiment!r}", "experiment")
    raw = data.get("scenarios", [])
    if not isinstance(raw, list) or not raw:
        raise ConfigError("key 'scenarios' must list at least one scenario", "scenarios")
    scenarios = tuple(_scenario_from(s, i) for i, s in enumerate(raw))
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique", "name")

    kwargs = {}
    for key in ("n_reps", "seed", "M", "G", "workers"):
        if key in data:
            kwargs[key] = _expect(data, key, (int,))
    if "B_boot" in data:
        kwargs["n_boot"] = _expect(data, "B_boot", (int,))
    if "block_len" in data and data["block_len"] != "auto":
        kwargs["block_len"] = _expect(data, "block_len", (int,))
    if "alphas" in data:
        alphas = data["alphas"]
        if not isinstance(alphas, list) or not alphas or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in alphas):
            raise ConfigError("key 'alphas' must be a non-empty list of numbers", "alphas")
        kwargs["alphas"] = tuple(float(a) for a in alphas)
    if "power_alpha" in data:
        kwargs["power_alpha"] = float(_expect(data, "power_alpha", (int, float)))
    if "smoother" in data:
        kwargs["smoother"] = _smoother_from(data["smoother"])
    for key, value in (("seed", seed), ("n_reps", n_reps), ("workers", workers)):
        if value is not None:
            kwargs[key] = value
    if kwargs.get("G", MIN_G) < MIN_G:
        raise ConfigError(f"key 'G' must be >= {MIN_G}", "G")
    try:
        settings = SimSettings(**kwargs)
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentSpec(experiment, scenarios, settings)


def load_experiment(path, **overrides) -> ExperimentSpec:
    return experiment_from_mapping(parse_toml(Path(path).read_text()), **overrides)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package (``table1`` ... ``fig2``)."""
    stem = name[:-5] if name.endswith(".toml") else name
    ref = resources.files("rso2stat") / "data" / f"{stem}.toml"
    if not ref.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return Path(str(ref))
