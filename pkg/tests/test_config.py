import pytest

from rso2stat.config import (
    AnalysisConfig,
    ConfigError,
    analysis_config_from_mapping,
    bundled_scenario,
    experiment_from_mapping,
    load_experiment,
    parse_toml,
)
from rso2stat.simulate import EXPERIMENTS


def test_defaults():
    cfg = analysis_config_from_mapping({})
    assert cfg == AnalysisConfig()
    d = cfg.to_dict()
    assert (d["M"], d["M_test"], d["G"], d["B_boot"], d["block_len"]) == (20, 10, 1000, 500, "auto")
    assert d["detection_limit"] == 15.0


@pytest.mark.parametrize(
    "data, key",
    [
        ({"Mm": 3}, "Mm"),
        ({"G": 50}, "G"),
        ({"M": 1}, "M"),
        ({"M": "20"}, "M"),
        ({"B_boot": True}, "B_boot"),
        ({"block_len": 0}, "block_len"),
        ({"detection_limit": -1}, "detection_limit"),
        ({"smoother": {"knots": 3}}, "smoother.knots"),
        ({"smoother": {"lambda_log10_range": [1]}}, "lambda_log10_range"),
    ],
)
def test_errors_name_the_key(data, key):
    with pytest.raises(ConfigError) as info:
        analysis_config_from_mapping(data)
    assert info.value.key == key
    assert key in str(info.value)


def test_malformed_toml_names_key():
    with pytest.raises(ConfigError) as info:
        parse_toml('M = 20\nG = [1, 2\nB_boot = 5\n')
    assert "malformed TOML" in str(info.value)
    with pytest.raises(ConfigError) as info:
        parse_toml("M = 20\nB_boot = 5 5\n")
    assert info.value.key == "B_boot"


def test_block_len_values():
    assert analysis_config_from_mapping({"block_len": "auto"}).block_len is None
    assert analysis_config_from_mapping({"block_len": 6}).block_len == 6


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_bundled_scenarios_load(name):
    spec = load_experiment(bundled_scenario(name))
    assert spec.experiment == name
    assert spec.scenarios


def test_bundled_analysis_defaults_match():
    from rso2stat.config import load_analysis_config

    assert load_analysis_config(bundled_scenario("analysis")) == AnalysisConfig()


def test_experiment_validation():
    base = {"experiment": "table1", "scenarios": [{"name": "a", "pre": {"target_mean": 20.0, "noise_sd": 1.0}}]}
    spec = experiment_from_mapping(base, seed=9, n_reps=3)
    assert spec.settings.seed == 9 and spec.settings.n_reps == 3
    assert spec.scenarios[0].post == spec.scenarios[0].pre
    with pytest.raises(ConfigError, match="scenarios"):
        experiment_from_mapping({"experiment": "table1", "scenarios": []})
    with pytest.raises(ConfigError, match="experiment"):
        experiment_from_mapping({**base, "experiment": "table9"})
    with pytest.raises(ConfigError) as info:
        experiment_from_mapping({**base, "scenarios": [{"name": "a", "pre": {"target_mean": 20.0, "sd": 1}}]})
    assert info.value.key == "sd"
    with pytest.raises(ConfigError, match="unique"):
        experiment_from_mapping({**base, "scenarios": base["scenarios"] * 2})
    with pytest.raises(ConfigError):
        bundled_scenario("nope")
