import numpy as np
import pytest
from scipy import integrate as quad

from rso2stat.simulate import (
    PROFILES,
    PeriodSpec,
    ScenarioError,
    SimScenario,
    SimSettings,
    build_template,
    calibrate_noise_sd,
    expected_censoring,
    generate_session,
    prepare,
    rejection_rate,
    rows_to_csv,
    run_experiment,
)


def _scenario(pre=None, post=None, **kw):
    pre = pre or PeriodSpec(17.709, n_points=120, target_censoring=0.3)
    return SimScenario("t", pre, post or pre, **kw)


@pytest.mark.parametrize("profile", sorted(PROFILES))
@pytest.mark.parametrize("slope", [0.0, -0.005, 0.01])
def test_template_hits_mean_and_slope(profile, slope):
    t = 30.0 * np.arange(360)
    tmpl = build_template(PeriodSpec(21.0, profile=profile, target_slope=slope, noise_sd=1.0), t)
    avg = quad.quad(tmpl, t[0], t[-1], limit=200)[0] / (t[-1] - t[0])
    assert avg == pytest.approx(21.0, abs=1e-6)
    assert tmpl.time_average() == pytest.approx(21.0, abs=1e-9)
    b = np.polyfit(t, tmpl.values, 1)[0] * 60.0
    assert b == pytest.approx(slope, abs=1e-10)


def test_calibration_inverts_expected_censoring():
    t = 30.0 * np.arange(360)
    mu = build_template(PeriodSpec(17.709, noise_sd=1.0), t).values
    for target in (0.28, 0.3, 0.4):
        sd = calibrate_noise_sd(mu, target, 15.0)
        assert expected_censoring(mu, sd, 15.0) == pytest.approx(target, abs=1e-10)
    with pytest.raises(ScenarioError):
        calibrate_noise_sd(np.full(10, 40.0), 0.999, 15.0)


def test_zero_noise_reproduces_template():
    spec = PeriodSpec(30.0, n_points=100, noise_sd=0.0, profile="flat")
    session, truth = generate_session(_scenario(spec), 0, rng=1)
    np.testing.assert_allclose(session.pre.values, np.maximum(truth.pre.template.values, 15.0))
    np.testing.assert_allclose(session.pre.values, 30.0)


def test_replicates_are_keyed_by_index():
    sc = _scenario()
    a, _ = generate_session(sc, 3, rng=9)
    b, _ = generate_session(sc, 3, rng=9)
    c, _ = generate_session(sc, 4, rng=9)
    np.testing.assert_array_equal(a.pre.values, b.pre.values)
    assert not np.array_equal(a.pre.values, c.pre.values)
    assert a.subject_id == "t-00003"


def test_session_layout():
    sc = _scenario(cadence_s=10.0, transfusion_s=600.0)
    s, _ = generate_session(sc, 0)
    start, end = s.transfusion_window
    assert start == s.pre.times[-1] + 10.0 and end == start + 600.0
    assert s.post.times[0] == end + 10.0


def test_censoring_near_target():
    sc = _scenario()
    frac = np.mean([generate_session(sc, r, rng=2)[0].pre.censored.mean() for r in range(60)])
    assert frac == pytest.approx(0.3, abs=0.04)
    assert prepare(sc).noise_sd[0] > 0


def test_spec_validation():
    with pytest.raises(ScenarioError):
        PeriodSpec(20.0)
    with pytest.raises(ScenarioError):
        PeriodSpec(20.0, noise_sd=1.0, profile="nope")
    with pytest.raises(ScenarioError):
        PeriodSpec(20.0, target_censoring=1.5)
    with pytest.raises(ScenarioError):
        PeriodSpec(20.0, noise_sd=1.0, control_positions=(0.0, 0.7), control_values=(1.0, 2.0, 3.0)).control_points()
    with pytest.raises(ScenarioError):
        _scenario(ar_phi=1.0)
    with pytest.raises(ScenarioError):
        SimSettings(alphas=(0.0,))
    with pytest.raises(ScenarioError):
        run_experiment("table1", [], SimSettings())


def test_rejection_rate():
    p = [0.0, 0.01, 0.05, 0.2, 1.0]
    assert rejection_rate(p, 0.05) == 0.6
    assert rejection_rate(p, 1.0) == 1.0


def test_table_rows_and_csv():
    sc = _scenario()
    rows = run_experiment("table1", [sc], SimSettings(n_reps=4, M=2))
    assert [r["row"] for r in rows] == ["pre", "post", "difference"]
    assert all(type(v) in (str, int, float) for r in rows for v in r.values())
    text = rows_to_csv(rows)
    assert text.splitlines()[0].startswith("scenario,row,true_value")
    assert len(text.splitlines()) == 4


def test_workers_do_not_change_results():
    sc = _scenario()
    one = run_experiment("table2", [sc], SimSettings(n_reps=6, M=2, workers=1))
    two = run_experiment("table2", [sc], SimSettings(n_reps=6, M=2, workers=2))
    assert rows_to_csv(one) == rows_to_csv(two)
