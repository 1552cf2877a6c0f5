"""Testing a pre/post change.

The MI-nested permutation test pools the two segments, permutes the
readings, re-imputes and recomputes the MAUC (or slope) difference for each
permutation. The Welch t-test on clamped readings is shown for contrast.
"""

from rso2stat import RngStream, mauc_perm_test, naive_slope_test, slope_perm_test, t_test_baseline
from rso2stat.simulate import PeriodSpec, SimScenario, generate_session

null = SimScenario("null", PeriodSpec(17.709, target_censoring=0.3), PeriodSpec(17.709, target_censoring=0.3))
shift = SimScenario(
    "shift",
    PeriodSpec(17.709, target_censoring=0.3),
    PeriodSpec(20.724, profile="valley10", target_censoring=0.1),
)

for sc in (null, shift):
    session, _ = generate_session(sc, 0, rng=3)
    res = mauc_perm_test(session, G=200, M=5, rng=RngStream(4))
    base = t_test_baseline(session)
    print(f"{sc.name:6s} MAUC change {res.delta_obs:+.2f}  p = {res.describe_p()}   "
          f"| t-test change {base.delta:+.2f}  p = {base.p_value:.3g}")

trend = SimScenario(
    "trend",
    PeriodSpec(21.45, profile="offvalley30", target_slope=-0.005, target_censoring=0.3),
    PeriodSpec(21.45, profile="offvalley30", target_slope=0.005, target_censoring=0.3),
)
session, _ = generate_session(trend, 0, rng=3)
res = slope_perm_test(session, G=200, M=5, rng=RngStream(5))
base = naive_slope_test(session, n_boot=200, rng=RngStream(5))
print(f"trend  slope change {60 * res.delta_obs:+.4f}/min p = {res.describe_p()}   "
      f"| naive {60 * base.delta:+.4f}/min p = {base.p_value:.3g}")
