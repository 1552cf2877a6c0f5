"""A reduced run of the Monte Carlo harness.

The full experiments are the bundled scenario files (``rso2stat simulate
--scenario table1`` and so on); here a few dozen replicates show the shape
of the results.
"""

from dataclasses import replace

from rso2stat.config import bundled_scenario, load_experiment
from rso2stat.simulate import run_experiment

spec = load_experiment(bundled_scenario("table1"), n_reps=40)
rows = run_experiment("table1", spec.scenarios[2:], spec.settings)
print("Table 1, case 3 (40 replicates)")
for r in rows:
    print(f"  {r['row']:10s} true {r['true_value']:6.3f}  MAUC bias {r['mauc_bias']:+.3f}  "
          f"sample-mean bias {r['sample_mean_bias']:+.3f}")

spec = load_experiment(bundled_scenario("fig1"), n_reps=30)
settings = replace(spec.settings, G=100, alphas=(0.05,))
print("Figure 1, null scenario (30 replicates, G = 100)")
for r in run_experiment("fig1", spec.scenarios[:1], settings):
    print(f"  {r['method']:15s} rejection rate at 0.05: {r['rejection_rate']:.3f}")
