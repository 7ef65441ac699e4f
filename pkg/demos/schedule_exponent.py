"""Episode growth ``t_k ~ k^m`` and the rate of the regret bound.

The bound decays like ``t^{-theta(m)}`` with ``theta`` largest at m = 3.
The empirical sweep at desk-scale budgets need not agree: short episodes
react faster, and the asymptotic rate says nothing about constants.
"""

import warnings

from activemdp import regret_exponent
from activemdp.simlab import preset_config, run_experiment

warnings.simplefilter("ignore")

for m in range(1, 7):
    print(f"m={m}: bound exponent {regret_exponent(m):.4f}")

res = run_experiment(preset_config("schedule-sweep", seed=0, runs=10))
print(f"{'algo':<11} {'n':>5} {'median regret':>14}")
for c in res.summary["cells"]:
    print(f"{c['algo']:<11} {c['n']:>5} {c['median_regret']:>14.3f}")
