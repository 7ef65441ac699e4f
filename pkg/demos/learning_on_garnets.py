"""FW-AME against the uniform policy on random Garnet MDPs.

Both learners see the same random streams. The competitive ratio
``n * LOSS / L* - 1`` of FW-AME shrinks with the budget while the uniform
policy stays at a fixed distance from the optimum.
"""

import warnings

import numpy as np

from activemdp import fw_ame_run, fw_solve, garnet_generate, uniform_baseline_run

warnings.simplefilter("ignore")

budgets = (250, 500, 1000, 2000)
ratios = {"fw-ame": {n: [] for n in budgets}, "uniform": {n: [] for n in budgets}}
for inst in range(8):
    g = garnet_generate(5, 3, 2, seed=inst)
    Ls = fw_solve(g).value
    for run in range(10):
        kw = dict(seed=0, instance=inst, run=run, snapshots=budgets, L_star=Ls)
        for name, tr in (("fw-ame", fw_ame_run(g, budgets[-1], **kw)), ("uniform", uniform_baseline_run(g, budgets[-1], **kw))):
            for n in budgets:
                loss = np.mean((tr.snapshots[n] - g.mu) ** 2)
                ratios[name][n].append(n * loss / Ls - 1.0)

print(f"{'n':>6} {'fw-ame':>8} {'uniform':>8}")
for n in budgets:
    print(f"{n:>6} {np.mean(ratios['fw-ame'][n]):>8.3f} {np.mean(ratios['uniform'][n]):>8.3f}")
