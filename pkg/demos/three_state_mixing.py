"""Optimal allocation on the three-state chain and why mixing matters.

The asymptotically optimal policy nearly ignores the low-variance middle
state, so it crosses between the two ends rarely and mixes slowly. The
faster-mixing surrogate trades a little asymptotic loss for a chain that
reaches its stationary law sooner, which pays off at small budgets.
"""

import warnings

import numpy as np

from activemdp import chain_from_policy, fmh_run, fw_solve, three_state_mdp
from activemdp.asymptotic import finite_loss_mc

warnings.simplefilter("ignore")

mdp = three_state_mdp(0.001)
sol = fw_solve(mdp)
ch = chain_from_policy(mdp, sol.policy)
print("eta* =", np.round(sol.eta_star, 4), " L* =", round(sol.value, 4), " SLEM =", round(ch.slem, 4))

print(f"{'n':>6} {'n*LOSS lambda*':>15} {'n*LOSS fmh':>11} {'SLEM fmh':>9}")
for n in (100, 300, 1000, 3000):
    fast = fmh_run(mdp, sol.policy, n)
    # Monte-Carlo value of (1/S) sum_s sigma2(s) E[n / T_n(s)]
    a, _ = finite_loss_mc(mdp, sol.policy, n, runs=200, seed=1)
    b, _ = finite_loss_mc(mdp, fast.policy, n, runs=200, seed=1)
    slem = chain_from_policy(mdp, fast.policy).slem
    print(f"{n:>6} {a:>15.3f} {b:>11.3f} {slem:>9.3f}")
