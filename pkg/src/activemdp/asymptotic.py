"""Asymptotic allocation objective and its Frank-Wolfe solver.

The objective over state-action distributions is

    L(lam) = (1/S) sum_s sigma2(s) / sum_a lam(s, a),

convex on the stationary polytope and smooth once every state marginal is
kept above ``2 * eta_floor``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import GapTooSmall, MaxItersWarning, NormAtOne, ZeroMarginal
from .mdp import MdpModel, StationaryPolicy, chain_from_policy, uniform_policy
from .polytope import LinearMinOracle, lambda_membership, lambda_to_policy, policy_to_lambda
from .simulate import simulate_kernel_batch
from .spectral import slem_of
from .stats import ell_n

__all__ = [
    "SolveResult",
    "RegularizedLoss",
    "loss_lambda",
    "loss_marginals",
    "grad_loss",
    "smoothness_bound",
    "fw_solve",
    "loss_regularized",
    "finite_loss_mc",
]


def _marginals(lam):
    lam = getattr(lam, "lam", lam)
    return np.asarray(lam, dtype=float).sum(axis=1)


def loss_marginals(sigma2, marg) -> float:
    marg = np.asarray(marg, dtype=float)
    if np.any(marg <= 0.0):
        raise ZeroMarginal(f"state marginals must be positive (min {marg.min():.3g})")
    return float(np.mean(np.asarray(sigma2) / marg))


def loss_lambda(mdp: MdpModel, lam) -> float:
    """``(1/S) sum_s sigma2(s) / marginal(s)``; raises ZeroMarginal on empty states."""
    return loss_marginals(mdp.sigma2, _marginals(lam))


def grad_loss(mdp: MdpModel, lam) -> np.ndarray:
    """Gradient ``-(1/S) sigma2(s) / marginal(s)^2``, repeated over actions."""
    marg = _marginals(lam)
    if np.any(marg <= 0.0):
        raise ZeroMarginal(f"state marginals must be positive (min {marg.min():.3g})")
    g = -mdp.sigma2 / (mdp.S * marg**2)
    return np.repeat(g[:, None], mdp.A, axis=1)


def smoothness_bound(mdp: MdpModel, eta_floor) -> float:
    """Curvature bound ``A sum_s sigma2(s) / (S (2 eta_floor)^3)`` on the restricted set."""
    if not eta_floor > 0:
        raise ValueError("eta_floor must be positive")
    return mdp.A * float(mdp.sigma2.sum()) / (mdp.S * (2.0 * eta_floor) ** 3)


@dataclass
class SolveResult:
    lam_star: np.ndarray
    value: float
    fw_gap: float
    iterations: int
    policy: StationaryPolicy
    converged: bool = True
    eta_floor: float = 0.0

    @property
    def eta_star(self) -> np.ndarray:
        return self.lam_star.sum(axis=1)

    def to_dict(self):
        return {
            "lam": self.lam_star.tolist(),
            "eta": self.eta_star.tolist(),
            "value": self.value,
            "fw_gap": self.fw_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "eta_floor": self.eta_floor,
            "policy": self.policy.probs.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


def _line_search(sigma2, m, dm, gmax):
    # minimize sum sigma2 / (m + g dm) over [0, gmax]; convex in g
    def dphi(g):
        return -np.sum(sigma2 * dm / (m + g * dm) ** 2)

    if dphi(0.0) >= 0.0:
        return 0.0
    neg = dm < 0.0
    hi = gmax
    if np.any(neg):
        hi = min(hi, float(np.min(-m[neg] / dm[neg])) * (1.0 - 1e-12))
    if dphi(hi) <= 0.0:
        return hi
    return brentq(dphi, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def _corrective_weights(sigma2, Mcols, w0):
    # re-optimize convex weights over the active vertices
    def f(w):
        m = Mcols @ w
        if np.any(m <= 0.0):
            return 1e300, np.zeros_like(w)
        return float(np.sum(sigma2 / m)), -Mcols.T @ (sigma2 / m**2)

    if Mcols.shape[1] == 1:
        return np.ones(1)
    res = minimize(
        f,
        w0,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * Mcols.shape[1],
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones_like(w)}],
        options={"ftol": 1e-16, "maxiter": 500},
    )
    w = np.maximum(res.x, 0.0)
    w /= w.sum()
    return w if f(w)[0] <= f(w0)[0] else w0


def fw_solve(mdp: MdpModel, eta_floor=0.001, tol=1e-6, max_iters=10000, step="corrective", lam0=None, stall=25) -> SolveResult:
    """Minimize the asymptotic loss over the floor-restricted polytope.

    Parameters
    ----------
    mdp : MdpModel
    eta_floor : float
        Marginals are constrained to be ``>= 2 * eta_floor``.
    tol : float
        Stop once the Frank-Wolfe gap ``<grad, lam - psi>`` is below ``tol``.
        The gap upper-bounds ``L(lam) - L*``.
    max_iters : int
    step : {"corrective", "away", "line_search", "fixed"}
        ``"fixed"`` uses ``2 / (k + 2)``; ``"line_search"`` is vanilla
        Frank-Wolfe with exact line search; ``"away"`` adds away steps over
        the active vertex set; ``"corrective"`` re-optimizes the weights of
        all active vertices after each oracle call (fully corrective
        Frank-Wolfe), which needs the fewest oracle calls on ill-conditioned
        instances.
    lam0 : (S, A) array_like, optional
        Starting point. Defaults to the stationary state-action distribution
        of the uniform policy when it meets the floor, else the oracle
        vertex for the gradient at ``1/SA``.
    stall : int
        Stop early when the objective has not decreased for this many
        consecutive iterations (the gap has hit floating-point noise).

    Returns
    -------
    SolveResult
        The best iterate. ``converged`` is False (and a MaxItersWarning is
        emitted) when ``max_iters`` is hit first.
    """
    S, A = mdp.S, mdp.A
    oracle = LinearMinOracle(mdp, eta_floor)
    sig = mdp.sigma2 / S
    if lam0 is None:
        x = policy_to_lambda(mdp, uniform_policy(mdp)).lam.copy()
        if not lambda_membership(mdp, x, eta_floor).in_lambda_floor:
            x = oracle(grad_loss(mdp, np.full((S, A), 1.0 / (S * A)))).lam
    else:
        x = np.array(lam0, dtype=float)
    x = x.ravel()
    atoms = [x.copy()]
    weights = [1.0]
    gap = np.inf
    best_val, best_x, best_gap = np.inf, x, np.inf
    since = 0
    k = 0
    for k in range(max_iters + 1):
        xt = x.reshape(S, A)
        g = grad_loss(mdp, xt).ravel()
        res = oracle(g.reshape(S, A))
        v = res.lam.ravel()
        gap = float(g @ (x - v))
        val = loss_lambda(mdp, xt)
        improved = not np.isfinite(best_val) or val < best_val - 1e-15 * abs(best_val)
        since = 0 if improved else since + 1
        if val <= best_val:
            best_val, best_x, best_gap = val, x.copy(), gap
        if gap <= tol or k == max_iters or since >= stall:
            break
        m = xt.sum(axis=1)
        if step == "fixed":
            gam = 2.0 / (k + 2.0)
            d = v - x
            x = x + gam * d
            continue
        if step == "line_search":
            d = v - x
            gam = _line_search(sig, m, d.reshape(S, A).sum(axis=1), 1.0)
            x = x + gam * d
            continue
        if step == "corrective":
            if not any(np.allclose(a, v, rtol=0.0, atol=1e-13) for a in atoms):
                atoms.append(v.copy())
                weights.append(0.0)
            Mcols = np.stack([a.reshape(S, A).sum(axis=1) for a in atoms], axis=1)
            w = np.asarray(weights, dtype=float)
            # one FW line-search step gives the inner solve a good start
            dm = Mcols[:, -1] - m
            gam = _line_search(sig, m, dm, 1.0) if not np.allclose(dm, 0.0) else 0.0
            w = (1.0 - gam) * w
            w[-1] += gam
            w = _corrective_weights(sig, Mcols, w)
            keep = w > 1e-13
            atoms = [a for a, kk in zip(atoms, keep) if kk]
            w = w[keep] / w[keep].sum()
            weights = list(w)
            x = np.sum([wi * a for wi, a in zip(weights, atoms)], axis=0)
            continue
        # away-step Frank-Wolfe
        vals = [float(g @ a) for a in atoms]
        ia = int(np.argmax(vals))
        away_gap = vals[ia] - float(g @ x)
        if gap >= away_gap or len(atoms) == 1:
            d = v - x
            gmax = 1.0
            fw_step = True
        else:
            d = x - atoms[ia]
            wa = weights[ia]
            gmax = wa / (1.0 - wa) if wa < 1.0 else np.inf
            fw_step = False
        gam = _line_search(sig, m, d.reshape(S, A).sum(axis=1), gmax)
        if gam <= 0.0:
            break
        x = x + gam * d
        if fw_step:
            weights = [w * (1.0 - gam) for w in weights]
            for i, a in enumerate(atoms):
                if np.array_equal(a, v):
                    weights[i] += gam
                    break
            else:
                atoms.append(v.copy())
                weights.append(gam)
        else:
            weights = [w * (1.0 + gam) for w in weights]
            weights[ia] -= gam
        keep = [i for i, w in enumerate(weights) if w > 1e-14]
        atoms = [atoms[i] for i in keep]
        weights = [weights[i] for i in keep]
        tot = sum(weights)
        weights = [w / tot for w in weights]
    if best_val < loss_lambda(mdp, x.reshape(S, A)):
        x, gap = best_x, best_gap
    converged = gap <= tol
    if not converged:
        warnings.warn(f"fw_solve stopped after {k} iterations with gap {gap:.3g}", MaxItersWarning, stacklevel=2)
    lam = np.maximum(x.reshape(S, A), 0.0)
    lam /= lam.sum()
    return SolveResult(lam, loss_lambda(mdp, lam), max(gap, 0.0), k, lambda_to_policy(lam, repair=True), converged, eta_floor)


@dataclass
class RegularizedLoss:
    base: float
    ell: float
    full: float
    proxy: float
    norm: float
    norm_at_one: bool


def loss_regularized(mdp: MdpModel, pi, n, rho=None, eta_min=None, strict=False) -> RegularizedLoss:
    """Asymptotic loss with its finite-budget correction and the mixing proxy.

    ``full = L + ell_n(pi)``; ``proxy = L + rho / (1 - ||D^1/2 P D^-1/2 -
    sqrt(eta) sqrt(eta)^T||)`` with ``rho = S / n`` by default. A norm at or
    above one gives an infinite proxy (or NormAtOne when ``strict``).
    """
    ch = chain_from_policy(mdp, pi)
    base = loss_marginals(mdp.sigma2, ch.eta)
    norm = slem_of(ch.P, ch.eta)
    rho = mdp.S / n if rho is None else rho
    at_one = norm >= 1.0 - 1e-12
    if at_one and strict:
        raise NormAtOne(f"spectral norm {norm:.6g} >= 1")
    proxy = math.inf if at_one else base + rho / (1.0 - norm)
    try:
        ell = ell_n(mdp, pi, n, eta_min)
    except GapTooSmall:
        ell = math.inf
    return RegularizedLoss(base, ell, base + ell, proxy, norm, at_one)


def finite_loss_mc(mdp: MdpModel, pi, n, runs=100, seed=0, instance=0):
    """Monte-Carlo estimate of ``(1/S) sum_s sigma2(s) E[n / T_n(s)]``.

    Counters follow the convention that every state holds one sample at
    ``t = 1``, so ``T_n(s) = 1 + #{2 <= t <= n : s_t = s}``.

    Returns
    -------
    estimate : float
    stderr : float
    """
    probs = pi.probs if isinstance(pi, StationaryPolicy) else np.asarray(pi, dtype=float)
    P = np.einsum("sa,sat->st", probs, mdp.p)
    batch = simulate_kernel_batch(mdp, P, n, seed, instance, range(runs))
    T = batch.counts.copy()
    T[np.arange(runs), batch.first_state] -= 1
    T += 1
    per_run = (mdp.sigma2[None, :] * n / T).mean(axis=1)
    se = float(per_run.std(ddof=1) / math.sqrt(runs)) if runs > 1 else math.nan
    return float(per_run.mean()), se
