"""Random Garnet MDPs and their reversible variant."""

import warnings

import numpy as np

from .errors import InvalidBranching, NotIrreducible, ReversibilityNotAchieved
from .mdp import MdpModel, chain_from_policy, uniform_policy
from .spectral import is_reversible

__all__ = ["garnet_generate", "SELF_LOOP"]

SELF_LOOP = 0.001


def _variances(rng, S, lo, hi):
    sigma2 = rng.uniform(lo, hi, size=S)
    if S == 1:
        sigma2[0] = hi
    else:
        i, j = rng.choice(S, size=2, replace=False)
        sigma2[i] = lo
        sigma2[j] = hi
    return sigma2


def _standard_kernel(rng, S, A, b):
    p = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            succ = rng.choice(S, size=b, replace=False)
            p[s, a, succ] = rng.uniform(size=b)
            p[s, a, s] += SELF_LOOP
    return p / p.sum(axis=2, keepdims=True)


def _reversible_kernel(rng, S, A, b):
    # symmetric weights per action; the diagonal absorbs the remaining mass,
    # so every action kernel is symmetric and doubly stochastic
    W = np.zeros((A, S, S))
    for a in range(A):
        for s in range(S):
            succ = rng.choice(S, size=b - 1, replace=False)
            W[a, s, succ] = rng.uniform(size=b - 1)
        W[a] = 0.5 * (W[a] + W[a].T)
        np.fill_diagonal(W[a], 0.0)
    support = np.any(W > 0.0, axis=0)
    a_star = rng.integers(A)
    q = rng.uniform()
    W[a_star] = np.where(support, q, 0.0)
    cap = 1.0 - SELF_LOOP
    for a in range(A):
        rmax = W[a].sum(axis=1).max()
        if rmax > cap:
            W[a] *= cap / rmax
    p = np.empty((S, A, S))
    for a in range(A):
        K = W[a].copy()
        K[np.diag_indices(S)] = 1.0 - K.sum(axis=1)
        p[:, a, :] = K
    return p


def garnet_generate(S, A, b, sigma_min2=0.01, sigma_max2=10.0, reversible=False, seed=0, max_redraws=10):
    """Draw a Garnet instance G(S, A, b, sigma_min2, sigma_max2).

    Parameters
    ----------
    S, A : int
        Number of states and actions.
    b : int
        Branching factor, the number of random successors of each
        state-action pair (``b - 1`` in reversible mode).
    sigma_min2, sigma_max2 : float
        Range of the state variances. One random state is pinned to each
        endpoint.
    reversible : bool
        Build symmetric per-action kernels, one of which puts a common
        weight ``q`` on every edge of the support graph.
    seed : int
    max_redraws : int
        Redraws allowed when the uniform-policy chain is reducible or, in
        reversible mode, fails the detailed-balance check.

    Returns
    -------
    MdpModel
        Gaussian observation model with zero means and ``R = 2 sigma_max``.
    """
    if not (1 <= b <= S):
        raise InvalidBranching(f"branching factor must satisfy 1 <= b <= S, got b={b}, S={S}")
    if reversible and b < 2 and S > 1:
        raise InvalidBranching("reversible Garnets need b >= 2 (b - 1 successors per pair)")
    if sigma_min2 > sigma_max2 or sigma_min2 < 0:
        raise ValueError("need 0 <= sigma_min2 <= sigma_max2")
    rng = np.random.default_rng(seed)
    R = 2.0 * np.sqrt(sigma_max2) if sigma_max2 > 0 else 1.0
    if not reversible:
        # a state nobody points to is transient under every policy; redraw
        for _ in range(max_redraws + 1):
            p = _standard_kernel(rng, S, A, b)
            sigma2 = _variances(rng, S, sigma_min2, sigma_max2)
            mdp = MdpModel(p, sigma2, np.zeros(S), R, "gaussian", seed)
            try:
                if chain_from_policy(mdp, uniform_policy(mdp)).irreducible:
                    return mdp
            except NotIrreducible:
                pass
        warnings.warn(f"uniform-policy chain still reducible after {max_redraws} redraws (seed {seed})", stacklevel=2)
        return mdp
    for _ in range(max_redraws + 1):
        p = _reversible_kernel(rng, S, A, b)
        sigma2 = _variances(rng, S, sigma_min2, sigma_max2)
        mdp = MdpModel(p, sigma2, np.zeros(S), R, "gaussian", seed)
        try:
            ch = chain_from_policy(mdp, uniform_policy(mdp))
        except NotIrreducible:
            continue
        if ch.irreducible and is_reversible(ch.P, ch.eta, 1e-10):
            return mdp
    raise ReversibilityNotAchieved(f"no reversible irreducible instance after {max_redraws} redraws (seed {seed})")
