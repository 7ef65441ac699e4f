"""MDP and Markov-chain data model.

An :class:`MdpModel` holds a known transition kernel ``p[s, a, s']`` together
with per-state observation means and variances. Fixing a stationary policy
turns it into a Markov chain whose stationary distribution and mixing
quantities are summarized by :class:`ChainAnalysis`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidModel, NotIrreducible
from .spectral import is_reversible, slem_of, slem_reversible

__all__ = [
    "MdpModel",
    "StationaryPolicy",
    "ChainAnalysis",
    "ErgodicReport",
    "chain_from_policy",
    "chain_from_kernel",
    "stationary_distribution",
    "check_ergodic_assumption",
    "uniform_policy",
    "three_state_mdp",
    "load_mdp",
    "save_mdp",
    "mdp_to_dict",
    "mdp_from_dict",
]

ROW_TOL = 1e-12
_DENSE_MAX_DIM = 64


def _frozen(x):
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite MDP with known dynamics and per-state observation moments.

    Parameters
    ----------
    p : (S, A, S) array_like
        Transition kernel, ``p[s, a, s']``.
    sigma2 : (S,) array_like
        Observation variances.
    mu : (S,) array_like, optional
        Observation means. Defaults to zeros.
    R : float
        Support bound of bounded observations, or scale parameter of the
        confidence width in Gaussian mode.
    obs_mode : {"gaussian", "bounded"}
    seed : int, optional
        Generator seed, carried only as metadata.
    """

    p: np.ndarray
    sigma2: np.ndarray
    mu: np.ndarray | None = None
    R: float = 1.0
    obs_mode: str = "gaussian"
    seed: int | None = None
    Q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = _frozen(self.p)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise InvalidModel(f"p must have shape (S, A, S), got {p.shape}")
        S = p.shape[0]
        if not np.all(np.isfinite(p)) or np.any(p < 0.0):
            raise InvalidModel("transition probabilities must be finite and nonnegative")
        rows = p.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > ROW_TOL:
            raise InvalidModel(f"rows of p must sum to 1 (max deviation {np.max(np.abs(rows - 1.0)):.3g})")
        sigma2 = _frozen(self.sigma2)
        mu = _frozen(np.zeros(S) if self.mu is None else self.mu)
        if sigma2.shape != (S,) or mu.shape != (S,):
            raise InvalidModel("sigma2 and mu must have shape (S,)")
        if np.any(sigma2 < 0.0) or not np.all(np.isfinite(sigma2)):
            raise InvalidModel("variances must be finite and nonnegative")
        if not (self.R > 0.0):
            raise InvalidModel("R must be positive")
        if self.obs_mode not in ("gaussian", "bounded"):
            raise InvalidModel(f"unknown obs_mode {self.obs_mode!r}")
        if np.any(sigma2 > self.R**2 / 4.0 + 1e-12):
            if self.obs_mode == "bounded":
                raise InvalidModel("bounded observations in [0, R] need sigma2 <= R^2/4")
            warnings.warn("sigma2 exceeds R^2/4; R acts as a scale parameter in gaussian mode", stacklevel=3)
        Q = p.max(axis=1) > 0.0
        Q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "Q", Q)

    @property
    def num_states(self) -> int:
        return self.p.shape[0]

    @property
    def num_actions(self) -> int:
        return self.p.shape[1]

    S = num_states
    A = num_actions

    @property
    def sigma_max2(self) -> float:
        return float(self.sigma2.max())

    def with_sigma2(self, sigma2) -> "MdpModel":
        return MdpModel(self.p, sigma2, self.mu, self.R, self.obs_mode, self.seed)


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Row-stochastic table ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        pr = _frozen(self.probs)
        if pr.ndim != 2:
            raise InvalidModel("policy table must be 2-d")
        if np.any(pr < 0.0) or np.max(np.abs(pr.sum(axis=1) - 1.0)) > ROW_TOL:
            raise InvalidModel("policy rows must be distributions")
        object.__setattr__(self, "probs", pr)

    def to_list(self):
        return self.probs.tolist()


@dataclass(frozen=True, eq=False)
class ChainAnalysis:
    """Kernel of the induced chain with its stationary and mixing summary."""

    P: np.ndarray
    eta: np.ndarray
    slem: float
    gap: float
    reversible: bool
    ergodic: bool
    irreducible: bool = True
    period: int = 1


@dataclass(frozen=True)
class ErgodicReport:
    passed: bool
    num_checked: int
    failures: tuple
    eta_min_proxy: float
    gap_min_proxy: float

    def as_dict(self):
        return {
            "passed": self.passed,
            "num_checked": self.num_checked,
            "failures": list(self.failures),
            "eta_min_proxy": self.eta_min_proxy,
            "gap_min_proxy": self.gap_min_proxy,
        }


def uniform_policy(mdp: MdpModel) -> StationaryPolicy:
    return StationaryPolicy(np.full((mdp.S, mdp.A), 1.0 / mdp.A))


def induced_kernel(mdp: MdpModel, probs) -> np.ndarray:
    """``P(s'|s) = sum_a p(s'|s,a) pi(a|s)``."""
    return np.einsum("sa,sat->st", np.asarray(probs, dtype=float), mdp.p)


def _period(adj, nodes):
    # gcd of level differences along edges inside the class
    idx = {v: i for i, v in enumerate(nodes)}
    level = {nodes[0]: 0}
    queue = [nodes[0]]
    g = 0
    for u in queue:
        for v in np.flatnonzero(adj[u]):
            if v not in idx:
                continue
            if v not in level:
                level[v] = level[u] + 1
                queue.append(v)
            else:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g) if g else 1


def stationary_distribution(P, tol=1e-13, max_iters=100000) -> np.ndarray:
    """Stationary distribution of ``P``.

    A dense least-squares solve of ``[(P^T - I); 1^T] eta = [0; 1]`` for small
    chains, power iteration on the lazy chain ``(I + P)/2`` above that size.
    """
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    if S <= _DENSE_MAX_DIM:
        M = np.vstack([P.T - np.eye(S), np.ones((1, S))])
        rhs = np.zeros(S + 1)
        rhs[-1] = 1.0
        eta, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    else:
        lazy = 0.5 * (np.eye(S) + P)
        eta = np.full(S, 1.0 / S)
        for _ in range(max_iters):
            nxt = eta @ lazy
            if np.abs(nxt - eta).sum() < tol:
                eta = nxt
                break
            eta = nxt
    eta = np.clip(eta, 0.0, None)
    return eta / eta.sum()


def chain_from_kernel(P, rev_tol=1e-8) -> ChainAnalysis:
    """Analyze a Markov kernel; see :func:`chain_from_policy`."""
    P = np.array(P, dtype=float)
    S = P.shape[0]
    adj = P > 0.0
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = labels != c
        if not np.any(adj[np.ix_(members, outside)]):
            closed.append(members)
    if len(closed) > 1:
        raise NotIrreducible(f"chain has {len(closed)} recurrent classes")
    irreducible = ncomp == 1
    period = _period(adj, list(closed[0]))
    eta = stationary_distribution(P)
    if irreducible:
        eta = np.maximum(eta, 0.0)
    else:
        transient = np.ones(S, dtype=bool)
        transient[closed[0]] = False
        eta[transient] = 0.0
        eta /= eta.sum()
    ergodic = irreducible and period == 1
    if irreducible:
        reversible = is_reversible(P, eta, rev_tol)
        slem = slem_reversible(P, eta) if reversible else slem_of(P, eta)
        slem = float(min(max(slem, 0.0), 1.0))
    else:
        reversible = False
        slem = 1.0
    P.setflags(write=False)
    eta.setflags(write=False)
    return ChainAnalysis(P, eta, slem, 1.0 - slem, reversible, ergodic, irreducible, period)


def chain_from_policy(mdp: MdpModel, pi) -> ChainAnalysis:
    """Markov chain induced by a stationary policy.

    Parameters
    ----------
    mdp : MdpModel
    pi : StationaryPolicy or (S, A) array_like

    Returns
    -------
    ChainAnalysis
        ``slem`` is the eigenvalue SLEM for reversible chains and the
        spectral-norm value otherwise. Irreducible periodic chains are
        returned with ``ergodic=False``.

    Raises
    ------
    NotIrreducible
        If the chain has more than one recurrent class.
    """
    probs = pi.probs if isinstance(pi, StationaryPolicy) else StationaryPolicy(pi).probs
    if probs.shape != (mdp.S, mdp.A):
        raise InvalidModel(f"policy shape {probs.shape} does not match MDP ({mdp.S}, {mdp.A})")
    return chain_from_kernel(induced_kernel(mdp, probs))


def check_ergodic_assumption(mdp: MdpModel, num_sampled_policies: int = 20, seed: int = 0) -> ErgodicReport:
    """Check ergodicity on the uniform policy and on random policies.

    Random policies alternate between Dirichlet(1) rows and sparser
    Dirichlet(0.2) rows so that near-deterministic behaviour is probed too.
    The smallest stationary mass and spectral gap seen serve as empirical
    proxies for the worst case over all policies.
    """
    rng = np.random.default_rng(seed)
    policies = [("uniform", uniform_policy(mdp).probs)]
    for i in range(num_sampled_policies):
        conc = 1.0 if i % 2 == 0 else 0.2
        probs = rng.dirichlet(np.full(mdp.A, conc), size=mdp.S)
        probs /= probs.sum(axis=1, keepdims=True)
        policies.append((f"random[{i}]", probs))
    failures = []
    eta_min = 1.0
    gap_min = 1.0
    for name, probs in policies:
        try:
            ch = chain_from_kernel(induced_kernel(mdp, probs))
        except NotIrreducible as e:
            failures.append(f"{name}: {e}")
            continue
        if not ch.irreducible:
            failures.append(f"{name}: reducible")
        elif not ch.ergodic:
            failures.append(f"{name}: periodic (period {ch.period})")
        eta_min = min(eta_min, float(ch.eta.min()))
        gap_min = min(gap_min, float(ch.gap))
    return ErgodicReport(not failures, len(policies), tuple(failures), eta_min, gap_min)


def three_state_mdp(sigma2_mid: float = 0.001, sigma2_side: float = 1.0) -> MdpModel:
    """Deterministic 3-state 2-action chain with a low-variance middle state.

    Action 0 moves left (or stays at the left end) and action 1 moves right
    (or stays at the right end), so the outer states have self-loops and the
    middle state is a bridge.
    """
    p = np.zeros((3, 2, 3))
    p[0, 0, 0] = 1.0
    p[0, 1, 1] = 1.0
    p[1, 0, 0] = 1.0
    p[1, 1, 2] = 1.0
    p[2, 0, 1] = 1.0
    p[2, 1, 2] = 1.0
    return MdpModel(p, [sigma2_side, sigma2_mid, sigma2_side], np.zeros(3), R=2.0 * np.sqrt(max(sigma2_side, sigma2_mid)), obs_mode="gaussian")


def mdp_to_dict(mdp: MdpModel) -> dict:
    out = {
        "S": mdp.S,
        "A": mdp.A,
        "p": mdp.p.tolist(),
        "sigma2": mdp.sigma2.tolist(),
        "mu": mdp.mu.tolist(),
        "R": mdp.R,
        "obs_mode": mdp.obs_mode,
    }
    if mdp.seed is not None:
        out["seed"] = int(mdp.seed)
    return out


def mdp_from_dict(d: dict) -> MdpModel:
    try:
        p = np.asarray(d["p"], dtype=float)
        S, A = int(d["S"]), int(d["A"])
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidModel(f"malformed MDP record: {e}") from None
    if p.shape != (S, A, S):
        raise InvalidModel(f"p has shape {p.shape}, expected {(S, A, S)}")
    # decimal serialization can leave ~1e-16 row drift
    p = p / p.sum(axis=2, keepdims=True)
    return MdpModel(p, d["sigma2"], d.get("mu"), float(d.get("R", 1.0)), d.get("obs_mode", "gaussian"), d.get("seed"))


def save_mdp(mdp: MdpModel, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=1))


def load_mdp(path) -> MdpModel:
    return mdp_from_dict(json.loads(Path(path).read_text()))
