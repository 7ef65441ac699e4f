"""State-action stationary distributions and the linear minimization oracle.

A point ``lam[s, a]`` of the polytope is a distribution over state-action
pairs satisfying flow balance

    sum_b lam(s, b) = sum_{s', a} p(s | s', a) lam(s', a)    for every s.

The floor-restricted polytope additionally requires every state marginal to
be at least ``2 * eta_floor``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel, ZeroMarginal
from .mdp import MdpModel, StationaryPolicy, chain_from_policy
from .simplex import SimplexLP, vertex_enumeration_min

__all__ = [
    "StateActionDist",
    "MembershipReport",
    "OracleResult",
    "LinearMinOracle",
    "flow_matrix",
    "lambda_membership",
    "lambda_to_policy",
    "policy_to_lambda",
    "linear_min_oracle",
    "vertex_min",
    "max_feasible_eta_floor",
    "uniform_lambda",
]

FLOW_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class StateActionDist:
    """Distribution ``lam[s, a]`` over state-action pairs."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 2:
            raise InvalidModel("lam must be a 2-d table")
        if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-10:
            raise InvalidModel("lam must be a distribution over state-action pairs")
        lam = np.maximum(lam, 0.0)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def marginals(self) -> np.ndarray:
        return self.lam.sum(axis=1)

    def to_json(self, **meta) -> str:
        return json.dumps({"lam": self.lam.tolist(), **meta})


def _as_table(lam):
    return lam.lam if isinstance(lam, StateActionDist) else np.asarray(lam, dtype=float)


def uniform_lambda(mdp: MdpModel) -> np.ndarray:
    return np.full((mdp.S, mdp.A), 1.0 / (mdp.S * mdp.A))


def flow_matrix(mdp: MdpModel) -> np.ndarray:
    """``F`` with ``(F lam)(s) = marginal(s) - inflow(s)`` for flattened ``lam``."""
    S, A = mdp.S, mdp.A
    out = np.kron(np.eye(S), np.ones((1, A)))
    return out - mdp.p.reshape(S * A, S).T


@dataclass(frozen=True)
class MembershipReport:
    flow_residual: float
    min_marginal: float
    sum_error: float
    min_entry: float
    in_lambda: bool
    in_lambda_floor: bool


def lambda_membership(mdp: MdpModel, lam, eta_floor=0.0, tol=FLOW_TOL) -> MembershipReport:
    """Flow-balance residual and floor check for a state-action table."""
    lam = _as_table(lam)
    res = float(np.max(np.abs(flow_matrix(mdp) @ lam.ravel())))
    marg = lam.sum(axis=1)
    sum_err = abs(float(lam.sum()) - 1.0)
    ok = res <= tol and sum_err <= max(tol, 1e-10) and lam.min() >= -tol
    return MembershipReport(
        res,
        float(marg.min()),
        sum_err,
        float(lam.min()),
        bool(ok),
        bool(ok and marg.min() >= 2.0 * eta_floor - tol),
    )


def lambda_to_policy(lam, repair=False) -> StationaryPolicy:
    """``pi(a|s) = lam(s, a) / sum_b lam(s, b)``.

    With ``repair=True`` states with zero marginal get the uniform action
    distribution instead of raising :class:`ZeroMarginal`.
    """
    lam = _as_table(lam)
    marg = lam.sum(axis=1)
    zero = marg <= 0.0
    if np.any(zero) and not repair:
        raise ZeroMarginal(f"states {np.flatnonzero(zero).tolist()} have zero marginal")
    probs = np.where(zero[:, None], 1.0 / lam.shape[1], lam / np.where(zero, 1.0, marg)[:, None])
    probs = np.maximum(probs, 0.0)
    probs /= probs.sum(axis=1, keepdims=True)
    return StationaryPolicy(probs)


def policy_to_lambda(mdp: MdpModel, pi) -> StateActionDist:
    """``lam(s, a) = eta_pi(s) pi(a|s)``."""
    ch = chain_from_policy(mdp, pi)
    probs = pi.probs if isinstance(pi, StationaryPolicy) else np.asarray(pi, dtype=float)
    lam = ch.eta[:, None] * probs
    return StateActionDist(lam / lam.sum())


def _standard_form(mdp: MdpModel, eta_floor):
    # variables: lam (S*A, s-major) then one surplus per state when eta_floor > 0
    S, A = mdp.S, mdp.A
    F = flow_matrix(mdp)
    ones = np.ones((1, S * A))
    if eta_floor <= 0.0:
        return np.vstack([F, ones]), np.r_[np.zeros(S), 1.0]
    M = np.kron(np.eye(S), np.ones((1, A)))
    top = np.hstack([np.vstack([F, ones]), np.zeros((S + 1, S))])
    floor = np.hstack([M, -np.eye(S)])
    b = np.r_[np.zeros(S), 1.0, np.full(S, 2.0 * eta_floor)]
    return np.vstack([top, floor]), b


@dataclass
class OracleResult:
    lam: np.ndarray
    value: float
    duality_gap: float
    dual_infeasibility: float
    iterations: int

    @property
    def certified(self) -> bool:
        return self.duality_gap <= 1e-9 and self.dual_infeasibility <= 1e-9


class LinearMinOracle:
    """Repeated linear minimization over the floor-restricted polytope.

    Phase I runs once in the constructor; each call warm-starts from the
    previous optimal vertex basis.
    """

    def __init__(self, mdp: MdpModel, eta_floor=0.0):
        self.mdp = mdp
        self.eta_floor = float(eta_floor)
        A, b = _standard_form(mdp, self.eta_floor)
        self._lp = SimplexLP(A, b)
        self._nlam = mdp.S * mdp.A

    def __call__(self, cost) -> OracleResult:
        cost = np.asarray(cost, dtype=float).ravel()
        c = np.zeros(self._lp.n)
        c[: self._nlam] = cost
        sol = self._lp.minimize(c)
        lam = sol.x[: self._nlam].reshape(self.mdp.S, self.mdp.A)
        lam = lam / lam.sum()
        return OracleResult(lam, float(cost @ lam.ravel()), sol.duality_gap, sol.dual_infeasibility, sol.iterations)


def linear_min_oracle(mdp: MdpModel, cost, eta_floor=0.0) -> StateActionDist:
    """Exact minimizer of ``<cost, lam>`` over the floor-restricted polytope.

    Parameters
    ----------
    mdp : MdpModel
    cost : (S, A) array_like
    eta_floor : float
        State marginals are constrained to be ``>= 2 * eta_floor``.

    Returns
    -------
    StateActionDist
        A vertex of the polytope.

    Raises
    ------
    Infeasible
        If no state-action stationary distribution meets the floor.
    """
    return StateActionDist(LinearMinOracle(mdp, eta_floor)(cost).lam)


def vertex_min(mdp: MdpModel, cost, eta_floor=0.0):
    """Reference minimum of ``<cost, lam>`` by enumerating polytope vertices.

    Builds the constraints independently of the simplex path. Only for
    ``S * A`` around a dozen or less.
    """
    S, A = mdp.S, mdp.A
    nl = S * A
    rows, rhs = [], []
    for s in range(S):
        r = np.zeros(nl + (S if eta_floor > 0 else 0))
        for sp in range(S):
            for a in range(A):
                r[sp * A + a] -= mdp.p[sp, a, s]
        for a in range(A):
            r[s * A + a] += 1.0
        rows.append(r)
        rhs.append(0.0)
    r = np.zeros_like(rows[0])
    r[:nl] = 1.0
    rows.append(r)
    rhs.append(1.0)
    if eta_floor > 0:
        for s in range(S):
            r = np.zeros(nl + S)
            r[s * A : (s + 1) * A] = 1.0
            r[nl + s] = -1.0
            rows.append(r)
            rhs.append(2.0 * eta_floor)
    c = np.zeros(len(rows[0]))
    c[:nl] = np.asarray(cost, dtype=float).ravel()
    val, x = vertex_enumeration_min(c, np.array(rows), np.array(rhs))
    return val, x[:nl].reshape(S, A)


def max_feasible_eta_floor(mdp: MdpModel) -> float:
    """Largest ``eta_floor`` for which the restricted polytope is nonempty.

    Half the maximal achievable minimum state marginal, from one LP in
    ``(lam, h)``: maximize ``h`` subject to flow balance and
    ``marginal(s) >= h``.
    """
    S, A = mdp.S, mdp.A
    nl = S * A
    F = flow_matrix(mdp)
    M = np.kron(np.eye(S), np.ones((1, A)))
    # columns: lam, h, surplus
    top = np.hstack([F, np.zeros((S, 1 + S))])
    tot = np.r_[np.ones(nl), 0.0, np.zeros(S)][None, :]
    floor = np.hstack([M, -np.ones((S, 1)), -np.eye(S)])
    Aeq = np.vstack([top, tot, floor])
    b = np.r_[np.zeros(S), 1.0, np.zeros(S)]
    c = np.zeros(nl + 1 + S)
    c[nl] = -1.0
    sol = SimplexLP(Aeq, b).minimize(c)
    return 0.5 * float(sol.x[nl])
