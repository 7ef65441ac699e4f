"""Faster-mixing heuristic.

Step 1 searches over symmetric joint-flow matrices ``X = D_eta P`` (so the
chain is reversible by construction) for one that trades the asymptotic loss
against a spectral-norm mixing penalty, while keeping the row sums ``eta_X``
close to the asymptotically optimal ``eta*``. Step 2 projects the resulting
``eta_X`` back onto distributions reachable by a stationary policy of the
MDP.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariances, Infeasible, InvalidModel, MaxItersWarning, NormAtOne
from .mdp import MdpModel, StationaryPolicy, chain_from_policy
from .spectral import slem_of

__all__ = [
    "SymmetricFlow",
    "FmhResult",
    "flow_support",
    "project_rowsums",
    "project_flow",
    "flow_objective",
    "p1_solve",
    "p2_project",
    "fmh_run",
    "delta_schedule",
    "project_simplex_rows",
]


@dataclass
class SymmetricFlow:
    """Joint-flow matrix with solver diagnostics."""

    X: np.ndarray
    objective: float
    norm: float
    iterations: int
    converged: bool
    residuals: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    @property
    def eta(self) -> np.ndarray:
        return self.X.sum(axis=1)


@dataclass
class FmhResult:
    policy: StationaryPolicy
    eta1: np.ndarray
    flow: SymmetricFlow
    p2_residual: float
    slem_before: float | None
    slem_after: float
    params: dict

    def diagnostics(self) -> dict:
        return {
            "slem_before": self.slem_before,
            "slem_after": self.slem_after,
            "p2_residual": self.p2_residual,
            "p1_objective": self.flow.objective,
            "p1_norm": self.flow.norm,
            "p1_iterations": self.flow.iterations,
            "p1_converged": self.flow.converged,
            "constraint_residuals": self.flow.residuals,
            "eta1": self.eta1.tolist(),
            **{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()},
        }


def flow_support(mdp: MdpModel) -> np.ndarray:
    """Entries where a symmetric flow may be positive: ``Q and Q^T``."""
    return mdp.Q & mdp.Q.T


# -- projections -------------------------------------------------------------


def project_simplex_rows(V) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    idx = np.arange(1, n + 1)
    cond = U - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1.0)
    return np.maximum(V - theta[:, None], 0.0)


def _capped_simplex(r, lo, hi, w=None):
    # argmin sum (x - r)^2 / w s.t. sum x = 1, lo <= x <= hi (w = 1 by default);
    # the excess sum clip(r - theta w, lo, hi) - 1 is piecewise linear and
    # nonincreasing in theta, so locate its root among the 2S breakpoints
    if lo.sum() > 1.0 + 1e-12 or hi.sum() < 1.0 - 1e-12:
        raise Infeasible("row-sum box does not meet the simplex")
    w = np.ones_like(r) if w is None else w
    bp = np.sort(np.concatenate([(r - hi) / w, (r - lo) / w]))
    ex = np.clip(r[None, :] - bp[:, None] * w[None, :], lo, hi).sum(axis=1) - 1.0
    j = int(np.searchsorted(-ex, 0.0))
    if j == 0:
        theta = bp[0]
    elif j == bp.size:
        theta = bp[-1]
    else:
        e0, e1 = ex[j - 1], ex[j]
        theta = bp[j - 1] if e0 == e1 else bp[j - 1] + (bp[j] - bp[j - 1]) * e0 / (e0 - e1)
    return np.clip(r - theta * w, lo, hi)


def _ball_plane(r, center, radius):
    # projection onto {sum x = 1} cap ball(center, radius); center lies on the plane
    x = r - (r.sum() - 1.0) / r.size
    d = x - center
    nd = np.linalg.norm(d)
    if nd > radius:
        x = center + d * (radius / nd)
    return x


def project_rowsums(r, eta_star, eta_floor, delta, geometry="ball", iters=2000, tol=1e-14):
    """Project a row-sum vector onto the admissible stationary distributions.

    ``{x : sum x = 1, x >= eta_floor}`` intersected with either the ball
    ``||x - eta*|| <= delta`` or the box ``|x - eta*| <= delta`` (per state).
    """
    r = np.asarray(r, dtype=float)
    eta_star = np.asarray(eta_star, dtype=float)
    if geometry == "box":
        delta = np.broadcast_to(np.asarray(delta, dtype=float), r.shape)
        lo = np.maximum(eta_floor, eta_star - delta)
        hi = eta_star + delta
        if np.any(lo > hi + 1e-15):
            raise Infeasible("eta_floor exceeds eta* + delta for some state")
        return _capped_simplex(r, lo, np.maximum(hi, lo))
    if geometry != "ball":
        raise ValueError(f"unknown geometry {geometry!r}")
    delta = float(delta)
    y = _ball_plane(r, eta_star, delta)
    if y.min() >= eta_floor:
        return y
    # Dykstra between (plane cap ball) and the floor half-spaces
    x = r.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iters):
        y = _ball_plane(x + p, eta_star, delta)
        p = x + p - y
        x_new = np.maximum(y + q, eta_floor)
        q = y + q - x_new
        if np.max(np.abs(x_new - x)) < tol and np.max(np.abs(x_new - y)) < tol:
            x = x_new
            break
        x = x_new
    return x


def _symmetrize_support(X, support):
    return np.where(support, 0.5 * (X + X.T), 0.0)


def _rowsum_projector(eta_star, eta_floor, delta, geometry):
    # returns r -> projection of the row-sum vector, with box bounds precomputed
    eta_star = np.asarray(eta_star, dtype=float)
    if geometry == "box":
        lo, hi = _box_bounds(eta_star, eta_floor, delta)
        return lambda r: _capped_simplex(r, lo, hi)
    if geometry != "ball":
        raise ValueError(f"unknown geometry {geometry!r}")
    return lambda r: project_rowsums(r, eta_star, eta_floor, delta, "ball")


def project_flow(X, support, eta_star, eta_floor, delta, geometry="ball", iters=5000, tol=1e-11):
    """Dykstra projection onto the feasible symmetric flows.

    Alternates between (i) nonnegative symmetric matrices supported on
    ``support`` (projected exactly pair by pair) and (ii) matrices whose row
    sums are an admissible stationary distribution (see
    :func:`project_rowsums`). The total mass ``sum X = 1`` follows from (ii).
    """
    X = np.asarray(X, dtype=float)
    S = X.shape[0]
    proj_r = _rowsum_projector(eta_star, eta_floor, delta, geometry)
    p = np.zeros_like(X)
    q = np.zeros_like(X)
    Y = X
    for _ in range(iters):
        Z = Y + p
        X1 = np.maximum(np.where(support, 0.5 * (Z + Z.T), 0.0), 0.0)
        p = Z - X1
        Z = X1 + q
        r = Z.sum(axis=1)
        X2 = Z + ((proj_r(r) - r) / S)[:, None]
        q = Z - X2
        done = np.max(np.abs(X2 - Y)) < tol and np.max(np.abs(X2 - X1)) < tol
        Y = X2
        if done:
            break
    return np.maximum(_symmetrize_support(Y, support), 0.0)


def _box_bounds(eta_star, eta_floor, delta):
    d = np.broadcast_to(np.asarray(delta, dtype=float), eta_star.shape)
    lo = np.maximum(eta_floor, eta_star - d)
    hi = eta_star + d
    if np.any(lo > hi + 1e-15):
        raise Infeasible("eta_floor exceeds eta* + delta for some state")
    return lo, np.maximum(hi, lo)


def _edge_system(support, eta_star):
    # upper-triangle edges of the support, Frobenius weights and the row-sum map
    S = eta_star.size
    iu, ju = np.nonzero(np.triu(support))
    sq = np.sqrt(eta_star)
    c = np.where(iu == ju, 1.0, 2.0)
    B = np.zeros((S, iu.size))
    coef = sq[iu] * sq[ju]
    np.add.at(B, (iu, np.arange(iu.size)), coef)
    off = iu != ju
    np.add.at(B, (ju[off], np.flatnonzero(off)), coef[off])
    return iu, ju, c, B


def _kkt_polish(y, c, B, lo, hi, x_guess, thr, max_rounds=30):
    """Exact projection by a primal-dual active-set loop, or ``None``.

    Starting from the active set of ``x_guess``, each round solves
    ``min 1/2 sum c (x - y)^2`` with the active zero edges and bound states
    as equalities and re-reads the active set from the violated conditions.
    A round passing primal feasibility and multiplier signs certifies the
    optimum of the convex QP.
    """
    S = B.shape[0]
    r = B @ x_guess
    zero = x_guess <= thr
    at_lo = r - lo <= thr
    at_hi = (hi - r <= thr) & ~at_lo | (hi - lo <= thr)
    tot = B.sum(axis=0)
    scale = max(1.0, float(np.max(np.abs(y))))
    seen = set()
    for _ in range(max_rounds):
        key = (zero.tobytes(), at_lo.tobytes(), at_hi.tobytes())
        if key in seen:
            return None
        seen.add(key)
        bound = at_lo | at_hi
        rows = np.vstack([B[bound], tot[None, :]])
        rhs = np.r_[np.where(at_lo[bound], lo[bound], hi[bound]), 1.0]
        free = ~zero
        M = rows[:, free]
        ci = 1.0 / c[free]
        lam = np.linalg.lstsq((M * ci) @ M.T, M @ y[free] - rhs, rcond=None)[0]
        cand = y - (rows.T @ lam) / c
        x = np.where(free, cand, 0.0)
        r = B @ x
        lb = np.zeros(S)
        lb[bound] = lam[:-1]
        eq = at_lo & at_hi
        ok = (
            np.all(x >= -1e-14)
            and np.all(cand[zero] <= 1e-10 * scale)
            and np.all(r >= lo - 1e-12)
            and np.all(r <= hi + 1e-12)
            and not np.any((lb > 1e-10 * scale) & at_lo & ~eq)
            and not np.any((lb < -1e-10 * scale) & at_hi & ~eq)
        )
        if ok and np.max(np.abs(rows @ np.maximum(x, 0.0) - rhs)) <= 1e-12:
            return np.maximum(x, 0.0)
        # re-read the active sets
        zero = cand <= 0.0
        new_lo = (at_lo & ~eq & (lb <= 0.0)) | (~bound & (r < lo))
        new_hi = (at_hi & ~eq & (lb >= 0.0)) | (~bound & (r > hi))
        at_lo = new_lo | eq
        at_hi = new_hi | eq
    return None


def project_flow_scaled(Z, support, eta_star, eta_floor, delta, iters=5000, tol=1e-12):
    """Projection in the scaled coordinates ``Z = D^{-1/2} X D^{-1/2}``.

    Box geometry only. Dykstra alternates between nonnegative symmetric
    supported matrices and the row-sum set
    ``{Z : sqrt(eta*) * (Z sqrt(eta*)) in C}``, whose projection shifts each
    row along ``sqrt(eta*)`` by a weighted capped-simplex step. Every few
    sweeps the active set of the current iterate is tried in an exact KKT
    solve, which ends the iteration as soon as it certifies optimality.
    """
    eta_star = np.asarray(eta_star, dtype=float)
    S = eta_star.size
    sq = np.sqrt(eta_star)
    lo, hi = _box_bounds(eta_star, eta_floor, delta)
    iu, ju, c, B = _edge_system(support, eta_star)
    Z = np.asarray(Z, dtype=float)
    y = 0.5 * (Z + Z.T)[iu, ju]

    def to_matrix(x):
        out = np.zeros((S, S))
        out[iu, ju] = x
        out[ju, iu] = x
        return out

    p = np.zeros_like(Z)
    q = np.zeros_like(Z)
    Y = Z
    checks = {10, 30, 100, 300, 1000, 3000}
    for k in range(1, iters + 1):
        W = Y + p
        Z1 = np.maximum(np.where(support, 0.5 * (W + W.T), 0.0), 0.0)
        p = W - Z1
        W = Z1 + q
        r = sq * (W @ sq)
        rp = _capped_simplex(r, lo, hi, eta_star)
        Z2 = W + np.outer((rp - r) / sq, sq)
        q = W - Z2
        err = max(np.max(np.abs(Z2 - Y)), np.max(np.abs(Z2 - Z1)))
        Y = Z2
        if err < tol:
            break
        if k in checks:
            x = _kkt_polish(y, c, B, lo, hi, Z1[iu, ju], max(10.0 * err, 1e-13))
            if x is not None:
                return to_matrix(x)
    x = _kkt_polish(y, c, B, lo, hi, np.maximum(0.5 * (Y + Y.T), 0.0)[iu, ju], 1e-12)
    if x is not None:
        return to_matrix(x)
    return np.maximum(_symmetrize_support(Y, support), 0.0)


def flow_residuals(X, support, eta_star, eta_floor, delta, geometry="ball"):
    r = X.sum(axis=1)
    dev = r - np.asarray(eta_star)
    if geometry == "ball":
        slack_dev = float(np.linalg.norm(dev) - float(delta))
    else:
        slack_dev = float(np.max(np.abs(dev) - np.asarray(delta)))
    return {
        "asymmetry": float(np.max(np.abs(X - X.T))),
        "negativity": float(max(0.0, -X.min())),
        "off_support": float(np.max(np.abs(np.where(support, 0.0, X)))),
        "total_mass": float(abs(X.sum() - 1.0)),
        "floor": float(max(0.0, eta_floor - r.min())),
        "deviation": max(0.0, slack_dev),
    }


# -- step 1 ------------------------------------------------------------------


def _affine(X, eta_star):
    rs = np.sqrt(eta_star)
    return X / np.outer(rs, rs) - np.outer(rs, rs)


def _norm_and_subgrad(X, eta_star):
    M = _affine(X, eta_star)
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    i = int(np.argmax(np.abs(w)))
    u = V[:, i] / np.sqrt(eta_star)
    return abs(float(w[i])), math.copysign(1.0, w[i]) * np.outer(u, u)


def flow_objective(X, sigma2, eta_star, rho, mode="fmh"):
    """Surrogate objective of a flow matrix.

    ``mode="fmh"``: ``(1/S) sum sigma2 / eta_X + rho / (1 - norm)``;
    ``mode="sdp"``: the norm alone. The norm is measured with the fixed
    ``eta*`` weights.
    """
    nrm, _ = _norm_and_subgrad(X, eta_star)
    if mode == "sdp":
        return nrm
    if nrm >= 1.0:
        return math.inf
    r = X.sum(axis=1)
    return float(np.mean(sigma2 / r)) + rho / (1.0 - nrm)


def _objective_subgrad(X, sigma2, eta_star, rho, mode):
    nrm, G = _norm_and_subgrad(X, eta_star)
    if mode == "sdp":
        return nrm, nrm, G
    if nrm >= 1.0:
        # minimize the norm first to re-enter the domain
        return math.inf, nrm, G
    r = X.sum(axis=1)
    S = r.size
    val = float(np.mean(sigma2 / r)) + rho / (1.0 - nrm)
    g_rows = -sigma2 / (S * r**2)
    return val, nrm, np.repeat(g_rows[:, None], S, axis=1) + rho / (1.0 - nrm) ** 2 * G


def p1_solve(
    mdp: MdpModel,
    eta_star,
    rho_n,
    delta_n,
    eta_floor=None,
    mode="fmh",
    geometry=None,
    P_star=None,
    tol=1e-9,
    max_iters=3000,
    window=300,
    step_scale=0.2,
    backend="subgradient",
) -> SymmetricFlow:
    """Step 1 of the heuristic: a convex surrogate over symmetric flows.

    Parameters
    ----------
    mdp : MdpModel
    eta_star : (S,) array_like
        Target stationary distribution (from the asymptotic solver).
    rho_n : float
        Weight of the mixing penalty (``S / n`` by default upstream).
    delta_n : float or (S,) array_like
        Allowed deviation of the row sums from ``eta*``: ball radius
        (``geometry="ball"``) or per-state half-widths (``"box"``).
    eta_floor : float, optional
        Row-sum floor, default ``min(eta*) / 2``.
    mode : {"fmh", "sdp"}
        ``"fmh"`` minimizes loss plus penalty; ``"sdp"`` minimizes the
        spectral norm only.
    geometry : {"ball", "box"}, optional
        Defaults to ball for ``"fmh"`` and box for ``"sdp"``.
    P_star : (S, S) array_like, optional
        Kernel with stationary distribution ``eta*``; its additive
        reversibilization seeds the iteration. Defaults to the diagonal
        flow ``diag(eta*)`` projected onto the constraints.
    tol, window : float, int
        Stop once the best objective improved by less than ``tol`` over the
        last ``window`` iterations.
    max_iters : int
    step_scale : float
        Subgradient steps are ``step_scale * ||X0||_F / sqrt(k)``.
    backend : {"subgradient", "cvxpy"}
        ``"cvxpy"`` solves the same problem with an external conic solver
        (optional dependency) and is used as a cross-check.

    Returns
    -------
    SymmetricFlow
        Best iterate found.
    """
    eta_star = np.asarray(eta_star, dtype=float)
    S = eta_star.size
    if S != mdp.S:
        raise InvalidModel("eta* size does not match the MDP")
    if np.any(eta_star <= 0.0):
        raise Infeasible("eta* must be positive")
    if eta_floor is None:
        eta_floor = float(eta_star.min()) / 2.0
    if geometry is None:
        geometry = "ball" if mode == "fmh" else "box"
    if np.any(eta_star < eta_floor - 1e-15):
        raise Infeasible("eta* violates the floor")
    support = flow_support(mdp)
    sigma2 = mdp.sigma2
    if backend == "cvxpy":
        return _p1_cvxpy(mdp, eta_star, rho_n, delta_n, eta_floor, mode, geometry, support)
    if P_star is not None:
        P_star = np.asarray(P_star, dtype=float)
        F = eta_star[:, None] * P_star
        X0 = 0.5 * (F + F.T)
    else:
        X0 = np.diag(eta_star)
    # box constraints are handled in the scaled coordinates Z = D^{-1/2} X D^{-1/2},
    # where the norm term has unit-size subgradients regardless of eta*
    scaled = geometry == "box"
    sq = np.sqrt(eta_star)
    W = np.outer(sq, sq)
    if scaled:
        def project(X):
            return W * project_flow_scaled(X / W, support, eta_star, eta_floor, delta_n)
    else:
        def project(X):
            return project_flow(X, support, eta_star, eta_floor, delta_n, geometry)

    X = project(X0)
    res0 = flow_residuals(X, support, eta_star, eta_floor, delta_n, geometry)
    if max(res0.values()) > 1e-6:
        raise Infeasible(f"no feasible symmetric flow found (residuals {res0})")
    # step lengths are measured in the working coordinates
    a = step_scale * np.linalg.norm(X / W if scaled else X)
    val, nrm, G = _objective_subgrad(X, sigma2, eta_star, rho_n, mode)
    if mode == "fmh" and nrm >= 1.0:
        # enter the domain of the penalty through the norm alone
        inner = p1_solve(mdp, eta_star, rho_n, delta_n, eta_floor, "sdp", geometry, None, tol, max_iters, window, step_scale)
        if inner.norm >= 1.0 - 1e-12:
            raise NormAtOne("every feasible flow has spectral norm 1")
        X = inner.X
        val, nrm, G = _objective_subgrad(X, sigma2, eta_star, rho_n, mode)
    best_val, best_X, best_nrm = val, X.copy(), nrm
    history = [best_val]
    k = 0
    converged = False
    for k in range(1, max_iters + 1):
        # gradient in working coordinates: d/dZ h(W * Z) = W * dh/dX
        D = (W * G) if scaled else G
        gn = np.linalg.norm(D)
        if gn == 0.0:
            converged = True
            break
        if scaled:
            X = project(W * (X / W - (a / math.sqrt(k)) * D / gn))
        else:
            X = project(X - (a / math.sqrt(k)) * D / gn)
        val, nrm, G = _objective_subgrad(X, sigma2, eta_star, rho_n, mode)
        if val < best_val:
            best_val, best_X, best_nrm = val, X.copy(), nrm
        history.append(best_val)
        if k >= window and history[-window - 1] - best_val < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"p1_solve hit max_iters={max_iters}", MaxItersWarning, stacklevel=2)
    res = flow_residuals(best_X, support, eta_star, eta_floor, delta_n, geometry)
    return SymmetricFlow(best_X, float(best_val), float(best_nrm), k, converged, res, history)


def _p1_cvxpy(mdp, eta_star, rho, delta, eta_floor, mode, geometry, support):
    import cvxpy as cp

    S = eta_star.size
    X = cp.Variable((S, S), symmetric=True)
    rs = np.sqrt(eta_star)
    Dm = np.diag(1.0 / rs)
    A = Dm @ X @ Dm - np.outer(rs, rs)
    r = cp.sum(X, axis=1)
    cons = [X >= 0, cp.multiply(~support, X) == 0, cp.sum(X) == 1, r >= eta_floor]
    if geometry == "ball":
        cons.append(cp.norm(r - eta_star, 2) <= float(delta))
    else:
        cons.append(cp.abs(r - eta_star) <= np.broadcast_to(delta, (S,)))
    nrm = cp.sigma_max(A)
    if mode == "sdp":
        obj = nrm
    else:
        obj = cp.sum(cp.multiply(mdp.sigma2 / S, cp.inv_pos(r))) + rho * cp.inv_pos(1 - nrm)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise Infeasible(f"cvxpy status {prob.status}")
    Xv = np.maximum(0.5 * (X.value + X.value.T), 0.0)
    Xv = np.where(support, Xv, 0.0)
    res = flow_residuals(Xv, support, eta_star, eta_floor, delta, geometry)
    val = flow_objective(Xv, mdp.sigma2, eta_star, rho, mode)
    return SymmetricFlow(Xv, val, _norm_and_subgrad(Xv, eta_star)[0], 0, True, res)


# -- step 2 ------------------------------------------------------------------


def _stationarity_operator(mdp: MdpModel, eta):
    # (M pi)(s) = sum_{s', a} eta(s') p(s | s', a) pi(s', a)
    return (eta[:, None, None] * mdp.p).reshape(mdp.S * mdp.A, mdp.S).T


def p2_project(mdp: MdpModel, eta_target, tol=1e-15, max_iters=20000):
    """Find a stationary policy whose one-step flow reproduces ``eta_target``.

    Minimizes ``sum_s (eta(s) - sum_{s', a} eta(s') p(s|s',a) pi(a|s'))^2``
    over row-stochastic ``pi`` by accelerated projected gradient, starting
    from the uniform policy.

    Returns
    -------
    policy : StationaryPolicy
    residual : float
        Optimal value of the squared defect; zero iff ``eta_target`` is the
        stationary distribution of some policy.
    """
    eta = np.asarray(eta_target, dtype=float)
    S, A = mdp.S, mdp.A
    M = _stationarity_operator(mdp, eta)
    L = 2.0 * np.linalg.norm(M, 2) ** 2
    if L == 0.0:
        pi = np.full((S, A), 1.0 / A)
        return StationaryPolicy(pi), float(eta @ eta)
    step = 1.0 / L

    def resid(pi):
        e = eta - M @ pi.ravel()
        return float(e @ e), e

    x = np.full((S, A), 1.0 / A)
    y = x.copy()
    t = 1.0
    f_prev = resid(x)[0]
    for _ in range(max_iters):
        _, e = resid(y)
        g = (-2.0 * M.T @ e).reshape(S, A)
        x_new = project_simplex_rows(y - step * g)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        f_new = resid(x_new)[0]
        if f_new > f_prev:
            # restart momentum on non-monotone steps
            y = x_new.copy()
            t_new = 1.0
        done = f_new <= tol or np.max(np.abs(x_new - x)) < 1e-15
        x, t, f_prev = x_new, t_new, min(f_new, f_prev)
        if done:
            break
    x = np.maximum(x, 0.0)
    x /= x.sum(axis=1, keepdims=True)
    return StationaryPolicy(x), resid(x)[0]


# -- driver ------------------------------------------------------------------


def fmh_run(mdp: MdpModel, target, n, rho=None, delta=None, eta_floor=None, mode="fmh", geometry=None, P_star=None, **p1_kwargs) -> FmhResult:
    """Run both steps of the heuristic.

    Parameters
    ----------
    mdp : MdpModel
    target : StationaryPolicy or (S,) array_like
        Asymptotically optimal policy ``pi*`` (its stationary distribution is
        used as ``eta*``) or ``eta*`` directly.
    n : int
        Budget; sets the defaults ``rho = S / n`` and ``delta = 1 / n``.
    rho, delta, eta_floor : optional
        Overrides. ``eta_floor`` defaults to ``min(eta*) / 2``.
    mode, geometry :
        Passed to :func:`p1_solve`.
    P_star : (S, S) array_like, optional
        Seed kernel when ``target`` is a distribution.

    Returns
    -------
    FmhResult
    """
    slem_before = None
    if isinstance(target, StationaryPolicy) or np.ndim(target) == 2:
        ch = chain_from_policy(mdp, target)
        eta_star = ch.eta
        P_star = ch.P
        slem_before = ch.slem
    else:
        eta_star = np.asarray(target, dtype=float)
        if P_star is not None:
            slem_before = float(min(slem_of(np.asarray(P_star, dtype=float), eta_star), 1.0))
    rho = mdp.S / n if rho is None else rho
    delta = 1.0 / n if delta is None else delta
    if eta_floor is None:
        eta_floor = float(eta_star.min()) / 2.0
    flow = p1_solve(mdp, eta_star, rho, delta, eta_floor, mode, geometry, P_star, **p1_kwargs)
    eta1 = flow.eta / flow.eta.sum()
    policy, resid = p2_project(mdp, eta1)
    after = chain_from_policy(mdp, policy)
    params = {"rho": rho, "delta": delta, "eta_floor": eta_floor, "mode": mode, "n": n}
    return FmhResult(policy, eta1, flow, resid, slem_before, after.slem, params)


def delta_schedule(var_hat, tau_k):
    """Per-state slack ``(Sigma - var(s)) / ((S - 1) Sigma) / sqrt(tau_k)``.

    States with large estimated variance get less room to move, and the
    slacks always sum to ``tau_k^{-1/2}``.
    """
    v = np.asarray(var_hat, dtype=float)
    S = v.size
    if S < 2:
        raise DegenerateVariances("slack schedule needs at least two states")
    tot = float(v.sum())
    if not tot > 0.0:
        raise DegenerateVariances("sum of estimated variances is zero")
    return (tot - v) / ((S - 1) * tot) / math.sqrt(tau_k)
