import numpy as np
import pytest

from activemdp.asymptotic import finite_loss_mc, fw_solve, loss_regularized
from activemdp.errors import DegenerateVariances, Infeasible
from activemdp.fmh import (
    _capped_simplex,
    delta_schedule,
    flow_residuals,
    flow_support,
    fmh_run,
    p1_solve,
    p2_project,
    project_flow,
    project_flow_scaled,
    project_rowsums,
)
from activemdp.garnet import garnet_generate
from activemdp.mdp import MdpModel, StationaryPolicy, chain_from_policy, uniform_policy
from activemdp.spectral import slem_of


def all_ones_two_state():
    return MdpModel(np.full((2, 2, 2), 0.5), [1.0, 1.0], R=2.0)


def capped_reference(r, lo, hi, w):
    # bisection on the multiplier of sum x = 1
    a, b = -1e6, 1e6
    for _ in range(400):
        m = 0.5 * (a + b)
        if np.clip(r - m * w, lo, hi).sum() > 1:
            a = m
        else:
            b = m
    return np.clip(r - 0.5 * (a + b) * w, lo, hi)


def reversibilized_flow(mdp, pi):
    ch = chain_from_policy(mdp, pi)
    F = ch.eta[:, None] * ch.P
    return 0.5 * (F + F.T), ch


def test_capped_simplex_exact(rng):
    for _ in range(200):
        S = int(rng.integers(2, 9))
        c = rng.dirichlet(np.ones(S))
        d = rng.uniform(0.0, 0.2, S)
        lo, hi = np.maximum(c - d, 0.0), c + d
        r = rng.normal(0, 0.5, S)
        w = rng.uniform(0.1, 1.0, S)
        x = _capped_simplex(r, lo, hi, w)
        assert abs(x.sum() - 1) < 1e-12
        np.testing.assert_allclose(x, capped_reference(r, lo, hi, w), atol=1e-9)


def test_capped_simplex_infeasible():
    with pytest.raises(Infeasible):
        _capped_simplex(np.zeros(2), np.array([0.6, 0.6]), np.array([1.0, 1.0]))


def test_rowsum_projection_ball(rng):
    eta = rng.dirichlet(np.ones(5)) * 0.5 + 0.1
    eta /= eta.sum()
    x = project_rowsums(rng.random(5), eta, 0.02, 0.05, "ball")
    assert abs(x.sum() - 1) < 1e-10 and np.linalg.norm(x - eta) <= 0.05 + 1e-10 and x.min() >= 0.02 - 1e-10


@pytest.mark.parametrize("geometry", ["ball", "box"])
def test_dykstra_constraints_and_fixed_point(rng, geometry):
    for seed in range(10):
        # symmetric adjacency, so the reversibilized flow lies on the support
        m = garnet_generate(6, 3, 3, reversible=True, seed=seed)
        probs = rng.dirichlet(np.ones(3), size=6)
        X0, ch = reversibilized_flow(m, probs)
        eta = ch.eta
        floor = eta.min() / 2
        delta = 0.02 if geometry == "ball" else np.full(6, 0.01)
        sup = flow_support(m)
        # feasible point comes back unchanged
        if geometry == "ball":
            back = project_flow(X0, sup, eta, floor, delta, geometry)
        else:
            W = np.outer(np.sqrt(eta), np.sqrt(eta))
            back = W * project_flow_scaled(X0 / W, sup, eta, floor, delta)
        assert np.max(np.abs(back - X0)) <= 1e-9
        # arbitrary point lands in the intersection
        Y = rng.normal(0, 0.1, (6, 6))
        if geometry == "ball":
            Z = project_flow(Y, sup, eta, floor, delta, geometry)
        else:
            Z = W * project_flow_scaled(Y / W, sup, eta, floor, delta)
        res = flow_residuals(Z, sup, eta, floor, delta, geometry)
        assert max(res.values()) <= 1e-7


def test_scaled_projection_matches_conic_solver(rng):
    cp = pytest.importorskip("cvxpy")
    m = garnet_generate(6, 2, 2, reversible=True, seed=3)
    _, ch = reversibilized_flow(m, uniform_policy(m))
    eta = ch.eta
    sup = flow_support(m)
    delta = np.full(6, 0.01)
    floor = eta.min() / 2
    for _ in range(3):
        Y = np.where(sup, rng.normal(0, 1.0, (6, 6)), 0.0)
        Y = 0.5 * (Y + Y.T)
        Z = project_flow_scaled(Y, sup, eta, floor, delta)
        V = cp.Variable((6, 6), symmetric=True)
        X = cp.multiply(np.outer(np.sqrt(eta), np.sqrt(eta)), V)
        r = cp.sum(X, axis=1)
        cons = [V >= 0, cp.multiply(~sup, V) == 0, cp.sum(X) == 1, r >= floor, cp.abs(r - eta) <= delta]
        cp.Problem(cp.Minimize(cp.sum_squares(V - Y)), cons).solve(solver=cp.CLARABEL)
        np.testing.assert_allclose(Z, V.value, atol=1e-6)


def test_p1_two_state_optimum():
    m = all_ones_two_state()
    eta = np.array([0.5, 0.5])
    for geometry in ("ball", "box"):
        fl = p1_solve(m, eta, 0.0, 0.0, 0.1, "sdp", geometry)
        assert fl.norm <= 1e-6
        np.testing.assert_allclose(fl.X, 0.25, atol=1e-6)


def test_p1_zero_slack_keeps_rowsums():
    m = garnet_generate(5, 3, 3, reversible=True, seed=1)
    X0, ch = reversibilized_flow(m, uniform_policy(m))
    fl = p1_solve(m, ch.eta, 0.0, 0.0, None, "sdp", "box", ch.P, max_iters=200)
    np.testing.assert_allclose(fl.X.sum(axis=1), ch.eta, atol=1e-9)


def test_p1_best_objective_monotone(fig1):
    sol = fw_solve(fig1)
    fl = p1_solve(fig1, sol.eta_star, 3 / 1000, 1 / 1000, max_iters=400, window=400)
    h = np.array(fl.history)
    assert np.all(np.diff(h) <= 0.0)
    assert fl.objective == pytest.approx(h[-1])


def test_p1_agrees_with_conic_solver(fig1):
    pytest.importorskip("cvxpy")
    sol = fw_solve(fig1)
    args = (fig1, sol.eta_star, 3 / 1000, 1 / 1000)
    ours = p1_solve(*args, P_star=chain_from_policy(fig1, sol.policy).P)
    ref = p1_solve(*args, backend="cvxpy")
    assert ours.objective <= ref.objective * (1 + 0.02)


def test_p2_examples(fig1):
    m = garnet_generate(5, 3, 2, seed=2)
    pi0 = StationaryPolicy(np.random.default_rng(0).dirichlet(np.ones(3), size=5))
    eta0 = chain_from_policy(m, pi0).eta
    pi, res = p2_project(m, eta0)
    assert res <= 1e-8
    np.testing.assert_allclose(chain_from_policy(m, pi).eta, eta0, atol=1e-4)
    _, res = p2_project(m, np.eye(5)[0])
    assert res > 0
    # single action: policy is forced, residual is the stationarity defect
    single = MdpModel(m.p[:, :1, :], m.sigma2, R=m.R)
    target = np.array([0.3, 0.1, 0.2, 0.25, 0.15])
    _, res = p2_project(single, target)
    defect = target - target @ single.p[:, 0, :]
    assert res == pytest.approx(float(defect @ defect), rel=1e-12)


def test_fmh_fig1_reduces_slem(fig1):
    sol = fw_solve(fig1)
    res = fmh_run(fig1, sol.policy, 1000)
    assert res.slem_after < res.slem_before
    assert res.p2_residual <= 1e-8
    d = res.diagnostics()
    assert {"slem_before", "slem_after", "p2_residual", "constraint_residuals"} <= set(d)
    assert max(d["constraint_residuals"].values()) <= 1e-7


def test_fmh_large_budget_stays_close(fig1):
    sol = fw_solve(fig1)
    eta_star = chain_from_policy(fig1, sol.policy).eta
    res = fmh_run(fig1, sol.policy, 10**7)
    assert np.linalg.norm(res.eta1 - eta_star) <= 2e-7


def test_fmh_improves_finite_loss(fig1):
    sol = fw_solve(fig1)
    res = fmh_run(fig1, sol.policy, 1000)
    # n / T has a heavy tail here, so many runs are needed for a stable mean
    a = finite_loss_mc(fig1, res.policy, 1000, runs=2000, seed=5)[0]
    b = finite_loss_mc(fig1, sol.policy, 1000, runs=2000, seed=5)[0]
    assert a < b


def test_fmh_proxy_not_worse(fig1):
    sol = fw_solve(fig1)
    res = fmh_run(fig1, sol.policy, 1000)
    assert loss_regularized(fig1, res.policy, 1000).proxy <= loss_regularized(fig1, sol.policy, 1000).proxy


def test_fmh_on_fast_mixing_policy_barely_changes_loss():
    m = garnet_generate(5, 3, 3, reversible=True, seed=1)
    pi = uniform_policy(m)
    assert chain_from_policy(m, pi).slem < 0.3
    res = fmh_run(m, pi, 1000)
    a = finite_loss_mc(m, res.policy, 1000, runs=300, seed=3)[0]
    b = finite_loss_mc(m, pi, 1000, runs=300, seed=3)[0]
    assert abs(a - b) / b < 0.05


def test_eta_target_with_seed_kernel(fig1):
    sol = fw_solve(fig1)
    ch = chain_from_policy(fig1, sol.policy)
    res = fmh_run(fig1, ch.eta, 1000, P_star=ch.P)
    assert res.slem_before == pytest.approx(min(slem_of(ch.P, ch.eta), 1.0))


def test_delta_schedule_examples():
    np.testing.assert_allclose(delta_schedule([3.0, 1.0], 100), [0.025, 0.075])
    d = delta_schedule([0.5, 2.0, 7.0, 1.5], 49)
    assert d.sum() == pytest.approx(1 / 7)
    np.testing.assert_allclose(delta_schedule([2.0, 2.0, 2.0], 16), 1 / 12)
    with pytest.raises(DegenerateVariances):
        delta_schedule([0.0, 0.0], 10)
    with pytest.raises(DegenerateVariances):
        delta_schedule([1.0], 10)
