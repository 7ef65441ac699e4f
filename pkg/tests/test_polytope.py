import numpy as np
import pytest
from conftest import fig1_policy, single_state_mdp, swap_mdp

from activemdp.errors import Infeasible, InvalidModel, ZeroMarginal
from activemdp.garnet import garnet_generate
from activemdp.mdp import MdpModel, StationaryPolicy, uniform_policy
from activemdp.polytope import (
    LinearMinOracle,
    StateActionDist,
    lambda_membership,
    lambda_to_policy,
    linear_min_oracle,
    max_feasible_eta_floor,
    policy_to_lambda,
    vertex_min,
)


def doubly_stochastic_mdp():
    p = np.zeros((3, 2, 3))
    p[:, 0, :] = np.roll(np.eye(3), 1, axis=1)
    p[:, 1, :] = np.full((3, 3), 1 / 3)
    return MdpModel(p, [1.0, 2.0, 3.0], R=4.0)


def random_small_mdp(rng, S, A):
    p = rng.random((S, A, S)) * (rng.random((S, A, S)) < 0.7)
    p[np.arange(S), :, np.arange(S)] += 0.05
    p /= p.sum(axis=2, keepdims=True)
    return MdpModel(p, rng.uniform(0.1, 2.0, S), R=4.0)


def test_state_action_dist_validated():
    with pytest.raises(InvalidModel):
        StateActionDist(np.array([[0.5, 0.6]]))


def test_membership_examples():
    m = doubly_stochastic_mdp()
    assert lambda_membership(m, np.full((3, 2), 1 / 6), eta_floor=0.1).in_lambda_floor
    flip = swap_mdp()
    lam = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert not lambda_membership(flip, lam).in_lambda
    assert lambda_membership(flip, lam, tol=np.inf).in_lambda


def test_lambda_to_policy_examples():
    np.testing.assert_allclose(lambda_to_policy(np.full((2, 3), 1 / 6)).probs, 1 / 3)
    pi0 = np.array([[0.2, 0.8], [0.6, 0.4]])
    marg = np.array([0.3, 0.7])
    np.testing.assert_allclose(lambda_to_policy(marg[:, None] * pi0).probs, pi0, atol=1e-15)
    np.testing.assert_array_equal(lambda_to_policy(np.array([[0, 0.5], [0.5, 0]])).probs, [[0, 1], [1, 0]])
    with pytest.raises(ZeroMarginal):
        lambda_to_policy(np.array([[1.0, 0.0], [0.0, 0.0]]))
    np.testing.assert_allclose(lambda_to_policy(np.array([[1.0, 0.0], [0.0, 0.0]]), repair=True).probs[1], 0.5)


def test_policy_to_lambda(fig1):
    m = doubly_stochastic_mdp()
    np.testing.assert_allclose(policy_to_lambda(m, uniform_policy(m)).lam, 1 / 6, atol=1e-12)
    lam = policy_to_lambda(fig1, fig1_policy(0.9))
    np.testing.assert_allclose(lam.marginals, np.array([5, 1, 5]) / 11, atol=1e-12)
    assert lambda_membership(fig1, lam, tol=1e-8).in_lambda
    pi = np.array([[0.3, 0.7], [0.45, 0.55], [0.9, 0.1]])
    np.testing.assert_allclose(lambda_to_policy(policy_to_lambda(fig1, pi)).probs, pi, atol=1e-12)


def test_oracle_examples():
    lam = linear_min_oracle(swap_mdp(), np.array([[1.0, 0.0], [0.0, 1.0]])).lam
    np.testing.assert_allclose(lam, [[0, 0.5], [0.5, 0]], atol=1e-12)
    m = doubly_stochastic_mdp()
    res = LinearMinOracle(m, 0.05)(np.full((3, 2), 2.5))
    assert res.value == pytest.approx(2.5)
    assert lambda_membership(m, res.lam, 0.05).in_lambda_floor
    one = single_state_mdp(A=3)
    np.testing.assert_allclose(linear_min_oracle(one, np.array([[3.0, 1.0, 2.0]])).lam, [[0, 1, 0]])


def test_oracle_matches_vertex_enumeration(rng):
    for i in range(50):
        S = int(rng.integers(1, 5))
        A = int(rng.integers(1, max(2, 12 // S) + 1))
        A = min(A, 12 // S)
        m = random_small_mdp(rng, S, A)
        floor = 0.0 if i % 2 == 0 else 0.5 * max_feasible_eta_floor(m) * rng.uniform(0.1, 0.9)
        c = rng.standard_normal((S, A))
        res = LinearMinOracle(m, floor)(c)
        ref, _ = vertex_min(m, c, floor)
        assert abs(res.value - ref) <= 1e-7
        assert lambda_membership(m, res.lam, floor, tol=1e-8).in_lambda_floor


def test_floor_monotonicity(rng):
    m = garnet_generate(4, 3, 2, seed=7)
    top = max_feasible_eta_floor(m)
    c = rng.standard_normal((4, 3))
    vals = [LinearMinOracle(m, f)(c).value for f in np.linspace(0, 0.95 * top, 6)]
    assert all(b >= a - 1e-10 for a, b in zip(vals, vals[1:]))


def test_infeasible_floor():
    m = garnet_generate(4, 2, 2, seed=2)
    with pytest.raises(Infeasible):
        LinearMinOracle(m, 1.01 * max_feasible_eta_floor(m))


def test_warm_start_consistent(rng):
    m = garnet_generate(6, 3, 3, seed=4)
    orc = LinearMinOracle(m, 0.001)
    for _ in range(10):
        c = rng.standard_normal((6, 3))
        assert orc(c).value == pytest.approx(LinearMinOracle(m, 0.001)(c).value, abs=1e-10)


def test_policy_dataclass_round_trip():
    pi = StationaryPolicy(np.array([[0.25, 0.75]]))
    assert pi.to_list() == [[0.25, 0.75]]
