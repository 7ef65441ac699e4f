import json

import numpy as np
import pytest
from conftest import fig1_policy, flip_mdp, single_state_mdp

from activemdp.errors import InvalidBranching, InvalidModel, NotIrreducible
from activemdp.garnet import garnet_generate
from activemdp.mdp import (
    MdpModel,
    StationaryPolicy,
    chain_from_kernel,
    chain_from_policy,
    check_ergodic_assumption,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    save_mdp,
    stationary_distribution,
    uniform_policy,
)


def test_rows_must_sum_to_one():
    with pytest.raises(InvalidModel):
        MdpModel(np.array([[[0.5, 0.4]], [[0.5, 0.5]]]), [1.0, 1.0])


def test_adjacency_is_exact():
    m = garnet_generate(6, 3, 2, seed=3)
    np.testing.assert_array_equal(m.Q, m.p.max(axis=1) > 0)


def test_bounded_mode_rejects_large_variance():
    with pytest.raises(InvalidModel):
        MdpModel(np.ones((1, 1, 1)), [1.0], R=1.0, obs_mode="bounded")


def test_policy_rows_validated():
    with pytest.raises(InvalidModel):
        StationaryPolicy(np.array([[0.5, 0.6]]))


def test_fully_mixing_chain():
    p = np.full((2, 1, 2), 0.5)
    ch = chain_from_policy(MdpModel(p, [1, 1], R=2.0), np.ones((2, 1)))
    np.testing.assert_allclose(ch.P, 0.5)
    np.testing.assert_allclose(ch.eta, [0.5, 0.5])
    assert ch.slem == pytest.approx(0.0, abs=1e-12)
    assert ch.gap == pytest.approx(1.0)


def test_flip_chain_slem():
    ch = chain_from_policy(flip_mdp(0.3), np.ones((2, 1)))
    np.testing.assert_allclose(ch.eta, [0.5, 0.5])
    assert ch.slem == pytest.approx(0.4, abs=1e-12)
    assert ch.reversible


def test_three_state_stationary(fig1):
    ch = chain_from_policy(fig1, fig1_policy(0.9))
    np.testing.assert_allclose(ch.eta, np.array([5, 1, 5]) / 11, atol=1e-12)
    # independent route: power iteration
    v = np.full(3, 1 / 3)
    for _ in range(20000):
        v = v @ ch.P
    np.testing.assert_allclose(ch.eta, v, atol=1e-10)
    assert ch.ergodic and ch.reversible


def test_reducible_chain_raises():
    p = np.zeros((2, 1, 2))
    p[0, 0, 0] = p[1, 0, 1] = 1.0
    with pytest.raises(NotIrreducible):
        chain_from_policy(MdpModel(p, [1, 1], R=2.0), np.ones((2, 1)))


def test_periodic_chain_flagged():
    ch = chain_from_kernel(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert not ch.ergodic and ch.period == 2
    np.testing.assert_allclose(ch.eta, [0.5, 0.5])


def test_stationary_residual_on_garnets():
    for seed in range(10):
        m = garnet_generate(8, 3, 3, seed=seed)
        ch = chain_from_policy(m, uniform_policy(m))
        assert np.max(np.abs(ch.eta @ ch.P - ch.eta)) < 1e-8
        assert abs(ch.eta.sum() - 1) < 1e-10 and ch.eta.min() >= 0


def test_power_iteration_fallback_agrees(rng):
    P = rng.random((70, 70))
    P /= P.sum(axis=1, keepdims=True)
    eta = stationary_distribution(P)
    assert np.max(np.abs(eta @ P - eta)) < 1e-10


def test_ergodic_check_examples(fig1):
    rep = check_ergodic_assumption(fig1, 20, seed=0)
    assert rep.passed
    assert rep.eta_min_proxy < 0.2
    single = check_ergodic_assumption(single_state_mdp(), 5)
    assert single.passed and single.eta_min_proxy == 1.0 and single.gap_min_proxy == pytest.approx(1.0)
    p = np.zeros((2, 2, 2))
    p[0, :, 1] = 1.0
    p[1, :, 1] = 1.0  # absorbing state 1
    assert not check_ergodic_assumption(MdpModel(p, [1, 1], R=2.0), 5).passed


def test_garnet_structure():
    m = garnet_generate(5, 3, 2, 0.01, 10.0, seed=1)
    np.testing.assert_allclose(m.p.sum(axis=2), 1.0, atol=1e-12)
    assert np.all((m.p > 0).sum(axis=2) <= 3)
    assert np.all(m.p[np.arange(5), :, np.arange(5)] > 0)
    assert m.sigma2.min() == 0.01 and m.sigma2.max() == 10.0


def test_garnet_determinism():
    a = garnet_generate(6, 2, 3, seed=99)
    b = garnet_generate(6, 2, 3, seed=99)
    assert a.p.tobytes() == b.p.tobytes() and a.sigma2.tobytes() == b.sigma2.tobytes()


def test_garnet_branching_validated():
    with pytest.raises(InvalidBranching):
        garnet_generate(3, 2, 4)


def test_garnet_uniform_chain_aperiodic():
    for seed in range(100):
        m = garnet_generate(5, 3, 2, seed=seed)
        assert chain_from_policy(m, uniform_policy(m)).gap > 0


def test_reversible_garnet_detailed_balance():
    for seed in range(10):
        m = garnet_generate(10, 2, 2, reversible=True, seed=seed)
        ch = chain_from_policy(m, uniform_policy(m))
        F = ch.eta[:, None] * ch.P
        assert np.max(np.abs(F - F.T)) < 1e-8


def test_json_round_trip(tmp_path):
    m = garnet_generate(4, 2, 2, seed=5)
    path = tmp_path / "m.json"
    save_mdp(m, path)
    d = json.loads(path.read_text())
    assert set(d) >= {"S", "A", "p", "sigma2", "mu", "R", "obs_mode", "seed"}
    back = load_mdp(path)
    np.testing.assert_array_equal(back.p, m.p)
    np.testing.assert_array_equal(mdp_from_dict(mdp_to_dict(m)).sigma2, m.sigma2)
