import math

import numpy as np
import pytest
from conftest import fig1_policy, single_state_mdp

from activemdp.asymptotic import fw_solve
from activemdp.errors import BudgetTooSmall, DegenerateCount, NonPositiveOptimum
from activemdp.fwame import EpisodeSchedule
from activemdp.mdp import three_state_mdp, uniform_policy
from activemdp.stats import (
    EstimatorState,
    ObservationModel,
    alpha_width,
    alpha_width_experimental,
    competitive_ratio,
    ell_n,
    epsilon_pi,
    estimator_update,
    k_delta,
    loss_empirical,
    mixing_bound_M,
    no_visit_bound,
)


def test_estimator_examples():
    st = EstimatorState.empty(2)
    for x in (1.0, 1.0):
        st = estimator_update(st, 0, x)
    assert st.mean_hat[0] == 1.0 and st.var_hat[0] == 0.0
    st = EstimatorState.empty(2)
    st.update(1, 0.0)
    st.update(1, 2.0)
    assert st.mean_hat[1] == 1.0 and st.var_hat[1] == 1.0


def test_default_predictions(fig1):
    obs = ObservationModel.from_mdp(fig1)
    st = EstimatorState.empty(3, obs)
    smax = math.sqrt(fig1.sigma2.max())
    np.testing.assert_allclose(st.mean_hat, 3 * smax)
    np.testing.assert_allclose(st.var_hat, smax**2)


def test_estimator_update_is_pure():
    st = EstimatorState.empty(1)
    new = estimator_update(st, 0, 3.0)
    assert st.counts[0] == 0 and new.counts[0] == 1


def test_estimators_match_two_pass(rng):
    for _ in range(20):
        xs = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3), size=int(rng.integers(2, 500)))
        st = EstimatorState.empty(1)
        for x in xs:
            st.update(0, x)
        assert abs(st.mean_hat[0] - xs.mean()) <= 1e-10
        assert abs(st.var_hat[0] - xs.var()) <= 1e-10


def test_fictitious_start():
    obs = ObservationModel(np.zeros(3), np.ones(3), mu_inf=4.0, var_default=2.0)
    st = EstimatorState.fictitious(3, obs)
    assert np.all(st.counts == 1)
    np.testing.assert_allclose(st.mean_hat, 4.0)


def test_alpha_width_examples():
    v = alpha_width(4, 0, 0.1, 2, 1.0, 2)
    assert v == pytest.approx(5 * math.sqrt(math.log(320) / 2), rel=1e-12)
    assert v == pytest.approx(8.491, abs=1e-3)
    a1 = alpha_width(10, 0, 0.1, 7, 1.0, 3)
    a2 = alpha_width(10, 0, 0.1, 14, 1.0, 3)
    assert a1 / a2 == pytest.approx(math.sqrt(2), rel=1e-12)
    widths = alpha_width(10, 0, 0.1, np.arange(1, 50), 1.0, 3)
    assert np.all(np.diff(widths) < 0)
    with pytest.raises(DegenerateCount):
        alpha_width(10, 0, 0.1, 0, 1.0, 3)


def test_experimental_width():
    v = alpha_width_experimental(5, 4, 10.0, 3)
    assert v == pytest.approx(0.2 * 10.0 * math.sqrt(math.log(4 * 3 * 25) / 4))


def test_loss_empirical_examples():
    assert loss_empirical([[1.0, 2.0]], [1.0, 2.0])[0] == 0.0
    assert loss_empirical([[0.5]], [0.0])[0] == pytest.approx(0.25)
    loss, nl = loss_empirical([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], n=10)
    assert loss == pytest.approx(0.5) and nl == pytest.approx(5.0)


def test_competitive_ratio():
    assert competitive_ratio(3.0, 3.0) == 0.0
    assert competitive_ratio(6.0, 3.0) == 1.0
    with pytest.raises(NonPositiveOptimum):
        competitive_ratio(1.0, 0.0)


def _eps_reference(eta, eta_min, gap, n, delta):
    # second implementation, written from the formula in log-space
    L = math.log(1 / delta) + 0.5 * math.log(2 / eta_min)
    return (8 * eta * (1 - eta) * L / (gap * n)) ** 0.5 + 20 * L / (gap * n)


def test_epsilon_pi():
    v = epsilon_pi(0.5, 0.1, 0.5, 10**4, 0.01)
    assert v == pytest.approx(_eps_reference(0.5, 0.1, 0.5, 10**4, 0.01), rel=1e-12)
    second = 20 * (math.log(100) + 0.5 * math.log(20)) / (0.5 * 1e4)
    assert epsilon_pi(0.0, 0.1, 0.5, 1e4, 0.01) == pytest.approx(second)
    assert epsilon_pi(1.0, 0.1, 0.5, 1e4, 0.01) == pytest.approx(second)
    first = lambda n: epsilon_pi(0.3, 0.1, 0.5, n, 0.01) - 20 * (math.log(100) + 0.5 * math.log(20)) / (0.5 * n)
    assert first(4e4) == pytest.approx(first(1e4) / 2, rel=1e-12)
    ns = np.logspace(2, 6, 20)
    vals = [epsilon_pi(0.3, 0.1, 0.5, n, 0.01) for n in ns]
    assert all(b < a for a, b in zip(vals, vals[1:])) and min(vals) >= 0


def test_mixing_bound_example():
    B = math.log(800)
    assert B == pytest.approx(6.6846, abs=1e-4)
    M = mixing_bound_M(1000, 0.1, 2, 2, 0.01, 0.5)
    assert M == pytest.approx(math.sqrt(2 * B / 500) + 20 * B / 500, rel=1e-12)
    assert M == pytest.approx(0.4309, abs=1e-4)
    taus = [10, 100, 1000, 10**4]
    Ms = [mixing_bound_M(t, 0.1, 2, 2, 0.01, 0.5) for t in taus]
    assert all(b < a for a, b in zip(Ms, Ms[1:]))


def test_k_delta_minimal():
    sched = EpisodeSchedule(10, "theory")
    k = k_delta(sched, 0.1, 2, 2, 0.01, 0.5)
    assert mixing_bound_M(sched.tau(k), 0.1, 2, 2, 0.01, 0.5) <= 0.01
    assert k == 1 or mixing_bound_M(sched.tau(k - 1), 0.1, 2, 2, 0.01, 0.5) > 0.01


def test_ell_n(fig1):
    sol = fw_solve(fig1)
    a = ell_n(fig1, sol.policy, 1000)
    u = ell_n(fig1, uniform_policy(fig1), 1000)
    assert a > 10 * u
    # ~1/n once the epsilon terms are small
    big = [ell_n(fig1, fig1_policy(0.5), n, eta_min=0.2) for n in (1e8, 1e9)]
    assert big[0] / big[1] == pytest.approx(10, rel=0.05)


def test_no_visit_bound():
    m = three_state_mdp(0.5)
    pi = fig1_policy(0.5)
    vals = [no_visit_bound(m, pi, n) for n in (100, 1000, 10**4, 10**5)]
    assert all(b < a for a, b in zip(vals[1:], vals[2:]))
    assert vals[-1] < 1e-6
    one = single_state_mdp()
    v = no_visit_bound(one, np.ones((1, 1)), 100)
    assert math.isfinite(v) and v >= 0
    with pytest.raises(BudgetTooSmall):
        no_visit_bound(m, pi, 2)
