import sys

import numpy as np
import pytest

from activemdp.mdp import MdpModel, StationaryPolicy, three_state_mdp


def random_reversible_chain(rng, S, density=0.6):
    """Random kernel reversible w.r.t. its stationary law (symmetric weights)."""
    W = rng.random((S, S)) * (rng.random((S, S)) < density)
    W = W + W.T + np.diag(rng.random(S) + 0.05)
    P = W / W.sum(axis=1, keepdims=True)
    eta = W.sum(axis=1) / W.sum()
    return P, eta


def flip_mdp(q=0.3):
    p = np.array([[[1 - q, q]], [[q, 1 - q]]])
    return MdpModel(p, [1.0, 1.0], R=2.0)


def swap_mdp():
    """Two states, both actions deterministically swap the state."""
    p = np.zeros((2, 2, 2))
    p[0, :, 1] = 1.0
    p[1, :, 0] = 1.0
    return MdpModel(p, [1.0, 1.0], R=2.0)


def single_state_mdp(A=1, sigma2=1.0):
    return MdpModel(np.ones((1, A, 1)), [sigma2], R=2.0 * max(sigma2, 1e-12) ** 0.5 + 1.0)


def fig1_policy(q=0.9):
    # self-loop q at both ends, uniform in the middle
    return StationaryPolicy(np.array([[q, 1 - q], [0.5, 0.5], [1 - q, q]]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fig1():
    return three_state_mdp(0.001)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
