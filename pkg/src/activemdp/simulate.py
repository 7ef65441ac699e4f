"""Seeded trajectory simulation.

Every run owns a Philox stream keyed by ``(master_seed, instance, run)``.
The key deliberately omits the algorithm, so two algorithms evaluated on the
same ``(instance, run)`` see the same initial state, the same transition
uniforms and the same per-state observation noise (the ``k``-th visit to
state ``s`` always reads ``z[s, k]``). This common-random-numbers design
makes paired comparisons between policies far less noisy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MdpModel

__all__ = [
    "run_generator",
    "RunStreams",
    "make_streams",
    "BatchResult",
    "simulate_kernel_batch",
]


def run_generator(master_seed: int, instance: int, run: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(instance), int(run)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class RunStreams:
    """Pre-drawn randomness of one run.

    Attributes
    ----------
    s0 : int
        Initial state.
    u : (n,) ndarray
        Uniforms driving the step taken at each time ``t`` (the last one
        only selects an action).
    z : (S, n) ndarray
        Standard normals (or Rademacher signs in bounded mode), indexed by
        state and visit number.
    """

    s0: int
    u: np.ndarray
    z: np.ndarray


def make_streams(master_seed, instance, run, S, n, init="uniform", mode="gaussian") -> RunStreams:
    g = run_generator(master_seed, instance, run)
    s0 = int(g.integers(S))
    if init != "uniform":
        s0 = int(init)
    u = g.random(n)
    if mode == "gaussian":
        z = g.standard_normal((S, n))
    else:
        z = 2.0 * g.integers(0, 2, (S, n)).astype(float) - 1.0
    return RunStreams(s0, u, z)


def next_state(cum_row, u):
    # inverse-CDF sampling; clip guards against a row summing to 1 - 1ulp
    return min(int(np.searchsorted(cum_row, u, side="right")), cum_row.shape[0] - 1)


@dataclass
class BatchResult:
    counts: np.ndarray
    sum_x: np.ndarray
    sum_x2: np.ndarray
    first_state: np.ndarray

    @property
    def mean_hat(self):
        return self.sum_x / np.maximum(self.counts, 1)


def simulate_kernel_batch(mdp: MdpModel, P, n, master_seed, instance, runs, init="uniform", chunk=1000) -> BatchResult:
    """Run a fixed Markov kernel for ``n`` steps in many seeded runs.

    A sample is observed at every visited state, including the initial one,
    so ``counts.sum(axis=1) == n``.

    Parameters
    ----------
    mdp : MdpModel
        Supplies the observation means and variances.
    P : (S, S) array_like
        Kernel induced by the policy being evaluated.
    n : int
        Budget (number of visited states).
    master_seed, instance : int
    runs : sequence of int
        Run indices; results are in this order.
    init : "uniform" or int
    chunk : int
        Runs processed together; bounds memory at ``chunk * S * n`` doubles.
    """
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    sd = np.sqrt(mdp.sigma2)
    runs = list(runs)
    out_c = np.zeros((len(runs), S), dtype=np.int64)
    out_s = np.zeros((len(runs), S))
    out_q = np.zeros((len(runs), S))
    out_f = np.zeros(len(runs), dtype=np.int64)
    for lo in range(0, len(runs), chunk):
        ids = runs[lo : lo + chunk]
        R = len(ids)
        streams = [make_streams(master_seed, instance, r, S, n, init, mdp.obs_mode) for r in ids]
        s = np.array([st.s0 for st in streams], dtype=np.int64)
        U = np.stack([st.u for st in streams], axis=1)
        Z = np.stack([st.z for st in streams], axis=0)
        cnt = np.zeros((R, S), dtype=np.int64)
        sx = np.zeros((R, S))
        sq = np.zeros((R, S))
        rows = np.arange(R)
        out_f[lo : lo + R] = s
        for t in range(n):
            k = cnt[rows, s]
            x = mdp.mu[s] + sd[s] * Z[rows, s, k]
            cnt[rows, s] += 1
            sx[rows, s] += x
            sq[rows, s] += x * x
            if t < n - 1:
                s = np.minimum((U[t][:, None] >= cum[s]).sum(axis=1), S - 1)
        out_c[lo : lo + R] = cnt
        out_s[lo : lo + R] = sx
        out_q[lo : lo + R] = sq
    return BatchResult(out_c, out_s, out_q, out_f)
