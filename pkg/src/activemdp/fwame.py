"""Frank-Wolfe active exploration (FW-AME) and its fast-mixing variant.

The learner runs in episodes. At the start of episode ``k`` it linearizes an
optimistic version of the loss at the empirical state-action frequency
``lam_tilde_k``, calls the linear oracle to get a vertex ``psi_hat``, and
executes the induced policy for ``tau_k`` steps. The frequency table is then
updated with the Frank-Wolfe step ``beta_k = tau_k / (t_{k+1} - 1)``, which
keeps ``lam_tilde`` equal to the running empirical frequency of all steps.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotic import fw_solve, loss_lambda
from .errors import ActiveMdpError, DegenerateVariances, Infeasible, NotIrreducible, ZeroCount, ZeroMarginal
from .fmh import delta_schedule, fmh_run
from .mdp import MdpModel, chain_from_policy, induced_kernel, uniform_policy
from .polytope import LinearMinOracle, lambda_to_policy
from .simulate import make_streams
from .spectral import slem_of
from .stats import EstimatorState, ObservationModel, alpha_width, alpha_width_experimental

__all__ = [
    "EpisodeSchedule",
    "EpisodeRecord",
    "LearnerTrace",
    "optimistic_gradient",
    "fw_ame_run",
    "fw_ame_fmh_run",
    "uniform_baseline_run",
    "TRACE_COLUMNS",
    "regret_exponent",
]

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["episode", "t", "loss_L_of_lambda_tilde", "regret_vs_Lstar", "slem_executed", "min_marginal"]


@dataclass(frozen=True)
class EpisodeSchedule:
    """Episode start times ``t_k`` (1-based) and lengths ``tau_k = t_{k+1} - t_k``.

    Modes
    -----
    ``"theory"``
        ``t_k = tau1 (k - 1)^3 + 1``.
    ``"experimental"``
        ``t_1 = 1`` and ``t_k = tau1 + (k - 1)^3`` for ``k >= 2``.
    ``"power"``
        ``t_k = tau1 (k - 1)^m + 1``; ``m = 3`` coincides with ``"theory"``.

    ``tau1 = None`` means the first episode length is chosen online (see
    :meth:`with_tau1`).
    """

    tau1: int | None = None
    mode: str = "experimental"
    m: int = 3

    def __post_init__(self):
        if self.mode not in ("theory", "experimental", "power"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.tau1 is not None and self.tau1 < 1:
            raise ValueError("tau1 must be >= 1")
        if self.m < 1:
            raise ValueError("exponent m must be >= 1")

    @property
    def exponent(self) -> int:
        return 3 if self.mode != "power" else self.m

    def with_tau1(self, tau1: int) -> "EpisodeSchedule":
        return EpisodeSchedule(int(tau1), self.mode, self.m)

    def t(self, k: int) -> int:
        if k < 1:
            raise ValueError("episodes are numbered from 1")
        if self.tau1 is None:
            raise ValueError("tau1 has not been fixed yet")
        if self.mode == "experimental":
            return 1 if k == 1 else self.tau1 + (k - 1) ** 3
        return self.tau1 * (k - 1) ** self.exponent + 1

    def tau(self, k: int) -> int:
        return self.t(k + 1) - self.t(k)

    def beta(self, k: int) -> float:
        return self.tau(k) / (self.t(k + 1) - 1)

    def episode_of(self, t: int) -> int:
        """Episode containing time ``t``."""
        k = 1
        while self.t(k + 1) <= t:
            k += 1
        return k


def regret_exponent(m: int) -> float:
    """Rate exponent ``theta`` of the regret bound under ``t ~ k^m``.

    The regret recurrence behaves like ``y' = -y/x + 1/x^2 + x^{-(m+1)/2}``
    in the episode index ``x``, so ``x y(x) = log x + int x^{(1-m)/2}`` and
    ``y`` decays as ``k^{-min(1, (m-1)/2)}`` up to logs. In time this is
    ``t^{-theta}`` with ``theta = min(1, (m-1)/2) / m``, maximal (1/3) at
    ``m = 3``.
    """
    if m < 1:
        raise ValueError("exponent m must be >= 1")
    return min(1.0, (m - 1) / 2.0) / m


@dataclass
class EpisodeRecord:
    k: int
    t_start: int
    length: int
    policy: np.ndarray
    psi_tilde: np.ndarray
    lam_tilde: np.ndarray
    slem_executed: float
    loss_L: float
    regret: float
    fmh_used: bool = False


@dataclass
class LearnerTrace:
    """Everything recorded during one learning run.

    ``snapshots`` maps a budget ``n`` to the mean estimates available after
    exactly ``n`` observations, and ``sa_snapshots`` to the state-action
    visit counts at that time.
    """

    algo: str
    n: int
    episodes: list = field(default_factory=list)
    estimator: EstimatorState | None = None
    lam_tilde: np.ndarray | None = None
    sa_counts: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)
    sa_snapshots: dict = field(default_factory=dict)
    L_star: float = float("nan")
    tau1: int | None = None
    fmh_failures: list = field(default_factory=list)
    _mdp: MdpModel | None = field(default=None, repr=False)

    @property
    def avg_slem(self) -> float:
        """Average SLEM of executed policies, weighted by steps executed."""
        w = np.array([e.length for e in self.episodes], dtype=float)
        v = np.array([e.slem_executed for e in self.episodes], dtype=float)
        if w.sum() == 0:
            return float("nan")
        return float(w @ v / w.sum())

    def avg_slem_until(self, n: int) -> float:
        """Step-weighted average SLEM over the first ``n`` steps."""
        tot, acc = 0, 0.0
        for e in self.episodes:
            w = max(0, min(e.length, n - e.t_start + 1))
            tot += w
            acc += w * e.slem_executed
        return acc / tot if tot else float("nan")

    def regret_at(self, n: int) -> float:
        """``L(lam_tilde) - L*`` with ``lam_tilde`` the visit frequencies after ``n`` steps."""
        sa = self.sa_snapshots[n]
        lam = sa / sa.sum()
        return _loss_or_inf(self._mdp, lam) - self.L_star

    @property
    def final_mean(self) -> np.ndarray:
        return self.estimator.mean_hat

    def rows(self):
        for e in self.episodes:
            yield {
                "episode": e.k,
                "t": e.t_start,
                "loss_L_of_lambda_tilde": e.loss_L,
                "regret_vs_Lstar": e.regret,
                "slem_executed": e.slem_executed,
                "min_marginal": float(e.lam_tilde.sum(axis=1).min()),
            }

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


def optimistic_gradient(est: EstimatorState, lam, t, sigma_max2=None, rule="experimental", delta=None, R=None, var_hat=None):
    """Gradient of the loss with variances replaced by upper confidence values.

    Returns ``-(var_hat(s) + alpha(s)) / (S m(s)^2)`` repeated over actions,
    where ``m`` is the state marginal of ``lam``.

    Parameters
    ----------
    est : EstimatorState
    lam : (S, A) array_like
    t : int
        Current time (number of observations so far).
    sigma_max2 : float, optional
        Scale of the experimental width; defaults to ``est.var_default``.
    rule : {"experimental", "theory"}
        Width ``0.2 sigma_max^2 sqrt(log(4 S t^2) / T)`` or
        ``5 R^2 sqrt(log(4 S t / delta) / T)``.
    delta, R : float
        Needed by the theory rule; ``delta`` defaults to ``1 / (t + 1)``.
    var_hat : (S,) array_like, optional
        Variance estimates to use instead of ``est.var_hat``.

    Raises
    ------
    ZeroMarginal
        If a state marginal of ``lam`` is zero.
    ZeroCount
        If a state has not been observed.
    """
    lam = np.asarray(lam, dtype=float)
    S = lam.shape[0]
    m = lam.sum(axis=1)
    if np.any(m <= 0.0):
        raise ZeroMarginal(f"states {np.flatnonzero(m <= 0).tolist()} have zero frequency")
    T = est.counts
    if np.any(T <= 0):
        raise ZeroCount(f"states {np.flatnonzero(T <= 0).tolist()} have no observation")
    t = max(int(t), 1)
    if rule == "experimental":
        smax2 = est.var_default if sigma_max2 is None else sigma_max2
        alpha = alpha_width_experimental(t, T, smax2, S)
    elif rule == "theory":
        if R is None:
            raise ValueError("theory width needs R")
        d = 1.0 / (t + 1) if delta is None else delta
        alpha = alpha_width(t, None, d, T, R, S)
    else:
        raise ValueError(f"unknown width rule {rule!r}")
    v = est.var_hat if var_hat is None else np.asarray(var_hat, dtype=float)
    g = -(v + alpha) / (S * m * m)
    return np.repeat(g[:, None], lam.shape[1], axis=1)


class _Walker:
    """Step-by-step simulator sharing the seeded streams of the batch simulator.

    At time ``t`` the walker observes the current state, then uses ``u[t-1]``
    to draw the action and the next state jointly from
    ``pi(a|s) p(s'|s, a)``.
    """

    def __init__(self, mdp: MdpModel, est: EstimatorState, n, master_seed, instance, run, init="uniform"):
        self.mdp = mdp
        self.S, self.A = mdp.S, mdp.A
        st = make_streams(master_seed, instance, run, mdp.S, n, init, mdp.obs_mode)
        self.u = st.u
        self.z = st.z
        self.s = st.s0
        self.n = n
        self.t = 0
        self.est = est
        # visit counters for the noise stream exclude fictitious samples
        self.visits = np.zeros(mdp.S, dtype=np.int64)
        self.sa = np.zeros((mdp.S, mdp.A), dtype=np.int64)
        self.sd = np.sqrt(mdp.sigma2)
        self.snap_at = {}
        self.snapshots = {}
        self.sa_snapshots = {}

    def joint_cum(self, probs):
        j = probs[:, :, None] * self.mdp.p
        cum = np.cumsum(j.reshape(self.S, -1), axis=1)
        cum[:, -1] = 1.0
        return cum

    def run(self, probs, steps, stop=None):
        """Execute ``probs`` for ``steps`` steps, or until ``stop(walker)``."""
        cum = self.joint_cum(probs)
        ep = np.zeros((self.S, self.A), dtype=np.int64)
        S = self.S
        last = cum.shape[1] - 1
        mu, sd, z, u = self.mdp.mu, self.sd, self.z, self.u
        est = self.est
        done = 0
        while done < steps and self.t < self.n:
            s = self.s
            x = mu[s] + sd[s] * z[s, self.visits[s]]
            self.visits[s] += 1
            est.update(s, x)
            j = min(int(np.searchsorted(cum[s], u[self.t], side="right")), last)
            a, nxt = divmod(j, S)
            ep[s, a] += 1
            self.t += 1
            done += 1
            if self.t in self.snap_at:
                self.snapshots[self.t] = est.mean_hat.copy()
                self.sa_snapshots[self.t] = (self.sa + ep).copy()
            self.s = nxt
            if stop is not None and stop(self):
                break
        self.sa += ep
        return ep


def _executed_slem(mdp, probs, eta_hint=None):
    try:
        return float(chain_from_policy(mdp, probs).slem)
    except (NotIrreducible, ActiveMdpError):
        P = induced_kernel(mdp, probs)
        if eta_hint is None or np.any(eta_hint <= 0):
            return 1.0
        return float(min(slem_of(P, eta_hint / eta_hint.sum()), 1.0))


def _loss_or_inf(mdp, lam):
    return loss_lambda(mdp, lam) if np.all(lam.sum(axis=1) > 0) else math.inf


def _L_star(mdp, eta_floor):
    return fw_solve(mdp, eta_floor=eta_floor).value


def _learn(
    mdp: MdpModel,
    n: int,
    schedule: EpisodeSchedule,
    eta_floor: float,
    seed: int,
    instance: int,
    run: int,
    init: str,
    asm1: str,
    rule: str,
    delta,
    snapshots,
    L_star,
    use_fmh: bool,
    fmh_kwargs: dict,
    obs: ObservationModel | None,
) -> LearnerTrace:
    if n < 1:
        raise ValueError("budget n must be >= 1")
    obs = ObservationModel.from_mdp(mdp) if obs is None else obs
    S, A = mdp.S, mdp.A
    if L_star is None:
        L_star = _L_star(mdp, eta_floor)
    algo = "fw-ame-fmh" if use_fmh else "fw-ame"
    trace = LearnerTrace(algo, n, L_star=L_star)
    est = EstimatorState.fictitious(S, obs) if asm1 == "fictitious" else EstimatorState.empty(S, obs)
    w = _Walker(mdp, est, n, seed, instance, run, init)
    w.snap_at = {int(b) for b in (snapshots or ()) if 1 <= int(b) <= n}
    oracle = LinearMinOracle(mdp, eta_floor)
    unif = uniform_policy(mdp).probs

    def record(k, t0, length, probs, ep, lam_t, used, eta_hint):
        psi = ep / max(length, 1)
        L = _loss_or_inf(mdp, lam_t)
        trace.episodes.append(
            EpisodeRecord(k, t0, length, probs, psi, lam_t.copy(), _executed_slem(mdp, probs, eta_hint), L, L - L_star, used)
        )

    if asm1 == "adaptive":
        # first episode: uniform policy until every state has a sample
        ep = w.run(unif, n, stop=lambda wk: bool(np.all(wk.visits > 0)))
        sched = schedule.with_tau1(w.t)
        lam = w.sa / max(w.t, 1)
        record(1, 1, w.t, unif, ep, lam, False, None)
        k = 2
    elif asm1 == "fictitious":
        sched = schedule if schedule.tau1 is not None else schedule.with_tau1(1)
        lam = np.full((S, A), 1.0 / (S * A))
        k = 1
    else:
        raise ValueError(f"unknown start mode {asm1!r}")
    trace.tau1 = sched.tau1

    while w.t < n:
        t0 = w.t + 1
        if t0 != sched.t(k):
            raise RuntimeError(f"episode {k} starts at {t0}, schedule says {sched.t(k)}")
        # states known only through their fictitious sample use the default variance
        var = np.where(w.visits > 0, est.var_hat, est.var_default) if asm1 == "fictitious" else None
        # unvisited states give an infinite gradient; evaluate just inside the floor instead
        lam_eval = np.maximum(lam, eta_floor / A) if np.any(lam.sum(axis=1) <= 0) else lam
        grad = optimistic_gradient(est, lam_eval, w.t, rule=rule, delta=delta, R=obs.R, var_hat=var)
        res = oracle(grad)
        psi_hat = res.lam
        pi_plus = lambda_to_policy(psi_hat, repair=True).probs
        probs, used = pi_plus, False
        tau_k = sched.tau(k)
        if use_fmh:
            probs, used = _fmh_policy(mdp, est, psi_hat, pi_plus, tau_k, k, trace, fmh_kwargs)
        length = min(tau_k, n - w.t)
        ep = w.run(probs, length)
        psi_t = ep / tau_k
        beta = sched.beta(k)
        if length == tau_k:
            lam = beta * psi_t + (1.0 - beta) * lam
        else:
            # truncated last episode: frequencies over what was executed
            lam = w.sa / w.t
        record(k, t0, length, probs, ep, lam, used, psi_hat.sum(axis=1))
        k += 1

    trace.estimator = est
    trace.lam_tilde = lam
    trace.sa_counts = w.sa.copy()
    trace.snapshots = w.snapshots
    trace.snapshots[n] = est.mean_hat.copy()
    trace.sa_snapshots = w.sa_snapshots
    trace.sa_snapshots[n] = w.sa.copy()
    trace._mdp = mdp
    return trace


def _fmh_policy(mdp, est, psi_hat, pi_plus, tau_k, k, trace, kw):
    eta_star = psi_hat.sum(axis=1)
    try:
        d = delta_schedule(est.var_hat, tau_k)
        res = fmh_run(
            mdp,
            eta_star,
            n=tau_k,
            delta=d,
            eta_floor=float(eta_star.min()) / 2.0,
            mode="sdp",
            geometry="box",
            P_star=induced_kernel(mdp, pi_plus),
            **kw,
        )
        return res.policy.probs, True
    except (Infeasible, DegenerateVariances, ActiveMdpError, ValueError) as exc:
        log.info("episode %d: fast-mixing step failed (%s); executing the oracle policy", k, exc)
        trace.fmh_failures.append((k, repr(exc)))
        return pi_plus, False


def fw_ame_run(
    mdp: MdpModel,
    n: int,
    schedule: EpisodeSchedule | None = None,
    eta_floor: float = 0.001,
    seed: int = 0,
    instance: int = 0,
    run: int = 0,
    init="uniform",
    start: str = "adaptive",
    width: str = "experimental",
    delta=None,
    snapshots=(),
    L_star=None,
    obs: ObservationModel | None = None,
) -> LearnerTrace:
    """Run FW-AME for ``n`` steps.

    Parameters
    ----------
    mdp : MdpModel
    n : int
        Budget (number of observations).
    schedule : EpisodeSchedule, optional
        Defaults to the experimental cubic schedule with adaptive ``tau1``.
    eta_floor : float
        Oracle floor; state marginals of ``psi_hat`` are ``>= 2 eta_floor``.
    seed, instance, run : int
        Select the common-random-number stream.
    start : {"adaptive", "fictitious"}
        ``"adaptive"`` runs the uniform policy until every state has a sample
        and sets ``tau1`` to that time. ``"fictitious"`` seeds each state with
        one sample at ``mu_inf`` and starts the oracle from the uniform table.
    width : {"experimental", "theory"}
        Confidence-width rule of the optimistic gradient.
    snapshots : iterable of int
        Budgets at which the mean estimates are recorded.
    L_star : float, optional
        Optimal asymptotic loss for the regret column (solved if omitted).

    Returns
    -------
    LearnerTrace
    """
    schedule = EpisodeSchedule() if schedule is None else schedule
    return _learn(mdp, n, schedule, eta_floor, seed, instance, run, init, start, width, delta, snapshots, L_star, False, {}, obs)


def fw_ame_fmh_run(
    mdp: MdpModel,
    n: int,
    schedule: EpisodeSchedule | None = None,
    eta_floor: float = 0.001,
    seed: int = 0,
    instance: int = 0,
    run: int = 0,
    init="uniform",
    start: str = "adaptive",
    width: str = "experimental",
    delta=None,
    snapshots=(),
    L_star=None,
    obs: ObservationModel | None = None,
    p1_kwargs: dict | None = None,
) -> LearnerTrace:
    """FW-AME where each oracle policy is replaced by a faster-mixing one.

    Each episode solves the spectral-norm problem around the oracle
    marginals with per-state slack ``delta_schedule(var_hat, tau_k)`` and
    executes the projected policy. When that step fails the oracle policy
    is executed and the failure is logged in ``trace.fmh_failures``.
    Other arguments are as in :func:`fw_ame_run`.
    """
    schedule = EpisodeSchedule() if schedule is None else schedule
    kw = {"max_iters": 200, "window": 100, "tol": 1e-6, "step_scale": 0.3}
    kw.update(p1_kwargs or {})
    return _learn(mdp, n, schedule, eta_floor, seed, instance, run, init, start, width, delta, snapshots, L_star, True, kw, obs)


def uniform_baseline_run(mdp: MdpModel, n: int, seed=0, instance=0, run=0, init="uniform", snapshots=(), L_star=None, eta_floor=0.001, obs=None) -> LearnerTrace:
    """Execute the uniform policy for ``n`` steps on the same random streams."""
    obs = ObservationModel.from_mdp(mdp) if obs is None else obs
    if L_star is None:
        L_star = _L_star(mdp, eta_floor)
    est = EstimatorState.empty(mdp.S, obs)
    w = _Walker(mdp, est, n, seed, instance, run, init)
    w.snap_at = {int(b) for b in (snapshots or ()) if 1 <= int(b) <= n}
    probs = uniform_policy(mdp).probs
    ep = w.run(probs, n)
    lam = ep / n
    L = _loss_or_inf(mdp, lam)
    trace = LearnerTrace("uniform", n, L_star=L_star)
    trace.episodes.append(EpisodeRecord(1, 1, n, probs, lam, lam, _executed_slem(mdp, probs), L, L - L_star))
    trace.estimator = est
    trace.lam_tilde = lam
    trace.sa_counts = w.sa.copy()
    trace.snapshots = w.snapshots
    trace.snapshots[n] = est.mean_hat.copy()
    trace.sa_snapshots = w.sa_snapshots
    trace.sa_snapshots[n] = w.sa.copy()
    trace._mdp = mdp
    return trace
