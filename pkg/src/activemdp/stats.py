"""Running estimators, confidence widths, concentration bounds and loss metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BudgetTooSmall, DegenerateCount, GapTooSmall, NonPositiveOptimum
from .mdp import MdpModel, chain_from_policy, check_ergodic_assumption
from .spectral import pseudo_spectral_gap

__all__ = [
    "ObservationModel",
    "EstimatorState",
    "estimator_update",
    "alpha_width",
    "alpha_width_experimental",
    "loss_empirical",
    "competitive_ratio",
    "epsilon_pi",
    "ell_n",
    "mixing_bound_M",
    "k_delta",
    "no_visit_bound",
]


@dataclass(frozen=True)
class ObservationModel:
    """Per-state observation law and the predictions used before any sample.

    ``mu_inf`` and ``var_default`` are returned as mean and variance
    estimates of a state with no samples.
    """

    mu: np.ndarray
    sigma2: np.ndarray
    mode: str = "gaussian"
    R: float = 1.0
    mu_inf: float = 0.0
    var_default: float = 1.0

    @classmethod
    def from_mdp(cls, mdp: MdpModel) -> "ObservationModel":
        smax2 = mdp.sigma_max2
        # 3 sigma_max above the largest |mean|; equals 3 sigma_max for centred states
        mu_inf = 3.0 * math.sqrt(smax2) + float(np.max(np.abs(mdp.mu)))
        return cls(mdp.mu.copy(), mdp.sigma2.copy(), mdp.obs_mode, mdp.R, mu_inf, smax2)

    @property
    def sigma_max2(self) -> float:
        return float(np.max(self.sigma2))

    def sample(self, rng, s, size=None):
        sd = math.sqrt(self.sigma2[s])
        if self.mode == "gaussian":
            return self.mu[s] + sd * rng.standard_normal(size)
        # two-point law mu +- sigma: bounded, exact mean and variance
        return self.mu[s] + sd * (2.0 * rng.integers(0, 2, size) - 1.0)


@dataclass
class EstimatorState:
    """Per-state counters and sufficient statistics.

    ``mean_hat`` and ``var_hat`` are recomputed from the sums, so they agree
    with ``sum_x / T`` and ``sum_x2 / T - mean^2`` exactly. States with no
    sample report the default predictions.
    """

    counts: np.ndarray
    sum_x: np.ndarray
    sum_x2: np.ndarray
    t: int = 0
    mu_inf: float = 0.0
    var_default: float = 1.0
    n_clamped: int = 0

    @classmethod
    def empty(cls, S: int, obs: ObservationModel | None = None) -> "EstimatorState":
        mu_inf = obs.mu_inf if obs is not None else 0.0
        var_default = obs.var_default if obs is not None else 1.0
        return cls(np.zeros(S, dtype=np.int64), np.zeros(S), np.zeros(S), 0, mu_inf, var_default)

    @classmethod
    def fictitious(cls, S: int, obs: ObservationModel) -> "EstimatorState":
        """One fictitious observation at ``mu_inf`` in every state."""
        st = cls.empty(S, obs)
        st.counts[:] = 1
        st.sum_x[:] = obs.mu_inf
        st.sum_x2[:] = obs.mu_inf**2
        return st

    @property
    def S(self) -> int:
        return self.counts.shape[0]

    @property
    def mean_hat(self) -> np.ndarray:
        T = self.counts
        return np.where(T > 0, self.sum_x / np.maximum(T, 1), self.mu_inf)

    @property
    def var_hat(self) -> np.ndarray:
        T = np.maximum(self.counts, 1)
        m = self.sum_x / T
        v = np.maximum(self.sum_x2 / T - m * m, 0.0)
        return np.where(self.counts > 0, v, self.var_default)

    def update(self, s: int, x: float) -> None:
        self.counts[s] += 1
        self.sum_x[s] += x
        self.sum_x2[s] += x * x
        self.t += 1
        T = self.counts[s]
        if self.sum_x2[s] / T - (self.sum_x[s] / T) ** 2 < 0.0:
            self.n_clamped += 1

    def add_batch(self, states, xs) -> None:
        states = np.asarray(states, dtype=np.int64)
        xs = np.asarray(xs, dtype=float)
        S = self.S
        self.counts += np.bincount(states, minlength=S)
        self.sum_x += np.bincount(states, weights=xs, minlength=S)
        self.sum_x2 += np.bincount(states, weights=xs * xs, minlength=S)
        self.t += states.size

    def copy(self) -> "EstimatorState":
        return replace(self, counts=self.counts.copy(), sum_x=self.sum_x.copy(), sum_x2=self.sum_x2.copy())


def estimator_update(state: EstimatorState, s: int, x: float) -> EstimatorState:
    """Return a new state with observation ``x`` recorded at state ``s``."""
    new = state.copy()
    new.update(s, x)
    return new


def alpha_width(t, s, delta, T_s, R, S):
    """Variance confidence width ``5 R^2 sqrt(log(4 S t / delta) / T_s)``.

    ``s`` only identifies the state; the width depends on it through
    ``T_s``. Accepts arrays for ``T_s``.
    """
    T_s = np.asarray(T_s, dtype=float)
    if np.any(T_s <= 0):
        raise DegenerateCount(f"confidence width needs T_s >= 1 (state {s})")
    if t < 1 or not (0.0 < delta < 1.0):
        raise ValueError("need t >= 1 and 0 < delta < 1")
    out = 5.0 * R**2 * np.sqrt(math.log(4.0 * S * t / delta) / T_s)
    return float(out) if out.ndim == 0 else out


def alpha_width_experimental(t, T_s, sigma_max2, S):
    """Width ``0.2 sigma_max^2 sqrt(log(4 S t^2) / T_s)``, i.e. delta = 1/t."""
    T_s = np.asarray(T_s, dtype=float)
    if np.any(T_s <= 0):
        raise DegenerateCount("confidence width needs T_s >= 1")
    t = max(int(t), 1)
    out = 0.2 * sigma_max2 * np.sqrt(math.log(4.0 * S * t * t) / T_s)
    return float(out) if out.ndim == 0 else out


def loss_empirical(mean_estimates, mu, n=None):
    """Average squared estimation error over states and runs.

    Parameters
    ----------
    mean_estimates : (runs, S) array_like
    mu : (S,) array_like
    n : int, optional
        Budget; if given the normalized loss ``n * LOSS`` is returned too.

    Returns
    -------
    loss : float
    n_loss : float or None
    """
    est = np.atleast_2d(np.asarray(mean_estimates, dtype=float))
    loss = float(np.mean((est - np.asarray(mu, dtype=float)[None, :]) ** 2))
    return loss, (None if n is None else n * loss)


def competitive_ratio(normalized_loss, L_star):
    if not (L_star > 0.0):
        raise NonPositiveOptimum(f"competitive ratio needs L* > 0, got {L_star}")
    return normalized_loss / L_star - 1.0


def _log_term(delta, eta_min):
    # clamped at 0 when delta is so large the bound is vacuous
    return max(math.log(math.sqrt(2.0 / eta_min) / delta), 0.0)


def epsilon_pi(eta_s, eta_min, gap, n, delta):
    """Deviation ``|T_n(s)/n - eta(s)|`` allowed at confidence ``1 - delta``.

    ``sqrt(8 eta (1-eta) B / (gap n)) + 20 B / (gap n)`` with
    ``B = ln(sqrt(2 / eta_min) / delta)``.
    """
    B = _log_term(delta, eta_min)
    eta_s = np.asarray(eta_s, dtype=float)
    gn = gap * n
    out = np.sqrt(8.0 * eta_s * (1.0 - eta_s) * B / gn) + 20.0 * B / gn
    return float(out) if out.ndim == 0 else out


def ell_n(mdp: MdpModel, pi, n, eta_min=None):
    """Bound on ``|L_n(pi) - L(pi, eta_pi)|`` with ``delta = S A^S / n^2``.

    ``eta_min`` defaults to the smallest stationary mass seen by
    :func:`check_ergodic_assumption`.
    """
    ch = chain_from_policy(mdp, pi)
    if ch.gap < 1e-12:
        raise GapTooSmall(f"spectral gap {ch.gap:.3g} below 1e-12")
    if eta_min is None:
        eta_min = check_ergodic_assumption(mdp).eta_min_proxy
    S, A = mdp.S, mdp.A
    log_delta = math.log(S) + S * math.log(A) - 2.0 * math.log(n)
    delta = math.exp(log_delta)
    eps = epsilon_pi(ch.eta, eta_min, ch.gap, n, delta)
    eta = ch.eta
    terms = mdp.sigma2 / eta**2 * (1.0 + 2.0 * eps / eta)
    return float(terms.sum() / (S * math.sqrt(eta_min) * n * ch.gap))


def _B(delta, S, A, eta_floor):
    return math.log(S) + S * math.log(A) - math.log(delta) + 0.5 * math.log(1.0 / eta_floor)


def mixing_bound_M(tau, delta, S, A, eta_floor, gap_min):
    """Uniform frequency deviation after an episode of length ``tau``.

    ``sqrt(2B / (gap_min tau)) + 20 B / (gap_min tau)`` with
    ``B = log(S A^S sqrt(1/eta_floor) / delta)``.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    B = _B(delta, S, A, eta_floor)
    x = B / (gap_min * tau)
    return math.sqrt(2.0 * x) + 20.0 * x


def k_delta(schedule, delta, S, A, eta_floor, gap_min, k_max=10**6):
    """First episode index ``k`` with ``M(tau_k, delta) <= eta_floor``.

    ``schedule`` is anything with a ``tau(k)`` method.
    """
    for k in range(1, k_max + 1):
        if mixing_bound_M(schedule.tau(k), delta, S, A, eta_floor, gap_min) <= eta_floor:
            return k
    raise ValueError(f"no episode up to {k_max} meets the mixing threshold")


def no_visit_bound(mdp: MdpModel, pi, n, k_max=10, mu_inf=None):
    """Bound on the loss contribution of states never visited within ``n`` steps.

    Uses the pseudo-spectral gap, so reversibility is not required.
    ``mu_inf`` defaults to ``3 sigma_max + max |mu|``.
    """
    ch = chain_from_policy(mdp, pi)
    eta = ch.eta
    eta_min, eta_max = float(eta.min()), float(eta.max())
    if not n > 1.0 / eta_min:
        raise BudgetTooSmall(f"need n > 1/eta_min = {1.0 / eta_min:.4g}, got n={n}")
    if mu_inf is None:
        mu_inf = ObservationModel.from_mdp(mdp).mu_inf
    gps = pseudo_spectral_gap(ch.P, eta, k_max)
    ngp = n * gps
    expo = -ngp * (eta_min - 1.0 / n) ** 2 / (8.0 * (1.0 + 1.0 / ngp) + 40.0 * (eta_max - 1.0 / n))
    pref = n / mdp.S * float(np.sum((mu_inf - mdp.mu) ** 2)) * math.sqrt(2.0 / eta_min)
    return pref * math.exp(expo)
