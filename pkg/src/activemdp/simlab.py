"""Seeded experiment matrices: algorithms x instances x budgets x runs.

Each cell (instance, algorithm) is simulated for all runs up to the largest
budget; smaller budgets are read from snapshots of the same trajectories.
Learning algorithms never look at the final budget before it is reached, so
a snapshot at ``n`` is exactly the outcome of a run with budget ``n``.
Rows are sorted before serialization, so the CSV bytes do not depend on the
order in which cells finish.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .asymptotic import fw_solve
from .fmh import fmh_run
from .fwame import EpisodeSchedule, fw_ame_fmh_run, fw_ame_run, uniform_baseline_run
from .garnet import garnet_generate
from .mdp import chain_from_policy, load_mdp, three_state_mdp, uniform_policy
from .simulate import simulate_kernel_batch
from .stats import ObservationModel, competitive_ratio

__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ExperimentRecord",
    "ExperimentResult",
    "build_instances",
    "run_experiment",
    "preset_catalog",
    "preset_config",
    "summarize",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ["preset", "algo", "instance_seed", "run_seed", "n", "loss", "n_loss", "ratio", "slem_avg"]

LEARNERS = ("fw-ame", "fw-ame-fmh", "uniform")
FIXED = ("lambda-star", "fmh", "uniform-fixed")


def _is_known_algo(a: str) -> bool:
    if a in LEARNERS or a in FIXED:
        return True
    if a.startswith("fw-ame-m"):
        return a[len("fw-ame-m") :].isdigit() and int(a[len("fw-ame-m") :]) >= 1
    return False


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output.

    Attributes
    ----------
    preset : str
        Label written in every row.
    instances : list of dict
        Instance groups. ``{"kind": "garnet", "S", "A", "b", "count",
        "first_seed", "reversible", "sigma_min2", "sigma_max2"}``,
        ``{"kind": "three-state", "sigma2_mid"}`` or ``{"kind": "file",
        "path"}``.
    algorithms : list of str
        ``fw-ame``, ``fw-ame-fmh``, ``uniform`` (learners sharing the
        step-by-step simulator), ``fw-ame-m<k>`` (FW-AME with ``t ~ k^m``
        episodes), ``lambda-star``, ``fmh`` and ``uniform-fixed`` (fixed
        policies).
    budgets : list of int
    runs : int
    seed : int
        Master seed; run streams are keyed by ``(seed, instance index, run)``.
    out_dir : str, optional
    eta_floor : float
    workers : int
        Process-pool size; 1 runs in-process.
    quantiles : tuple of float
    """

    preset: str
    instances: list
    algorithms: list
    budgets: list
    runs: int = 20
    seed: int = 0
    out_dir: str | None = None
    eta_floor: float = 0.001
    workers: int = 1
    quantiles: tuple = (0.05, 0.95)

    def validate(self) -> "ExperimentConfig":
        if not self.instances:
            raise ValueError("no instances")
        bad = [a for a in self.algorithms if not _is_known_algo(a)]
        if bad or not self.algorithms:
            raise ValueError(f"unknown algorithms {bad}")
        if not self.budgets or any(int(b) < 1 for b in self.budgets):
            raise ValueError("budgets must be positive integers")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0.0 < self.eta_floor < 0.5:
            raise ValueError("eta_floor must lie in (0, 1/2)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        for g in self.instances:
            if g.get("kind") not in ("garnet", "three-state", "file"):
                raise ValueError(f"unknown instance kind {g.get('kind')!r}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quantiles"] = list(self.quantiles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "quantiles" in d:
            d["quantiles"] = tuple(d["quantiles"])
        return cls(**d).validate()


@dataclass(frozen=True)
class ExperimentRecord:
    preset: str
    algo: str
    instance_seed: int
    run_seed: int
    n: int
    loss: float
    n_loss: float
    ratio: float
    slem_avg: float
    group: str = ""
    regret: float = math.nan

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: dict
    failures: list = field(default_factory=list)
    csv_text: str = ""


# -- instances ---------------------------------------------------------------


def build_instances(cfg: ExperimentConfig):
    """Expand instance groups into ``(index, group label, seed, mdp)`` tuples."""
    out = []
    idx = 0
    for g in cfg.instances:
        kind = g["kind"]
        if kind == "garnet":
            S, A, b = int(g["S"]), int(g["A"]), int(g["b"])
            rev = bool(g.get("reversible", False))
            label = f"{'GR' if rev else 'G'}({S},{A},{b})"
            first = int(g.get("first_seed", 0))
            for seed in range(first, first + int(g.get("count", 1))):
                m = garnet_generate(S, A, b, g.get("sigma_min2", 0.01), g.get("sigma_max2", 10.0), rev, seed)
                out.append((idx, label, seed, m))
                idx += 1
        elif kind == "three-state":
            out.append((idx, "three-state", 0, three_state_mdp(g.get("sigma2_mid", 0.001))))
            idx += 1
        else:
            m = load_mdp(g["path"])
            out.append((idx, os.path.basename(g["path"]), int(m.seed or 0), m))
            idx += 1
    return out


# -- cells ---------------------------------------------------------------------


def _record(cfg, algo, label, inst_seed, run, n, mean_hat, mu, L_star, slem, regret=math.nan):
    loss = float(np.mean((mean_hat - mu) ** 2))
    nl = n * loss
    ratio = competitive_ratio(nl, L_star) if L_star > 0 else math.nan
    return ExperimentRecord(cfg.preset, algo, inst_seed, run, n, loss, nl, ratio, float(slem), label, float(regret))


def _learner_cell(cfg, algo, idx, label, inst_seed, mdp, L_star):
    budgets = sorted({int(b) for b in cfg.budgets})
    nmax = budgets[-1]
    recs = []
    for run in range(cfg.runs):
        kw = dict(seed=cfg.seed, instance=idx, run=run, snapshots=budgets, L_star=L_star)
        if algo == "uniform":
            tr = uniform_baseline_run(mdp, nmax, eta_floor=cfg.eta_floor, **kw)
        elif algo == "fw-ame-fmh":
            tr = fw_ame_fmh_run(mdp, nmax, eta_floor=cfg.eta_floor, **kw)
        elif algo.startswith("fw-ame-m"):
            m = int(algo[len("fw-ame-m") :])
            tr = fw_ame_run(mdp, nmax, schedule=EpisodeSchedule(mode="power", m=m), eta_floor=cfg.eta_floor, **kw)
        else:
            tr = fw_ame_run(mdp, nmax, eta_floor=cfg.eta_floor, **kw)
        for n in budgets:
            recs.append(
                _record(cfg, algo, label, inst_seed, run, n, tr.snapshots[n], mdp.mu, L_star, tr.avg_slem_until(n), tr.regret_at(n))
            )
    return recs


def _fixed_cell(cfg, algo, idx, label, inst_seed, mdp, L_star, sol):
    budgets = sorted({int(b) for b in cfg.budgets})
    obs = ObservationModel.from_mdp(mdp)
    recs = []
    for n in budgets:
        if algo == "lambda-star":
            pi = sol.policy
        elif algo == "uniform-fixed":
            pi = uniform_policy(mdp)
        else:
            pi = fmh_run(mdp, sol.policy, n).policy
        ch = chain_from_policy(mdp, pi)
        batch = simulate_kernel_batch(mdp, ch.P, n, cfg.seed, idx, range(cfg.runs))
        mh = np.where(batch.counts > 0, batch.sum_x / np.maximum(batch.counts, 1), obs.mu_inf)
        for run in range(cfg.runs):
            recs.append(_record(cfg, algo, label, inst_seed, run, n, mh[run], mdp.mu, L_star, ch.slem))
    return recs


def _run_cell(args):
    cfg, algo, idx, label, inst_seed, mdp = args
    try:
        sol = fw_solve(mdp, eta_floor=cfg.eta_floor)
        if algo in FIXED:
            return _fixed_cell(cfg, algo, idx, label, inst_seed, mdp, sol.value, sol), None
        return _learner_cell(cfg, algo, idx, label, inst_seed, mdp, sol.value), None
    except Exception as exc:  # a failed cell must not sink the matrix
        log.warning("cell %s/%s/%s failed: %r", label, inst_seed, algo, exc)
        return [], {"algo": algo, "group": label, "instance_seed": inst_seed, "error": repr(exc)}


# -- aggregation ---------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.12g}"
    return v


def _sort_key(r: ExperimentRecord):
    return (r.group, r.algo, r.instance_seed, r.run_seed, r.n)


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in sorted(records, key=_sort_key):
        w.writerow({k: _fmt(v) for k, v in r.row().items()})
    return buf.getvalue()


def summarize(records, quantiles=(0.05, 0.95)) -> dict:
    """Means and quantiles per ``(group, algo, n)``.

    ``ratio_of_mean`` is the competitive ratio of the run-averaged loss per
    instance, averaged over instances (the aggregate reported in tables).
    """
    cells = {}
    for r in records:
        cells.setdefault((r.group, r.algo, r.n), []).append(r)
    out = []
    for (group, algo, n), rs in sorted(cells.items()):
        nl = np.array([r.n_loss for r in rs])
        ratio = np.array([r.ratio for r in rs])
        per_inst = {}
        for r in rs:
            per_inst.setdefault(r.instance_seed, []).append(r.ratio)
        entry = {
            "group": group,
            "algo": algo,
            "n": n,
            "count": len(rs),
            "instances": len(per_inst),
            "mean_loss": float(np.mean([r.loss for r in rs])),
            "mean_n_loss": float(nl.mean()),
            "mean_ratio": float(ratio.mean()),
            "ratio_of_mean": float(np.mean([np.mean(v) for v in per_inst.values()])),
            "median_ratio": float(np.median(ratio)),
            "mean_slem": float(np.mean([r.slem_avg for r in rs])),
        }
        reg = np.array([r.regret for r in rs])
        if np.all(np.isfinite(reg)):
            entry["median_regret"] = float(np.median(reg))
            entry["mean_regret"] = float(reg.mean())
        for q in quantiles:
            entry[f"n_loss_q{round(100 * q):02d}"] = float(np.quantile(nl, q))
            entry[f"ratio_q{round(100 * q):02d}"] = float(np.quantile(ratio, q))
        out.append(entry)
    return {"cells": out}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every (instance, algorithm) cell and write CSV plus JSON summary.

    Files written to ``cfg.out_dir`` (when set): ``<preset>.csv``,
    ``<preset>_summary.json`` and ``<preset>_config.json``.
    """
    cfg.validate()
    insts = build_instances(cfg)
    jobs = [(cfg, a, idx, label, seed, m) for idx, label, seed, m in insts for a in cfg.algorithms]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    records = [r for recs, _ in results for r in recs]
    failures = [f for _, f in results if f is not None]
    records.sort(key=_sort_key)
    summary = summarize(records, cfg.quantiles)
    summary["preset"] = cfg.preset
    summary["failures"] = failures
    text = to_csv(records)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, f"{cfg.preset}.csv"), "w", newline="") as f:
            f.write(text)
        with open(os.path.join(cfg.out_dir, f"{cfg.preset}_summary.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        with open(os.path.join(cfg.out_dir, f"{cfg.preset}_config.json"), "w") as f:
            json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
    return ExperimentResult(cfg, records, summary, failures, text)


# -- presets -------------------------------------------------------------------

# reversible Garnet seeds used by the mixing-curves preset
FAST_MIXING_SEED = 0
SLOW_MIXING_SEED = 14


def preset_catalog() -> list:
    """Names of the built-in experiments."""
    return ["three-state", "garnet-table", "mixing-curves", "schedule-sweep"]


def preset_config(name: str, seed: int = 0, out_dir=None, **overrides) -> ExperimentConfig:
    """Configuration of a built-in experiment.

    ``three-state``
        LOSS of the asymptotically optimal policy against its fast-mixing
        surrogate on the deterministic three-state MDP, as a function of n.
    ``garnet-table``
        Competitive ratio of FW-AME and the uniform policy at n = 500, 1000
        on Garnet G(S, 3, 2) for S = 5, 10 (20 runs per instance).
    ``mixing-curves``
        Normalized loss with 5% / 95% bands for FW-AME, FW-AME with FMH-SDP
        and uniform on a fast-mixing and a slow-mixing reversible Garnet.
    ``schedule-sweep``
        FW-AME with episode starts ``t ~ k^m``, m = 1..6, on one Garnet.
    """
    if name == "three-state":
        cfg = ExperimentConfig(
            "three-state", [{"kind": "three-state", "sigma2_mid": 0.001}], ["lambda-star", "fmh"], [100, 200, 300, 500, 700, 1000], runs=100
        )
    elif name == "garnet-table":
        cfg = ExperimentConfig(
            "garnet-table",
            [
                {"kind": "garnet", "S": 5, "A": 3, "b": 2, "count": 100, "first_seed": 0},
                {"kind": "garnet", "S": 10, "A": 3, "b": 2, "count": 100, "first_seed": 1000},
            ],
            ["fw-ame", "uniform"],
            [500, 1000],
            runs=20,
        )
    elif name == "mixing-curves":
        cfg = ExperimentConfig(
            "mixing-curves",
            [
                {"kind": "garnet", "S": 5, "A": 3, "b": 3, "count": 1, "first_seed": FAST_MIXING_SEED, "reversible": True},
                {"kind": "garnet", "S": 10, "A": 2, "b": 2, "count": 1, "first_seed": SLOW_MIXING_SEED, "reversible": True},
            ],
            ["fw-ame", "fw-ame-fmh", "uniform"],
            [250, 500, 1000, 1500, 2000],
            runs=20,
        )
    elif name == "schedule-sweep":
        cfg = ExperimentConfig(
            "schedule-sweep",
            [{"kind": "garnet", "S": 5, "A": 3, "b": 2, "count": 1, "first_seed": 0}],
            [f"fw-ame-m{m}" for m in range(1, 7)],
            [500, 1000, 2000],
            runs=20,
        )
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {preset_catalog()}")
    cfg.seed = seed
    cfg.out_dir = out_dir
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()
