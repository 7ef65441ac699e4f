"""Command-line interface.

Exit status: 0 on success, 1 on a domain error (invalid model, infeasible
problem, ...), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys

import numpy as np

from . import __version__
from .asymptotic import fw_solve
from .errors import ActiveMdpError
from .fmh import fmh_run
from .fwame import EpisodeSchedule, fw_ame_fmh_run, fw_ame_run, uniform_baseline_run
from .garnet import garnet_generate
from .mdp import MdpModel, StationaryPolicy, chain_from_policy, check_ergodic_assumption, load_mdp, save_mdp, uniform_policy
from .simlab import preset_catalog, preset_config, run_experiment
from .simulate import simulate_kernel_batch
from .spectral import pseudo_spectral_gap
from .stats import ObservationModel

log = logging.getLogger("activemdp")

ETA_FLOOR = 0.001


class UsageError(Exception):
    pass


def _dump(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as f:
            f.write(text + "\n")


def _load_policy(path, mdp: MdpModel) -> StationaryPolicy:
    if path in (None, "uniform"):
        return uniform_policy(mdp)
    with open(path) as f:
        d = json.load(f)
    probs = d["policy"] if isinstance(d, dict) else d
    return StationaryPolicy(np.asarray(probs, dtype=float))


def _resolve_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command}: --seed is required (an integer, or 'auto')")
    if args.seed == "auto":
        seed = secrets.randbits(32)
        log.warning("--seed auto resolved to %d", seed)
        return seed
    try:
        return int(args.seed)
    except ValueError:
        raise UsageError(f"--seed must be an integer or 'auto', got {args.seed!r}") from None


def _trivial_mdp() -> MdpModel:
    return MdpModel(np.ones((1, 1, 1)), np.zeros(1), R=1.0)


# -- subcommands -----------------------------------------------------------------


def cmd_garnet(args):
    m = garnet_generate(
        args.states, args.actions, args.branching, args.sigma_min2, args.sigma_max2, args.reversible, int(args.seed or 0)
    )
    if args.output in (None, "-"):
        from .mdp import mdp_to_dict

        _dump(mdp_to_dict(m), None)
    else:
        save_mdp(m, args.output)
    return 0


def cmd_analyze(args):
    mdp = load_mdp(args.mdp)
    pi = _load_policy(args.policy, mdp)
    ch = chain_from_policy(mdp, pi)
    out = {
        "eta": ch.eta.tolist(),
        "slem": ch.slem,
        "gap": ch.gap,
        "reversible": ch.reversible,
        "ergodic": ch.ergodic,
        "period": ch.period,
    }
    if ch.ergodic and np.all(ch.eta > 0):
        out["pseudo_spectral_gap"] = pseudo_spectral_gap(ch.P, ch.eta, args.k_max)
    if args.check_ergodic:
        out["ergodic_assumption"] = check_ergodic_assumption(mdp, args.samples, int(args.seed or 0)).as_dict()
    _dump(out, args.output)
    return 0


def cmd_solve(args):
    mdp = load_mdp(args.mdp)
    res = fw_solve(mdp, eta_floor=args.eta_floor, tol=args.tol, max_iters=args.max_iters)
    _dump(res.to_dict(), args.output)
    return 0


def cmd_fmh(args):
    mdp = load_mdp(args.mdp)
    if args.policy:
        target = _load_policy(args.policy, mdp)
    else:
        target = fw_solve(mdp, eta_floor=args.eta_floor).policy
    res = fmh_run(
        mdp,
        target,
        args.budget,
        rho=args.rho,
        delta=args.delta_slack,
        eta_floor=args.fmh_floor,
        mode=args.mode,
        geometry=args.geometry,
    )
    _dump({"policy": res.policy.probs.tolist(), "eta": res.eta1.tolist()}, args.output)
    if args.diagnostics:
        _dump(res.diagnostics(), args.diagnostics)
    return 0


def _schedule(args):
    return EpisodeSchedule(args.tau1, args.schedule, args.m)


def cmd_run(args):
    seed = _resolve_seed(args)
    if args.mdp:
        mdp = load_mdp(args.mdp)
    else:
        log.warning("no --mdp given; using the single-state single-action MDP")
        mdp = _trivial_mdp()
    n = args.budget
    sol = fw_solve(mdp, eta_floor=min(args.eta_floor, 0.5 / mdp.S))
    L_star = sol.value
    obs = ObservationModel.from_mdp(mdp)
    runs = []
    first_trace = None
    if args.algo == "fixed":
        pi = _load_policy(args.policy, mdp) if args.policy else sol.policy
        ch = chain_from_policy(mdp, pi)
        batch = simulate_kernel_batch(mdp, ch.P, n, seed, 0, range(args.runs))
        means = np.where(batch.counts > 0, batch.sum_x / np.maximum(batch.counts, 1), obs.mu_inf)
        slems = [ch.slem] * args.runs
    else:
        means, slems = [], []
        for r in range(args.runs):
            kw = dict(seed=seed, instance=0, run=r, L_star=L_star, eta_floor=args.eta_floor)
            if args.algo == "uniform":
                tr = uniform_baseline_run(mdp, n, **kw)
            else:
                lk = dict(kw, schedule=_schedule(args), start=args.start, width=args.width)
                tr = fw_ame_fmh_run(mdp, n, **lk) if args.algo == "fw-ame-fmh" else fw_ame_run(mdp, n, **lk)
            means.append(tr.final_mean)
            slems.append(tr.avg_slem)
            if first_trace is None:
                first_trace = tr
        means = np.array(means)
    for r in range(args.runs):
        loss = float(np.mean((means[r] - mdp.mu) ** 2))
        ratio = n * loss / L_star - 1.0 if L_star > 0 else None
        runs.append({"run": r, "loss": loss, "n_loss": n * loss, "ratio": ratio, "slem_avg": float(slems[r])})
    mean_loss = float(np.mean([x["loss"] for x in runs]))
    out = {
        "algo": args.algo,
        "n": n,
        "seed": seed,
        "L_star": L_star,
        "loss": mean_loss,
        "n_loss": n * mean_loss,
        "ratio": (n * mean_loss / L_star - 1.0) if L_star > 0 else None,
        "runs": runs,
    }
    if L_star <= 0:
        out["note"] = "L* = 0 (all variances are zero); competitive ratio undefined"
    if args.trace and first_trace is not None:
        first_trace.to_csv(args.trace)
    _dump(out, args.output)
    return 0


def cmd_experiment(args):
    seed = _resolve_seed(args)
    budgets = [int(b) for b in args.budgets.split(",")] if args.budgets else None
    cfg = preset_config(
        args.preset,
        seed=seed,
        out_dir=args.output,
        runs=args.runs,
        budgets=budgets,
        workers=args.workers,
        eta_floor=args.eta_floor,
    )
    if args.instances is not None:
        for g in cfg.instances:
            if g["kind"] == "garnet":
                g["count"] = args.instances
    res = run_experiment(cfg)
    for c in res.summary["cells"]:
        print(
            f"{c['group']:<12} {c['algo']:<12} n={c['n']:<6} ratio={c['ratio_of_mean']:.4f} "
            f"n_loss={c['mean_n_loss']:.4f} slem={c['mean_slem']:.3f}"
        )
    if res.failures:
        print(f"{len(res.failures)} cell(s) failed; see the summary JSON", file=sys.stderr)
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="activemdp", description="Active exploration in Markov decision processes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file whose keys override command-line flags")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("garnet", help="generate a Garnet instance")
    g.add_argument("--states", type=int, required=True)
    g.add_argument("--actions", type=int, required=True)
    g.add_argument("--branching", type=int, required=True)
    g.add_argument("--sigma-min2", type=float, default=0.01)
    g.add_argument("--sigma-max2", type=float, default=10.0)
    g.add_argument("--reversible", action="store_true")
    g.add_argument("--seed", default="0")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_garnet)

    a = sub.add_parser("analyze", help="chain and spectral report for a policy")
    a.add_argument("--mdp", required=True)
    a.add_argument("--policy", default="uniform", help="policy JSON or 'uniform'")
    a.add_argument("--k-max", type=int, default=10)
    a.add_argument("--check-ergodic", action="store_true")
    a.add_argument("--samples", type=int, default=20)
    a.add_argument("--seed", default="0")
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("solve", help="asymptotically optimal allocation")
    s.add_argument("--mdp", required=True)
    s.add_argument("--eta-floor", type=float, default=ETA_FLOOR)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", type=int, default=10000)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("fmh", help="faster-mixing surrogate policy")
    f.add_argument("--mdp", required=True)
    f.add_argument("--budget", type=int, required=True)
    f.add_argument("--policy", help="target policy JSON (default: the asymptotically optimal policy)")
    f.add_argument("--eta-floor", type=float, default=ETA_FLOOR, help="floor used when solving for the target")
    f.add_argument("--fmh-floor", type=float, default=None, help="row-sum floor (default min eta* / 2)")
    f.add_argument("--rho", type=float, default=None)
    f.add_argument("--delta-slack", type=float, default=None)
    f.add_argument("--mode", choices=["fmh", "sdp"], default="fmh")
    f.add_argument("--geometry", choices=["ball", "box"], default=None)
    f.add_argument("-o", "--output")
    f.add_argument("--diagnostics")
    f.set_defaults(func=cmd_fmh)

    r = sub.add_parser("run", help="simulate a learner or a fixed policy")
    r.add_argument("--mdp")
    r.add_argument("--algo", choices=["fw-ame", "fw-ame-fmh", "uniform", "fixed"], default="fw-ame")
    r.add_argument("--policy", help="policy JSON for --algo fixed (default: asymptotically optimal)")
    r.add_argument("--budget", type=int, required=True)
    r.add_argument("--runs", type=int, default=1)
    r.add_argument("--seed")
    r.add_argument("--eta-floor", type=float, default=ETA_FLOOR)
    r.add_argument("--schedule", choices=["experimental", "theory", "power"], default="experimental")
    r.add_argument("--m", type=int, default=3)
    r.add_argument("--tau1", type=int, default=None)
    r.add_argument("--start", choices=["adaptive", "fictitious"], default="adaptive")
    r.add_argument("--width", choices=["experimental", "theory"], default="experimental")
    r.add_argument("--trace", help="write the first run's episode trace as CSV")
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="run a preset experiment")
    e.add_argument("--preset", choices=preset_catalog(), required=True)
    e.add_argument("--seed")
    e.add_argument("--runs", type=int, default=None)
    e.add_argument("--instances", type=int, default=None, help="Garnet instances per group")
    e.add_argument("--budgets", default=None, help="comma-separated budgets")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--eta-floor", type=float, default=None)
    e.add_argument("-o", "--output", default=None)
    e.set_defaults(func=cmd_experiment)
    return p


def _apply_config(args, parser):
    if not args.config:
        return args
    with open(args.config) as f:
        overrides = json.load(f)
    if not isinstance(overrides, dict):
        raise UsageError("--config must contain a JSON object")
    for k, v in overrides.items():
        key = k.replace("-", "_")
        if key in ("command", "func", "config"):
            continue
        if not hasattr(args, key):
            raise UsageError(f"--config key {k!r} is not an option of '{args.command}'")
        setattr(args, key, v)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args = _apply_config(args, parser)
        if getattr(args, "budget", 1) is not None and getattr(args, "budget", 1) < 1:
            raise UsageError("--budget must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ActiveMdpError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
