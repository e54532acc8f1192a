"""Command-line front end.

Subcommands: ``run`` (Monte-Carlo regret experiment), ``verify`` (pathwise
coupling identity), ``oracle`` (exact DP bracket), ``events`` (threshold
proximity tail frequencies), ``martingale`` (re-solving threshold drift),
``fit`` (log-log exponent of an emitted csv), ``report`` (SVG line plot).

Exit codes: 0 success, 1 validation/usage failure, 2 assertion or acceptance
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import coupling, dp_oracle, harness
from .distributions import GapStructure, parse_model
from .errors import (
    ConfigurationError,
    CouplingError,
    DomainError,
    FitError,
    SizeError,
    UnsupportedModelError,
)
from .policies import POLICY_NAMES, CwGConfig, draw_path, run_policy, write_trace_csv

RESIDUAL_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    """argparse with the documented exit-code contract (usage errors -> 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_dist_flags(p: argparse.ArgumentParser):
    p.add_argument("--dist", required=True,
                   help="distribution selector, e.g. uniform | fbeta:beta=0 | "
                        "discrete:support=..;mass=.. | pwuniform:intervals=..;weights=..")
    p.add_argument("--gaps", default=None,
                   help="override gap quantiles, comma list (endpoints 0,1 added if missing)")
    p.add_argument("--epsilon0", type=float, default=None, help="override minimum cluster mass")
    p.add_argument("--beta", type=float, default=None, help="override cluster density exponent")
    p.add_argument("--delta", type=float, default=None, help="override atom-spacing slack")


def _add_budget_flags(p: argparse.ArgumentParser):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--budget", type=int, default=None, help="fixed hiring budget")
    group.add_argument("--budget-ratio", type=float, default=0.5,
                       help="budget = floor(ratio * T) (default 0.5)")


def _model_from_args(args):
    model = parse_model(args.dist)
    gaps = model.gaps
    changed = False
    if args.gaps is not None:
        qs = [float(tok) for tok in args.gaps.split(",") if tok.strip()]
        if not qs or qs[0] != 0.0:
            qs = [0.0] + qs
        if qs[-1] != 1.0:
            qs = qs + [1.0]
        gaps = GapStructure(tuple(qs), beta=gaps.beta, epsilon0=gaps.epsilon0,
                            delta=gaps.delta)
        changed = True
    kwargs = {}
    if args.epsilon0 is not None:
        kwargs["epsilon0"] = args.epsilon0
    if args.beta is not None:
        kwargs["beta"] = args.beta
    if args.delta is not None:
        kwargs["delta"] = args.delta
    if kwargs:
        gaps = GapStructure(gaps.quantiles, **{
            "beta": gaps.beta, "epsilon0": gaps.epsilon0, "delta": gaps.delta, **kwargs,
        })
        changed = True
    return model.with_gaps(gaps) if changed else model


def _budget_args(args, parser):
    if args.budget is not None:
        return int(args.budget), None
    return None, float(args.budget_ratio)


def _budget_for(args, horizon: int) -> int:
    if args.budget is not None:
        b = int(args.budget)
    else:
        b = int(np.floor(args.budget_ratio * horizon))
    if not 1 <= b <= horizon:
        raise ConfigurationError(f"budget {b} out of range [1, {horizon}]")
    return b


def _cmd_run(args) -> int:
    model = _model_from_args(args)
    budget, ratio = _budget_args(args, None)
    config = harness.ExperimentConfig(
        model=model,
        policies=tuple(tok.strip() for tok in args.policy.split(",") if tok.strip()),
        horizons=harness.parse_horizons(args.horizons),
        reps=args.reps,
        seed=args.seed,
        budget=budget,
        budget_ratio=ratio if budget is None else None,
    )
    estimate = harness.run_experiment(config, threads=args.threads)
    files = harness.emit_outputs(estimate, config, args.out)
    for p in estimate.policies:
        tail = estimate.mean[p][-1]
        print(f"{p}: mean regret at T={estimate.horizons[-1]} is "
              f"{tail:.6g} (stderr {estimate.stderr[p][-1]:.3g})")
    for f in files:
        print(f"wrote {f}")
    return 0


def _cmd_verify(args) -> int:
    model = _model_from_args(args)
    budget = _budget_for(args, args.T)
    rows = list(coupling.verification_rows(
        model, args.policy, lambda _t: budget, args.T, args.reps, args.seed,
        max_horizon=max(500, args.T),
    ))
    out = Path(args.out) if args.out else None
    lines = ["path_id,policy,offline_value,online_value,total_compensation,residual"]
    for r in rows:
        lines.append(f"{r[0]},{r[1]},{r[2]:.10g},{r[3]:.10g},{r[4]:.10g},{r[5]:.3g}")
    text = "\n".join(lines) + "\n"
    if out:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"wrote {out}")
    else:
        print(text, end="")
    if args.dump_trace:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(
            [args.seed, 1, args.T, 0])))
        path = draw_path(model, args.T, rng)
        trace = run_policy(model, path, budget, args.policy)
        with open(args.dump_trace, "w") as fh:
            write_trace_csv(path, trace, fh)
        print(f"wrote {args.dump_trace}")
    max_res = max(abs(r[5]) for r in rows)
    print(f"max |residual| over {len(rows)} paths: {max_res:.3g}")
    return 0 if max_res <= RESIDUAL_TOL else 2


def _cmd_oracle(args) -> int:
    model = _model_from_args(args)
    horizons = harness.parse_horizons(args.horizons)
    print("T,budget,offline_exact,online_optimal,regret_opt,cwg_regret_mc,cwg_stderr,sandwich_ok")
    ok = True
    for t in horizons:
        budget = _budget_for(args, t)
        rep = dp_oracle.regret_oracle(model, budget, t, reps=args.reps, seed=args.seed)
        ok &= rep.sandwich_ok
        print(f"{t},{budget},{rep.offline_exact:.10g},{rep.online_optimal:.10g},"
              f"{rep.regret_opt:.10g},{rep.cwg_regret_mc:.10g},{rep.cwg_stderr:.3g},"
              f"{int(rep.sandwich_ok)}")
    return 0 if ok else 2


def _cmd_events(args) -> int:
    model = _model_from_args(args)
    budget = _budget_for(args, args.T)
    taus = [int(tok) for tok in args.taus.split(",") if tok.strip()]
    table = coupling.event_frequencies(
        model, budget, args.T, taus, args.reps, args.seed,
    )
    print("T,tau,event,freq,stderr,bound")
    for row in table.rows():
        print(f"{row[0]},{row[1]},{row[2]},{row[3]:.6g},{row[4]:.3g},{row[5]:.3g}")
    if table.taus.size == 0:
        print("(no adaptive-phase taus at this horizon; empty table)")
        return 0
    return 0 if not table.exceedances(3.0).any() else 2


def _cmd_martingale(args) -> int:
    model = _model_from_args(args)
    budget = _budget_for(args, args.T)
    rep = coupling.martingale_diagnostic(model, budget, args.T, args.reps, args.seed)
    print(f"steps checked: t = 1..{rep.cutoff} of T={rep.horizon}, reps={rep.reps}")
    print(f"max |mean/stderr| over t: {rep.max_abs_z:.3f}")
    print(f"exact step bound |delta_t| <= 1/(T-t): {'ok' if rep.step_bound_ok else 'VIOLATED'}")
    return 0 if rep.step_bound_ok and rep.max_abs_z <= args.max_z else 2


def _read_series_csv(path: Path, policy: str | None):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            if not line.strip():
                continue
            if header[0] == "policy":
                if policy is None:
                    raise ConfigurationError(
                        "combined csv needs --policy to select a series"
                    )
                if parts[0] != policy:
                    continue
                rows.append((float(parts[1]), float(parts[2]), float(parts[3])))
            else:
                rows.append((float(parts[0]), float(parts[1]),
                             float(parts[2]) if len(parts) > 2 else 0.0))
    if not rows:
        raise ConfigurationError(f"no usable rows in {path}")
    return rows


def _cmd_fit(args) -> int:
    rows = _read_series_csv(Path(getattr(args, "in")), args.policy)
    try:
        fit = harness.fit_exponent(rows)
    except FitError as exc:
        print(f"fit error: {exc} (flatness z = {exc.flatness:.3g})")
        return 2
    print(f"slope={fit.slope:.6g} intercept={fit.intercept:.6g} "
          f"r_squared={fit.r_squared:.6g} n={fit.n_points}")
    return 0


def _cmd_report(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for path in getattr(args, "in"):
        p = Path(path)
        rows = _read_series_csv(p, args.policy)
        t = [r[0] for r in rows]
        m = [r[1] for r in rows]
        s = [r[2] for r in rows]
        ax.errorbar(t, m, yerr=s, marker="o", capsize=2, label=p.stem)
    if args.logx:
        ax.set_xscale("log")
    if args.logy:
        ax.set_yscale("log")
    ax.set_xlabel("number of candidates T")
    ax.set_ylabel("average regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multisec",
                     description="Multisecretary-problem simulation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[], help="Monte-Carlo regret experiment",
                       description="Run paired-path regret estimation and emit "
                                   ".dat/.csv/.meta.txt files.")
    p.add_argument("--policy", default="ce,cwg",
                   help=f"comma list from {{{','.join(POLICY_NAMES)}}}")
    _add_dist_flags(p)
    _add_budget_flags(p)
    p.add_argument("--horizons", default="geom:100:100000:12",
                   help="geom:lo:hi:k or list:a,b,c")
    p.add_argument("--reps", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: available parallelism)")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="pathwise coupling identity check",
                       description="Re-solve the hindsight oracle along each "
                                   "policy path and check offline == online + "
                                   "compensations to 1e-9.")
    p.add_argument("--policy", default="cwg", choices=POLICY_NAMES)
    _add_dist_flags(p)
    _add_budget_flags(p)
    p.add_argument("--T", type=int, default=200)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the per-path csv here")
    p.add_argument("--dump-trace", default=None,
                   help="also dump the first path's step trace csv")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("oracle", help="exact DP regret bracket (discrete models)")
    _add_dist_flags(p)
    _add_budget_flags(p)
    p.add_argument("--horizons", default="list:10,50,200")
    p.add_argument("--reps", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("events", help="threshold proximity tail frequencies")
    _add_dist_flags(p)
    _add_budget_flags(p)
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--taus", default="50,75,100,150,200,300,500,700,1000")
    p.add_argument("--reps", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_events)

    p = sub.add_parser("martingale", help="re-solving threshold drift diagnostic")
    _add_dist_flags(p)
    _add_budget_flags(p)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-z", type=float, default=4.0)
    p.set_defaults(func=_cmd_martingale)

    p = sub.add_parser("fit", help="log-log exponent of an emitted csv")
    p.add_argument("--in", required=True, help="csv from a run (T,regret,stderr)")
    p.add_argument("--policy", default=None, help="series selector for combined csv")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("report", help="render csv series to an SVG line plot")
    p.add_argument("--in", required=True, nargs="+", help="one or more csv files")
    p.add_argument("--policy", default=None)
    p.add_argument("--out", required=True, help="output .svg path")
    p.add_argument("--logx", action="store_true")
    p.add_argument("--logy", action="store_true")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, SizeError, UnsupportedModelError,
            FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CouplingError as exc:
        print(f"coupling failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
