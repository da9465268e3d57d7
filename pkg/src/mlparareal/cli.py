"""Command-line entry point ``mlp``.

Examples::

    mlp run decay_levels --out results
    mlp run oscillatory_sweep --set r=100 --set levels=2
    mlp check all
    mlp plan three_scale_iters
    mlp complexity --levels 3 --coarsen 10 --fine-steps 1000
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .complexity import optimal_coarsening, v_cycle_cost, v_cycle_steps
from .core import ConfigurationError
from .experiments import (HEAVY_ONLY, REGISTRY, check_experiment, get_experiment,
                          plot_csv, resolve_params, rows_to_csv, run_experiment)
from .parareal import cycle_plan


def _parse_sets(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _overrides(args, exp_id: str) -> dict:
    """Config-file section for ``exp_id`` first, then ``--set`` flags."""
    out = {}
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        if not parser.read(args.config, encoding="utf-8"):
            raise ConfigurationError(f"cannot read config file {args.config}")
        if parser.has_section(exp_id):
            out.update(parser[exp_id])
    out.update(_parse_sets(args.set))
    return out


def _add_common(p, with_out=False):
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override an experiment parameter (repeatable)")
    p.add_argument("--config", metavar="FILE",
                   help="INI file with one section of parameters per experiment")
    p.add_argument("--workers", type=int, default=1, help="threads for fine sweeps")
    p.add_argument("--heavy", action="store_true",
                   help="full-size parameters (RSWE at 128 modes, r = 10000)")
    if with_out:
        p.add_argument("--out", metavar="DIR",
                       help="write <id>.csv (and <id>_plot.csv) here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlp", description="Multi-level Parareal with averaging: experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and emit CSV")
    run.add_argument("id", choices=sorted(REGISTRY))
    _add_common(run, with_out=True)

    check = sub.add_parser("check", help="run experiments and compare to expectations")
    check.add_argument("id", choices=sorted(REGISTRY) + ["all"])
    _add_common(check)

    plan = sub.add_parser("plan", help="print the cycle plan of an experiment")
    plan.add_argument("id", choices=sorted(REGISTRY))
    _add_common(plan)

    cx = sub.add_parser("complexity", help="V-cycle serial steps and optimal coarsening")
    cx.add_argument("--levels", type=int, required=True)
    cx.add_argument("--coarsen", type=int, required=True)
    cx.add_argument("--fine-steps", type=int, required=True)

    sub.add_parser("list", help="list registered experiments")
    return parser


def _cmd_run(args) -> int:
    exp = get_experiment(args.id)
    _, rows = run_experiment(args.id, _overrides(args, args.id), args.workers, args.heavy)
    text = rows_to_csv(exp.columns, rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{exp.id}.csv").write_text(text, encoding="utf-8")
        written = [out / f"{exp.id}.csv"]
        if exp.plot is not None:
            (out / f"{exp.id}_plot.csv").write_text(plot_csv(exp, rows), encoding="utf-8")
            written.append(out / f"{exp.id}_plot.csv")
        for path in written:
            print(path)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_check(args) -> int:
    if args.id == "all":
        ids = [i for i in REGISTRY if args.heavy or i not in HEAVY_ONLY]
    else:
        ids = [args.id]
    failed = 0
    for exp_id in ids:
        _, results = check_experiment(exp_id, _overrides(args, exp_id), args.workers,
                                      args.heavy)
        for res in results:
            print(f"[{exp_id}] {res.line()}")
            failed += not res.passed
    print(f"{failed} failure(s)" if failed else "all checks passed")
    return 1 if failed else 0


def _cmd_plan(args) -> int:
    exp = get_experiment(args.id)
    if exp.plan is None:
        raise ConfigurationError(f"{exp.id} has no solver configuration")
    cfg = exp.plan(resolve_params(exp, _overrides(args, args.id), args.heavy))
    for lvl in cfg.levels:
        eta = "-" if lvl.eta is None else f"{lvl.eta:g}"
        print(f"# level {lvl.level}: dt={lvl.dt:g} eta={eta} k={lvl.iterations} "
              f"{lvl.integrator}")
    for i, step in enumerate(cycle_plan(cfg), start=1):
        print(f"{i:4d} {step}")
    return 0


def _cmd_complexity(args) -> int:
    L, N, X = args.levels, args.coarsen, args.fine_steps
    print(f"serial steps f_{L}({N}) = {v_cycle_steps(L, N, X)}")
    if L >= 2:
        opt = optimal_coarsening(L, X)
        print(f"N_opt = {opt.n_opt:.6g}")
        print(f"f_{L}({opt.lower}) = {opt.cost_lower:.6g}, f_{L}({opt.upper}) = "
              f"{opt.cost_upper:.6g}, f_{L}(N_opt) = {v_cycle_cost(L, opt.n_opt, X):.6g}")
    return 0


def _cmd_list(args) -> int:
    for exp_id, exp in REGISTRY.items():
        tag = " [smoke by default; --heavy for full size]" if exp.heavy else ""
        print(f"{exp_id}: {exp.description}{tag}")
    return 0


COMMANDS = {"run": _cmd_run, "check": _cmd_check, "plan": _cmd_plan,
            "complexity": _cmd_complexity, "list": _cmd_list}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"mlp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
