"""Command-line surface.

Subcommands: run (batch replications), egt (payoff table plus attractor
analysis), evolve (genetic search), adapt (online bandit), equilibrium
(print a schedule's competitive equilibrium), version.

Exit codes: 0 success, 2 usage, 3 configuration problems, 4 runtime
failures. Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import __version__
from .config import ExperimentConfig, ParseError, ValidationError, load_config
from .market import Schedule, compute_equilibrium
from .runner import run_adapt, run_egt, run_evolve, run_experiment

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auctionkit",
        description="Deterministic double-auction experiments: trading "
        "strategies, market metrics, population dynamics, and parameter search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, reps: bool = False, jobs: bool = False):
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--quiet", action="store_true", help="suppress progress text")
        if reps:
            p.add_argument("--reps", type=int, default=None, help="override replication count")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel replications")

    common(sub.add_parser("run", help="play replications and emit CSV/SVG"), reps=True, jobs=True)
    common(sub.add_parser("egt", help="estimate payoffs and analyze attractors"))
    common(sub.add_parser("evolve", help="genetic search over parameters"))
    common(sub.add_parser("adapt", help="online epsilon-greedy adaptation"))

    eq = sub.add_parser("equilibrium", help="print a schedule's competitive equilibrium")
    eq.add_argument("--config", help="experiment YAML file to take the schedule from")
    eq.add_argument("--buyers", help="comma-separated buyer values (overrides --config)")
    eq.add_argument("--sellers", help="comma-separated seller values (overrides --config)")

    sub.add_parser("version", help="print the package version")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise ValidationError("reps", f"must be at least 1, got {args.reps}")
        cfg = replace(cfg, reps=args.reps)
    return cfg


def _parse_values(text: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise ValidationError(flag, f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise ValidationError(flag, "needs at least one value")
    return values


def _cmd_run(args) -> int:
    cfg = _load(args)
    paths = run_experiment(cfg, args.out, jobs=args.jobs)
    if not args.quiet:
        errors = paths["errors"].read_text(encoding="utf-8").count("\n") - 1
        print(f"{cfg.reps} reps -> {args.out} ({errors} failed)")
        for name in sorted(paths):
            print(f"  {paths[name]}")
    return EXIT_OK


def _cmd_egt(args) -> int:
    cfg = _load(args)
    game, eqs, paths = run_egt(cfg, args.out)
    if not args.quiet:
        names = ", ".join(game.strategy_names)
        print(f"{len(game.payoff_mean)} profiles over {{{names}}}")
        for eq in eqs:
            point = ", ".join(f"{v:.4f}" for v in eq.point)
            print(
                f"  attractor ({point}) basin={eq.basin_fraction:.3f} "
                f"ne={'yes' if eq.is_ne else 'no'}"
            )
        for name in sorted(paths):
            print(f"  {paths[name]}")
    return EXIT_OK


def _cmd_evolve(args) -> int:
    cfg = _load(args)
    best, trace, paths = run_evolve(cfg, args.out)
    if not args.quiet:
        genes = ", ".join(f"{g:.4f}" for g in best.genes)
        print(f"best fitness {trace[-1].best_fitness:.6f} at ({genes})")
        for name in sorted(paths):
            print(f"  {paths[name]}")
    return EXIT_OK


def _cmd_adapt(args) -> int:
    cfg = _load(args)
    state, rows, paths = run_adapt(cfg, args.out)
    if not args.quiet:
        for i, value in enumerate(state.arms):
            print(
                f"arm {i} ({cfg.adapt.param}={value:g}): pulls={state.counts[i]} "
                f"mean={state.means[i]:.4f}"
            )
        for name in sorted(paths):
            print(f"  {paths[name]}")
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    if args.buyers or args.sellers:
        if not (args.buyers and args.sellers):
            raise ValidationError("equilibrium", "--buyers and --sellers go together")
        schedule = Schedule(
            _parse_values(args.buyers, "buyers"), _parse_values(args.sellers, "sellers")
        )
    elif args.config:
        schedule = load_config(args.config).first_day_schedule()
    else:
        raise ValidationError("equilibrium", "needs --config or --buyers/--sellers")
    report = compute_equilibrium(schedule)
    print(
        f"q0={report.q0} p0={report.p0:g} interval=[{report.p_low:g}, {report.p_high:g}] "
        f"surplus={report.total_surplus:g} "
        f"(buyers {report.buyer_surplus:g}, sellers {report.seller_surplus:g})"
    )
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    handlers = {
        "run": _cmd_run,
        "egt": _cmd_egt,
        "evolve": _cmd_evolve,
        "adapt": _cmd_adapt,
        "equilibrium": _cmd_equilibrium,
    }
    try:
        return handlers[args.command](args)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
