"""Batch execution and file emission.

Each replication derives its own seed from the master seed and plays one
full game; per-rep work can fan out across processes, but files are
always written serially in replication order so repeated invocations
produce byte-identical artifacts. A failing rep is recorded in
errors.csv and the remaining reps still run.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from .config import ExperimentConfig
from .egt import Equilibrium, HeuristicGame, estimate_payoffs, find_equilibria
from .game import run_game
from .metrics import metrics_report
from .optimize import (
    FitnessScenario,
    GenerationStats,
    Genotype,
    ZIP_GENE_BOUNDS,
    ZIP_GENE_NAMES,
    adapt_run,
    basin_fitness,
    ga_run,
    mechanism_fitness,
    zip_fitness,
)
from .market import Schedule
from .seeding import derive_seed
from .svg import emit_svg_price_series, emit_svg_simplex_field

__all__ = ["run_experiment", "run_egt", "run_evolve", "run_adapt"]

TRANSACTION_COLUMNS = (
    "run",
    "day",
    "round",
    "seq",
    "buyer_id",
    "seller_id",
    "price",
    "buyer_value",
    "seller_value",
)

METRIC_COLUMNS = (
    "run",
    "pa",
    "pa_signed",
    "pe",
    "ea",
    "ea_signed",
    "alpha",
    "dispersion",
    "market_power_buyers",
    "market_power_sellers",
    "volume",
)

DAILY_COLUMNS = ("run", "day", "volume", "alpha", "p0")

ERROR_COLUMNS = ("run", "error")

BANDIT_COLUMNS = ("pull", "arm", "reward", "running_mean")


def _cell(value) -> str:
    """Round-trip faithful cell: floats via repr, None as empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


# ----------------------------------------------------------------- one rep


@dataclass(frozen=True)
class RepOutput:
    """Everything one replication contributes to the output files."""

    rep: int
    transactions: tuple = ()
    metrics_row: Optional[tuple] = None
    daily_rows: tuple = ()
    svg: Optional[str] = None
    error: Optional[str] = None


def _run_one_rep(cfg: ExperimentConfig, rep: int, want_svg: bool) -> RepOutput:
    try:
        seed = derive_seed(cfg.master_seed, rep)
        log = run_game(cfg.market, cfg.schedule, cfg.trader_defs(), seed)
        report = metrics_report(log)
        txns = tuple(
            (
                rep,
                t.day,
                t.round,
                t.seq,
                t.buyer_id,
                t.seller_id,
                t.price,
                log.value_of(t.buyer_id, t.day),
                log.value_of(t.seller_id, t.day),
            )
            for t in log.transactions
        )
        metrics_row = (
            rep,
            report.pa,
            report.pa_signed,
            report.pe,
            report.ea,
            report.ea_signed,
            report.alpha,
            report.profit_dispersion,
            report.market_power_buyers,
            report.market_power_sellers,
            report.volume,
        )
        daily = tuple(
            (rep, d, report.volume_by_day[d], report.alpha_by_day[d], report.day_p0[d])
            for d in range(cfg.market.days)
        )
        svg = emit_svg_price_series(log, report.day_p0) if want_svg else None
        return RepOutput(rep, txns, metrics_row, daily, svg)
    except Exception as exc:
        return RepOutput(rep, error=f"{type(exc).__name__}: {exc}")


def _summary_rows(metric_rows: Sequence[tuple]) -> list[tuple]:
    """Mean and standard error per metric across the completed reps."""
    out = []
    for col, name in enumerate(METRIC_COLUMNS):
        if name == "run":
            continue
        values = [row[col] for row in metric_rows if row[col] is not None]
        n = len(values)
        if n == 0:
            out.append((name, 0, None, None))
            continue
        mean = sum(values) / n
        if n > 1:
            var = sum((v - mean) ** 2 for v in values) / (n - 1)
            se = math.sqrt(var / n)
        else:
            se = None
        out.append((name, n, mean, se))
    return out


def run_experiment(
    cfg: ExperimentConfig, out_dir: Union[str, Path], jobs: int = 1
) -> dict[str, Path]:
    """Play every replication and emit the experiment's files.

    Always writes summary.csv and errors.csv; transactions.csv,
    metrics.csv plus metrics_daily.csv, and per-rep SVG charts follow the
    config's outputs list. Returns the written paths keyed by artifact
    name.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    want_svg = "svg" in cfg.outputs
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(_run_one_rep, [cfg] * cfg.reps, range(cfg.reps), [want_svg] * cfg.reps)
            )
    else:
        results = [_run_one_rep(cfg, rep, want_svg) for rep in range(cfg.reps)]
    results.sort(key=lambda r: r.rep)

    paths: dict[str, Path] = {}
    ok = [r for r in results if r.error is None]
    if "transactions" in cfg.outputs:
        paths["transactions"] = out / "transactions.csv"
        _write_csv(
            paths["transactions"],
            TRANSACTION_COLUMNS,
            [row for r in ok for row in r.transactions],
        )
    if "metrics" in cfg.outputs:
        paths["metrics"] = out / "metrics.csv"
        _write_csv(paths["metrics"], METRIC_COLUMNS, [r.metrics_row for r in ok])
        paths["metrics_daily"] = out / "metrics_daily.csv"
        _write_csv(
            paths["metrics_daily"], DAILY_COLUMNS, [row for r in ok for row in r.daily_rows]
        )
    paths["summary"] = out / "summary.csv"
    _write_csv(
        paths["summary"],
        ("metric", "n", "mean", "se"),
        _summary_rows([r.metrics_row for r in ok]),
    )
    paths["errors"] = out / "errors.csv"
    _write_csv(
        paths["errors"],
        ERROR_COLUMNS,
        [(r.rep, r.error) for r in results if r.error is not None],
    )
    if want_svg:
        for r in ok:
            p = out / f"prices_rep{r.rep:03d}.svg"
            p.write_text(r.svg, encoding="utf-8")
            paths[f"svg_rep{r.rep}"] = p
    return paths


# -------------------------------------------------------------------- egt


def run_egt(
    cfg: ExperimentConfig, out_dir: Union[str, Path]
) -> tuple[HeuristicGame, list[Equilibrium], dict[str, Path]]:
    """Estimate the payoff table, locate attractors, and emit both as
    CSV (plus the simplex chart for three-strategy games when svg is an
    enabled output)."""
    section = cfg.egt
    if section is None:
        raise ValueError("the config has no egt section")
    if not isinstance(cfg.schedule, Schedule):
        raise ValueError("payoff estimation needs an unshifted schedule")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    game = estimate_payoffs(
        cfg.market,
        cfg.schedule,
        list(section.strategies),
        n_agents=section.n_agents,
        reps=section.reps,
        seed=cfg.master_seed,
    )
    eqs = find_equilibria(game, n_starts=section.n_starts, seed=cfg.master_seed)

    names = game.strategy_names
    payoff_rows = []
    for profile in sorted(game.payoff_mean):
        mean = game.payoff_mean[profile]
        row: list = list(profile)
        for s in range(len(names)):
            m = float(mean[s])
            row.append(None if math.isnan(m) else m)
        for s in range(len(names)):
            se = game.payoff_se(profile, s)
            row.append(None if profile[s] == 0 else se)
        payoff_rows.append(tuple(row))
    paths: dict[str, Path] = {"payoffs": out / "payoffs.csv"}
    _write_csv(
        paths["payoffs"],
        tuple(f"n_{n}" for n in names)
        + tuple(f"mean_{n}" for n in names)
        + tuple(f"se_{n}" for n in names),
        payoff_rows,
    )
    paths["equilibria"] = out / "equilibria.csv"
    _write_csv(
        paths["equilibria"],
        tuple(f"x_{n}" for n in names) + ("basin_fraction", "is_ne", "max_deviation_gain"),
        [
            tuple(e.point) + (e.basin_fraction, e.is_ne, e.max_deviation_gain)
            for e in eqs
        ],
    )
    if "svg" in cfg.outputs and len(names) == 3:
        paths["simplex"] = out / "simplex.svg"
        paths["simplex"].write_text(emit_svg_simplex_field(game, eqs), encoding="utf-8")
    return game, eqs, paths


# ------------------------------------------------------------------ evolve


def run_evolve(
    cfg: ExperimentConfig, out_dir: Union[str, Path]
) -> tuple[Genotype, list[GenerationStats], dict[str, Path]]:
    """Run the configured genetic search and write its evolution.csv."""
    section = cfg.evolve
    if section is None:
        raise ValueError("the config has no evolve section")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # Shifted (per-day) schedules replay fine inside a game, but the
    # genotype targets build trader populations from schedule sizes, so
    # they insist on a single one.
    scenario = FitnessScenario(cfg.market, cfg.schedule, reps=section.ga.fitness_reps)
    fitness_seed = derive_seed(cfg.master_seed, 1)
    if section.target == "zip":
        if not isinstance(cfg.schedule, Schedule):
            raise ValueError("genotype fitness needs an unshifted schedule")
        bounds = ZIP_GENE_BOUNDS
        gene_names: tuple[str, ...] = ZIP_GENE_NAMES

        def fitness(g: Genotype) -> float:
            return zip_fitness(g, scenario, fitness_seed)

    elif section.target == "mechanism":
        bounds = ((0.0, 1.0),)
        gene_names = (section.param,)
        defs = cfg.trader_defs()

        def fitness(g: Genotype) -> float:
            return mechanism_fitness(
                section.param,
                g.genes[0],
                scenario,
                defs,
                fitness_seed,
                objective=section.objective,
            )

    else:  # basin
        if not isinstance(cfg.schedule, Schedule):
            raise ValueError("genotype fitness needs an unshifted schedule")
        bounds = ZIP_GENE_BOUNDS
        gene_names = ZIP_GENE_NAMES

        def fitness(g: Genotype) -> float:
            return basin_fitness(
                g,
                section.rivals,
                scenario,
                n_agents=section.n_agents,
                seed=fitness_seed,
                n_starts=section.n_starts,
            )

    best, trace = ga_run(section.ga, fitness, bounds, seed=cfg.master_seed)
    paths = {"evolution": out / "evolution.csv"}
    _write_csv(
        paths["evolution"],
        ("generation", "best_fitness", "mean_fitness") + gene_names,
        [
            (row.generation, row.best_fitness, row.mean_fitness) + row.best_genes
            for row in trace
        ],
    )
    return best, trace, paths


# ------------------------------------------------------------------- adapt


def run_adapt(cfg: ExperimentConfig, out_dir: Union[str, Path]):
    """Run the online adaptation loop and write its bandit.csv."""
    section = cfg.adapt
    if section is None:
        raise ValueError("the config has no adapt section")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = FitnessScenario(cfg.market, cfg.schedule, reps=1)
    state, rows = adapt_run(
        section.param,
        section.arms,
        scenario,
        cfg.trader_defs(),
        section.epsilon,
        section.pulls,
        cfg.master_seed,
    )
    paths = {"bandit": out / "bandit.csv"}
    _write_csv(
        paths["bandit"],
        BANDIT_COLUMNS,
        [(r.pull, r.arm, r.reward, r.running_mean) for r in rows],
    )
    return state, rows, paths
