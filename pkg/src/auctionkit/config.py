"""Experiment configuration files.

One YAML document describes a whole experiment: the market mechanism, a
supply and demand schedule (inline values or a named generator, with an
optional mid-run shift), the trader population, replication counts, and
optional sections for the game-theoretic analyzer, the evolutionary
search, and the online adaptation loop. Parsing is strict: unknown keys,
wrong types, and out-of-range values all fail with the offending path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

import yaml

from .game import TraderDef
from .market import (
    ClearingMode,
    KDAPricing,
    MarketConfig,
    Schedule,
    Side,
    UniformPricing,
)
from .optimize import GaConfig, MECHANISM_PARAMS
from .scenarios import flat_supply_schedule, linear_schedule, shifted_schedules
from .seeding import make_rng
from .strategies import STRATEGIES, make_strategy

__all__ = [
    "ParseError",
    "ValidationError",
    "TraderSpec",
    "EgtSection",
    "EvolveSection",
    "AdaptSection",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]

VALID_OUTPUTS = ("transactions", "metrics", "svg", "evolution", "egt")
EVOLVE_TARGETS = ("zip", "mechanism", "basin")
OBJECTIVES = ("alpha", "efficiency")


class ParseError(Exception):
    """The text is not well-formed YAML."""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"PARSE_ERROR(line {line}): {message}")


class ValidationError(Exception):
    """The tree is well-formed but describes an invalid experiment."""

    def __init__(self, path: str, message: str):
        self.path = path or "<root>"
        self.message = message
        super().__init__(f"VALIDATION_ERROR({self.path}): {message}")


# ---------------------------------------------------------------- checkers


def _mapping(node: Any, path: str) -> dict:
    if not isinstance(node, dict):
        raise ValidationError(path, f"expected a mapping, got {type(node).__name__}")
    for key in node:
        if not isinstance(key, str):
            raise ValidationError(path, f"keys must be strings, got {key!r}")
    return node


def _no_unknown_keys(d: dict, allowed: Sequence[str], path: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ValidationError(
            path, f"unknown key {unknown[0]!r} (allowed: {', '.join(sorted(allowed))})"
        )


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ValidationError(path, f"expected true/false, got {value!r}")
    return value


def _int(value: Any, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(path, f"must be at least {minimum}, got {value}")
    return value


def _float(
    value: Any,
    path: str,
    minimum: Optional[float] = None,
    maximum: Optional[float] = None,
) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ValidationError(path, f"must be finite, got {value!r}")
    if minimum is not None and out < minimum:
        raise ValidationError(path, f"must be at least {minimum}, got {value}")
    if maximum is not None and out > maximum:
        raise ValidationError(path, f"must be at most {maximum}, got {value}")
    return out


def _str(value: Any, path: str, choices: Optional[Sequence[str]] = None) -> str:
    if not isinstance(value, str):
        raise ValidationError(path, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ValidationError(
            path, f"expected one of {', '.join(choices)}; got {value!r}"
        )
    return value


def _number_list(value: Any, path: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ValidationError(path, "expected a non-empty list of numbers")
    return tuple(_float(v, f"{path}[{i}]") for i, v in enumerate(value))


# ------------------------------------------------------------ config types


@dataclass(frozen=True)
class TraderSpec:
    """One block of identically configured traders."""

    strategy: str
    side: Side
    count: int
    params: dict


@dataclass(frozen=True)
class EgtSection:
    """Inputs for payoff-table estimation and attractor analysis."""

    strategies: tuple[tuple[str, dict], ...]
    n_agents: int
    reps: int
    n_starts: int = 200


@dataclass(frozen=True)
class EvolveSection:
    """Inputs for the genetic search. target picks the fitness: "zip"
    tunes the adaptive-trader genotype, "mechanism" tunes one market
    parameter, "basin" maximizes the genotype's attractor share."""

    target: str
    ga: GaConfig
    param: str = "qs"
    objective: str = "alpha"
    rivals: tuple[tuple[str, dict], ...] = ()
    n_agents: int = 6
    n_starts: int = 100


@dataclass(frozen=True)
class AdaptSection:
    """Inputs for the online epsilon-greedy adaptation loop."""

    param: str
    arms: tuple[float, ...]
    epsilon: float
    pulls: int


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment."""

    market: MarketConfig
    schedule: Union[Schedule, tuple[Schedule, ...]]
    traders: tuple[TraderSpec, ...]
    reps: int = 1
    master_seed: int = 0
    outputs: tuple[str, ...] = ("transactions", "metrics")
    egt: Optional[EgtSection] = None
    evolve: Optional[EvolveSection] = None
    adapt: Optional[AdaptSection] = None

    def first_day_schedule(self) -> Schedule:
        if isinstance(self.schedule, Schedule):
            return self.schedule
        return self.schedule[0]

    def trader_defs(self) -> list[TraderDef]:
        """Expand counted blocks into per-trader definitions, buyers
        numbered B0.. and sellers S0.. in listed order."""
        defs: list[TraderDef] = []
        counters = {Side.BUY: 0, Side.SELL: 0}
        prefix = {Side.BUY: "B", Side.SELL: "S"}
        for spec in self.traders:
            for _ in range(spec.count):
                tid = f"{prefix[spec.side]}{counters[spec.side]}"
                counters[spec.side] += 1
                defs.append(TraderDef(tid, spec.side, spec.strategy, dict(spec.params)))
        return defs


# -------------------------------------------------------------- subsections


def _parse_pricing(node: Any, path: str):
    d = _mapping(node, path)
    rule = _str(d.get("rule", "kda"), _join(path, "rule"), choices=("kda", "uniform"))
    if rule == "kda":
        _no_unknown_keys(d, ("rule", "k"), path)
        return KDAPricing(k=_float(d.get("k", 0.5), _join(path, "k"), 0.0, 1.0))
    _no_unknown_keys(d, ("rule", "ku"), path)
    return UniformPricing(ku=_float(d.get("ku", 0.5), _join(path, "ku"), 0.0, 1.0))


_MARKET_KEYS = (
    "clearing_mode",
    "rounds_per_clear",
    "improvement_rule",
    "pricing",
    "qs",
    "days",
    "rounds_per_day",
    "min_price",
    "max_price",
    "persistent_shouts",
    "tick_size",
    "max_slots_per_round",
)


def _parse_market(node: Any, path: str) -> MarketConfig:
    d = _mapping(node, path)
    _no_unknown_keys(d, _MARKET_KEYS, path)
    kwargs: dict[str, Any] = {}
    if "clearing_mode" in d:
        mode = _str(
            d["clearing_mode"],
            _join(path, "clearing_mode"),
            choices=("continuous", "periodic"),
        )
        kwargs["clearing_mode"] = ClearingMode(mode)
    if "rounds_per_clear" in d:
        kwargs["rounds_per_clear"] = _int(d["rounds_per_clear"], _join(path, "rounds_per_clear"), 1)
    if "improvement_rule" in d:
        kwargs["improvement_rule"] = _bool(d["improvement_rule"], _join(path, "improvement_rule"))
    if "pricing" in d:
        kwargs["pricing"] = _parse_pricing(d["pricing"], _join(path, "pricing"))
    if "qs" in d:
        kwargs["qs"] = _float(d["qs"], _join(path, "qs"), 0.0, 1.0)
    if "days" in d:
        kwargs["days"] = _int(d["days"], _join(path, "days"), 1)
    if "rounds_per_day" in d:
        kwargs["rounds_per_day"] = _int(d["rounds_per_day"], _join(path, "rounds_per_day"), 1)
    if "min_price" in d:
        kwargs["min_price"] = _float(d["min_price"], _join(path, "min_price"), 0.0)
    if "max_price" in d:
        kwargs["max_price"] = _float(d["max_price"], _join(path, "max_price"))
    if "persistent_shouts" in d:
        kwargs["persistent_shouts"] = _bool(d["persistent_shouts"], _join(path, "persistent_shouts"))
    if "tick_size" in d and d["tick_size"] is not None:
        kwargs["tick_size"] = _float(d["tick_size"], _join(path, "tick_size"))
    if "max_slots_per_round" in d and d["max_slots_per_round"] is not None:
        kwargs["max_slots_per_round"] = _int(d["max_slots_per_round"], _join(path, "max_slots_per_round"), 1)
    try:
        return MarketConfig(**kwargs)
    except ValueError as exc:
        raise ValidationError(path, str(exc))


_GENERATORS = {
    "linear": (
        linear_schedule,
        (
            "n_per_side",
            "buyer_intercept",
            "buyer_slope",
            "seller_intercept",
            "seller_slope",
            "units_per_trader_per_day",
        ),
    ),
    "flat_supply": (
        flat_supply_schedule,
        (
            "n_per_side",
            "buyer_intercept",
            "buyer_slope",
            "seller_value",
            "units_per_trader_per_day",
        ),
    ),
}


def _schedule_from_spec(d: dict, path: str) -> Schedule:
    if "generator" in d:
        gen = _str(d["generator"], _join(path, "generator"), choices=tuple(_GENERATORS))
        fn, keys = _GENERATORS[gen]
        _no_unknown_keys(d, ("generator",) + keys, path)
        if "n_per_side" not in d:
            raise ValidationError(path, f"generator {gen!r} needs n_per_side")
        kwargs: dict[str, Any] = {
            "n_per_side": _int(d["n_per_side"], _join(path, "n_per_side"), 1)
        }
        for key in keys[1:]:
            if key not in d:
                continue
            if key == "units_per_trader_per_day":
                kwargs[key] = _int(d[key], _join(path, key), 1)
            else:
                kwargs[key] = _float(d[key], _join(path, key))
        try:
            return fn(**kwargs)
        except ValueError as exc:
            raise ValidationError(path, str(exc))
    if "buyers" in d or "sellers" in d:
        _no_unknown_keys(d, ("buyers", "sellers", "units_per_trader_per_day"), path)
        if "buyers" not in d or "sellers" not in d:
            raise ValidationError(path, "inline schedules need both buyers and sellers")
        units = _int(d.get("units_per_trader_per_day", 1), _join(path, "units_per_trader_per_day"), 1)
        try:
            return Schedule(
                _number_list(d["buyers"], _join(path, "buyers")),
                _number_list(d["sellers"], _join(path, "sellers")),
                units,
            )
        except ValueError as exc:
            raise ValidationError(path, str(exc))
    raise ValidationError(
        path, "expected a generator or inline buyers/sellers values"
    )


def _parse_schedule(node: Any, days: int, path: str):
    d = dict(_mapping(node, path))
    shift_node = d.pop("shift", None)
    before = _schedule_from_spec(d, path)
    if shift_node is None:
        return before
    shift_path = _join(path, "shift")
    sd = dict(_mapping(shift_node, shift_path))
    if "day" not in sd:
        raise ValidationError(shift_path, "needs the switch day")
    if "shift" in sd:
        raise ValidationError(shift_path, "shifts do not nest")
    day = _int(sd.pop("day"), _join(shift_path, "day"), 0)
    after = _schedule_from_spec(sd, shift_path)
    try:
        return shifted_schedules(days, day, before, after)
    except ValueError as exc:
        raise ValidationError(shift_path, str(exc))


def _parse_strategy_entry(node: Any, path: str) -> tuple[str, dict]:
    d = _mapping(node, path)
    _no_unknown_keys(d, ("strategy", "params"), path)
    if "strategy" not in d:
        raise ValidationError(path, "needs a strategy name")
    name = _str(d["strategy"], _join(path, "strategy"), choices=tuple(sorted(STRATEGIES)))
    params = dict(_mapping(d.get("params", {}), _join(path, "params")))
    _probe_strategy(name, params, path)
    return name, params


def _probe_strategy(name: str, params: dict, path: str) -> None:
    # Construct one throwaway instance so bad parameter names or values
    # surface at config time with a path, not mid-experiment.
    try:
        make_strategy(name, "probe", Side.BUY, dict(params), make_rng(0))
    except ValueError as exc:
        raise ValidationError(_join(path, "params"), str(exc))


def _parse_traders(node: Any, path: str) -> tuple[TraderSpec, ...]:
    if not isinstance(node, list) or not node:
        raise ValidationError(path, "expected a non-empty list of trader blocks")
    specs = []
    for i, entry in enumerate(node):
        epath = f"{path}[{i}]"
        d = _mapping(entry, epath)
        _no_unknown_keys(d, ("strategy", "side", "count", "params"), epath)
        for key in ("strategy", "side"):
            if key not in d:
                raise ValidationError(epath, f"needs {key}")
        name = _str(d["strategy"], _join(epath, "strategy"), choices=tuple(sorted(STRATEGIES)))
        side = Side.BUY if _str(d["side"], _join(epath, "side"), choices=("buy", "sell")) == "buy" else Side.SELL
        count = _int(d.get("count", 1), _join(epath, "count"), 1)
        params = dict(_mapping(d.get("params", {}), _join(epath, "params")))
        _probe_strategy(name, params, epath)
        specs.append(TraderSpec(name, side, count, params))
    return tuple(specs)


def _parse_outputs(node: Any, path: str) -> tuple[str, ...]:
    if not isinstance(node, list):
        raise ValidationError(path, "expected a list of output names")
    out = []
    for i, entry in enumerate(node):
        name = _str(entry, f"{path}[{i}]", choices=VALID_OUTPUTS)
        if name in out:
            raise ValidationError(f"{path}[{i}]", f"duplicate output {name!r}")
        out.append(name)
    return tuple(out)


def _parse_egt(node: Any, path: str) -> EgtSection:
    d = _mapping(node, path)
    _no_unknown_keys(d, ("strategies", "n_agents", "reps", "n_starts"), path)
    if "strategies" not in d or "n_agents" not in d:
        raise ValidationError(path, "needs strategies and n_agents")
    raw = d["strategies"]
    if not isinstance(raw, list) or not raw:
        raise ValidationError(_join(path, "strategies"), "expected a non-empty list")
    strategies = tuple(
        _parse_strategy_entry(entry, f"{path}.strategies[{i}]")
        for i, entry in enumerate(raw)
    )
    n_agents = _int(d["n_agents"], _join(path, "n_agents"), 2)
    if n_agents % 2:
        raise ValidationError(_join(path, "n_agents"), "must be even (half per side)")
    return EgtSection(
        strategies=strategies,
        n_agents=n_agents,
        reps=_int(d.get("reps", 50), _join(path, "reps"), 1),
        n_starts=_int(d.get("n_starts", 200), _join(path, "n_starts"), 1),
    )


_GA_KEYS = (
    "population",
    "generations",
    "tournament_size",
    "crossover_prob",
    "mutation_sigma_frac",
    "elitism",
    "fitness_reps",
)


def _parse_evolve(node: Any, path: str) -> EvolveSection:
    d = _mapping(node, path)
    allowed = ("target", "param", "objective", "rivals", "n_agents", "n_starts") + _GA_KEYS
    _no_unknown_keys(d, allowed, path)
    target = _str(d.get("target", "zip"), _join(path, "target"), choices=EVOLVE_TARGETS)
    ga_kwargs: dict[str, Any] = {}
    for key in _GA_KEYS:
        if key not in d:
            continue
        if key in ("crossover_prob", "mutation_sigma_frac"):
            ga_kwargs[key] = _float(d[key], _join(path, key))
        else:
            ga_kwargs[key] = _int(d[key], _join(path, key))
    try:
        ga = GaConfig(**ga_kwargs)
    except ValueError as exc:
        raise ValidationError(path, str(exc))
    rivals: tuple[tuple[str, dict], ...] = ()
    if "rivals" in d:
        raw = d["rivals"]
        if not isinstance(raw, list):
            raise ValidationError(_join(path, "rivals"), "expected a list")
        rivals = tuple(
            _parse_strategy_entry(entry, f"{path}.rivals[{i}]")
            for i, entry in enumerate(raw)
        )
    n_agents = _int(d.get("n_agents", 6), _join(path, "n_agents"), 2)
    if n_agents % 2:
        raise ValidationError(_join(path, "n_agents"), "must be even (half per side)")
    return EvolveSection(
        target=target,
        ga=ga,
        param=_str(d.get("param", "qs"), _join(path, "param"), choices=MECHANISM_PARAMS),
        objective=_str(d.get("objective", "alpha"), _join(path, "objective"), choices=OBJECTIVES),
        rivals=rivals,
        n_agents=n_agents,
        n_starts=_int(d.get("n_starts", 100), _join(path, "n_starts"), 1),
    )


def _parse_adapt(node: Any, path: str) -> AdaptSection:
    d = _mapping(node, path)
    _no_unknown_keys(d, ("param", "arms", "epsilon", "pulls"), path)
    if "arms" not in d:
        raise ValidationError(path, "needs a list of arm values")
    arms = _number_list(d["arms"], _join(path, "arms"))
    for i, v in enumerate(arms):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"{path}.arms[{i}]", f"must lie in [0, 1], got {v}")
    return AdaptSection(
        param=_str(d.get("param", "qs"), _join(path, "param"), choices=MECHANISM_PARAMS),
        arms=arms,
        epsilon=_float(d.get("epsilon", 0.1), _join(path, "epsilon"), 0.0, 1.0),
        pulls=_int(d.get("pulls", 100), _join(path, "pulls"), 1),
    )


# ------------------------------------------------------------- entry points

_TOP_KEYS = (
    "market",
    "schedule",
    "traders",
    "reps",
    "master_seed",
    "outputs",
    "egt",
    "evolve",
    "adapt",
)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate one experiment document."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else 0
        raise ParseError(line, exc.problem or "invalid YAML")
    except yaml.YAMLError as exc:
        raise ParseError(0, str(exc))
    if data is None:
        raise ValidationError("", "the document is empty")
    root = _mapping(data, "")
    _no_unknown_keys(root, _TOP_KEYS, "")
    for key in ("schedule", "traders"):
        if key not in root:
            raise ValidationError("", f"needs a {key} section")
    market = _parse_market(root.get("market", {}), "market")
    schedule = _parse_schedule(root["schedule"], market.days, "schedule")
    traders = _parse_traders(root["traders"], "traders")
    first = schedule if isinstance(schedule, Schedule) else schedule[0]
    n_buy = sum(s.count for s in traders if s.side is Side.BUY)
    n_sell = sum(s.count for s in traders if s.side is Side.SELL)
    if n_buy != len(first.buyer_values) or n_sell != len(first.seller_values):
        raise ValidationError(
            "traders",
            f"{n_buy} buyers and {n_sell} sellers configured, but the schedule "
            f"has {len(first.buyer_values)} buyer and {len(first.seller_values)} seller values",
        )
    for v in first.buyer_values + first.seller_values:
        if not market.min_price <= v <= market.max_price:
            raise ValidationError(
                "schedule",
                f"value {v} outside the market price band "
                f"[{market.min_price}, {market.max_price}]",
            )
    cfg = ExperimentConfig(
        market=market,
        schedule=schedule,
        traders=traders,
        reps=_int(root.get("reps", 1), "reps", 1),
        master_seed=_int(root.get("master_seed", 0), "master_seed"),
        outputs=_parse_outputs(root["outputs"], "outputs")
        if "outputs" in root
        else ("transactions", "metrics"),
        egt=_parse_egt(root["egt"], "egt") if "egt" in root else None,
        evolve=_parse_evolve(root["evolve"], "evolve") if "evolve" in root else None,
        adapt=_parse_adapt(root["adapt"], "adapt") if "adapt" in root else None,
    )
    for section, name in ((cfg.egt, "egt"), (cfg.evolve, "evolve")):
        if section is None:
            continue
        wants = getattr(section, "n_agents")
        if name == "evolve" and section.target != "basin":
            continue
        if not isinstance(schedule, Schedule):
            raise ValidationError(name, "needs an unshifted schedule")
        if wants != 2 * len(schedule.buyer_values) or wants != 2 * len(schedule.seller_values):
            raise ValidationError(
                _join(name, "n_agents"),
                f"{wants} agents need a {wants // 2}x{wants // 2} schedule, got "
                f"{len(schedule.buyer_values)}x{len(schedule.seller_values)}",
            )
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read and parse a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
