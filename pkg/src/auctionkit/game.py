"""The trading game loop.

A game is days x rounds of shout slots. Each slot: pick a side (qs-biased
coin), pick an entitled trader on it uniformly, ask its strategy for a
shout, and resolve the shout against the book under the configured
clearing mode. A round ends when every entitled trader has failed a slot
consecutively (declined, or had its shout rejected), when entitlements
run out on both sides, or at a hard slot cap. Periodic mode uncrosses the
book at round boundaries instead of trading on arrival.

Everything observable is logged; identical (config, schedules, traders,
seed) reproduce an identical GameLog.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .market import (
    ClearingMode,
    MarketConfig,
    OrderBook,
    Schedule,
    Shout,
    ShoutStatus,
    Side,
    Transaction,
    clear_periodic,
    market_quote,
    post_continuous,
    quantize,
    select_next_side,
    validate_shout,
)
from .seeding import make_rng
from .strategies import MarketEvent, ShoutRecord, TraderContext, make_strategy

HISTORY_CAP = 256


@dataclass(frozen=True)
class TraderDef:
    """Declarative trader: id, side, strategy name, strategy parameters."""

    trader_id: str
    side: Side
    strategy: str
    params: dict = field(default_factory=dict)


def make_defs(
    buyer_strategies: Sequence[tuple[str, dict]],
    seller_strategies: Sequence[tuple[str, dict]],
) -> list[TraderDef]:
    """Positional trader ids: B0.. for buyers, S0.. for sellers."""
    defs = [
        TraderDef(f"B{i}", Side.BUY, name, dict(params))
        for i, (name, params) in enumerate(buyer_strategies)
    ]
    defs += [
        TraderDef(f"S{i}", Side.SELL, name, dict(params))
        for i, (name, params) in enumerate(seller_strategies)
    ]
    return defs


@dataclass(frozen=True)
class QuoteSnapshot:
    day: int
    round: int
    bid_quote: float
    ask_quote: float


@dataclass
class GameLog:
    """Complete record of one game: inputs and every observable event."""

    config: MarketConfig
    day_schedules: tuple[Schedule, ...]
    defs: tuple[TraderDef, ...]
    seed: int
    shouts: list[ShoutRecord] = field(default_factory=list)
    transactions: list[Transaction] = field(default_factory=list)
    quotes: list[QuoteSnapshot] = field(default_factory=list)
    trader_profits: dict[str, float] = field(default_factory=dict)

    def buyer_defs(self) -> list[TraderDef]:
        return [d for d in self.defs if d.side is Side.BUY]

    def seller_defs(self) -> list[TraderDef]:
        return [d for d in self.defs if d.side is Side.SELL]

    def value_of(self, trader_id: str, day: int) -> float:
        """The trader's limit value on a given day."""
        sched = self.day_schedules[day]
        for i, d in enumerate(self.buyer_defs()):
            if d.trader_id == trader_id:
                return sched.buyer_values[i]
        for i, d in enumerate(self.seller_defs()):
            if d.trader_id == trader_id:
                return sched.seller_values[i]
        from .market import UnknownTraderError

        raise UnknownTraderError(trader_id)


class _TraderState:
    __slots__ = (
        "def_",
        "strategy",
        "rng",
        "side_index",
        "limit",
        "units_left",
        "last_result",
        "profit",
        "round_profit",
    )

    def __init__(self, def_: TraderDef, strategy, rng):
        self.def_ = def_
        self.strategy = strategy
        self.rng = rng
        self.side_index = 0
        self.limit = 0.0
        self.units_left = 0
        self.last_result: Optional[ShoutStatus] = None
        self.profit = 0.0
        self.round_profit = 0.0


def normalize_schedules(
    schedule: Union[Schedule, Sequence[Schedule]], days: int
) -> tuple[Schedule, ...]:
    """One schedule per day; a single schedule repeats across all days.

    Day-to-day shifts must preserve per-side trader counts, because the
    trader population is fixed for the whole game.
    """
    if isinstance(schedule, Schedule):
        return (schedule,) * days
    schedules = tuple(schedule)
    if len(schedules) != days:
        raise ValueError(f"need {days} day schedules, got {len(schedules)}")
    first = schedules[0]
    for s in schedules[1:]:
        if len(s.buyer_values) != len(first.buyer_values) or len(
            s.seller_values
        ) != len(first.seller_values):
            raise ValueError("day schedules must keep the same trader counts")
    return schedules


def run_game(
    cfg: MarketConfig,
    schedule: Union[Schedule, Sequence[Schedule]],
    defs: Sequence[TraderDef],
    seed: int,
) -> GameLog:
    """Play one full game and return its log."""
    day_schedules = normalize_schedules(schedule, cfg.days)
    defs = tuple(defs)
    ids = [d.trader_id for d in defs]
    if len(set(ids)) != len(ids):
        raise ValueError("trader ids must be unique")
    n_buyers = sum(1 for d in defs if d.side is Side.BUY)
    n_sellers = len(defs) - n_buyers
    sched0 = day_schedules[0]
    if n_buyers != len(sched0.buyer_values) or n_sellers != len(sched0.seller_values):
        raise ValueError(
            f"trader counts ({n_buyers} buyers, {n_sellers} sellers) must match "
            f"schedule sizes ({len(sched0.buyer_values)}, {len(sched0.seller_values)})"
        )
    for s in day_schedules:
        for v in s.buyer_values + s.seller_values:
            if not cfg.min_price <= v <= cfg.max_price:
                raise ValueError(f"schedule value {v} outside market price bounds")

    auction_rng = make_rng(seed, 0)
    traders: list[_TraderState] = []
    for i, d in enumerate(defs):
        rng = make_rng(seed, i + 1)
        strat = make_strategy(d.strategy, d.trader_id, d.side, d.params, rng)
        traders.append(_TraderState(d, strat, rng))
    buyers = [t for t in traders if t.def_.side is Side.BUY]
    sellers = [t for t in traders if t.def_.side is Side.SELL]
    for i, t in enumerate(buyers):
        t.side_index = i
    for i, t in enumerate(sellers):
        t.side_index = i

    log = GameLog(config=cfg, day_schedules=day_schedules, defs=defs, seed=seed)
    book = OrderBook()
    history: deque[ShoutRecord] = deque(maxlen=HISTORY_CAP)
    version = 0
    seq = 0
    # trader_id -> record of its standing shout, for flag flips on later trades
    standing: dict[str, ShoutRecord] = {}
    max_slots = cfg.max_slots_per_round or (250 + 50 * len(traders))
    continuous = cfg.clearing_mode is ClearingMode.CONTINUOUS

    def dispatch(event: MarketEvent) -> None:
        for t in traders:
            t.strategy.observe(event, t.rng)

    def settle(txn: Transaction, day: int, flip_ids: tuple[str, ...]) -> None:
        """Book profits and entitlements for both parties; flip the standing
        records named in flip_ids to TRADED (the incoming shout of a
        continuous cross never stood, so only its counterpart flips)."""
        nonlocal version
        sched = day_schedules[day]
        for tid, is_buyer in ((txn.buyer_id, True), (txn.seller_id, False)):
            t = by_id[tid]
            value = (
                sched.buyer_values[t.side_index]
                if is_buyer
                else sched.seller_values[t.side_index]
            )
            gain = (value - txn.price) if is_buyer else (txn.price - value)
            t.profit += gain
            t.round_profit += gain
            t.units_left -= 1
            t.last_result = ShoutStatus.TRADED
            rec = standing.pop(tid, None)
            if rec is not None and tid in flip_ids:
                rec.status = ShoutStatus.TRADED
                version += 1
        log.transactions.append(txn)

    by_id = {t.def_.trader_id: t for t in traders}

    for day in range(cfg.days):
        sched = day_schedules[day]
        for i, t in enumerate(buyers):
            t.limit = sched.buyer_values[i]
        for i, t in enumerate(sellers):
            t.limit = sched.seller_values[i]
        for t in traders:
            t.units_left = sched.units_per_trader_per_day
            t.strategy.start_day(t.limit)
        book.clear()
        standing.clear()

        for rnd in range(cfg.rounds_per_day):
            if not cfg.persistent_shouts:
                book.clear()
                standing.clear()
            failures = 0
            slots = 0
            while slots < max_slots:
                elig_buy = [t for t in buyers if t.units_left > 0]
                elig_sell = [t for t in sellers if t.units_left > 0]
                n_elig = len(elig_buy) + len(elig_sell)
                if n_elig == 0 or failures >= n_elig:
                    break
                side = select_next_side(cfg.qs, auction_rng)
                pool = elig_sell if side is Side.SELL else elig_buy
                if not pool:
                    pool = elig_buy if side is Side.SELL else elig_sell
                trader = pool[auction_rng.randrange(len(pool))]
                slots += 1

                bid_quote, ask_quote = market_quote(book, cfg)
                ctx = TraderContext(
                    trader_id=trader.def_.trader_id,
                    side=trader.def_.side,
                    limit=trader.limit,
                    bid_quote=bid_quote,
                    ask_quote=ask_quote,
                    has_bid=book.best_bid() is not None,
                    has_ask=book.best_ask() is not None,
                    min_price=cfg.min_price,
                    max_price=cfg.max_price,
                    day=day,
                    round=rnd,
                    rounds_per_day=cfg.rounds_per_day,
                    history_window=history,
                    history_version=version,
                    last_own_result=trader.last_result,
                    units_left=trader.units_left,
                )
                price = trader.strategy.shout(ctx, trader.rng)
                if price is None:
                    failures += 1
                    continue
                seq += 1
                shout = Shout(
                    side=trader.def_.side,
                    price=quantize(float(price), cfg),
                    trader_id=trader.def_.trader_id,
                    day=day,
                    round=rnd,
                    seq=seq,
                )
                if continuous:
                    counterpart = (
                        book.best_ask() if shout.side is Side.BUY else book.best_bid()
                    )
                    status, txn = post_continuous(book, shout, cfg)
                else:
                    counterpart = None
                    if validate_shout(book, shout, cfg):
                        # replaces the trader's own standing shout, if any
                        book.insert(shout)
                        status, txn = ShoutStatus.STOOD, None
                    else:
                        status, txn = ShoutStatus.REJECTED, None
                record = ShoutRecord(shout, status)
                log.shouts.append(record)
                history.append(record)
                version += 1
                trader.last_result = status
                if status is ShoutStatus.REJECTED:
                    failures += 1
                    dispatch(
                        MarketEvent(shout.side, shout.price, shout.trader_id, False)
                    )
                    continue
                failures = 0
                if status is ShoutStatus.STOOD:
                    standing[shout.trader_id] = record
                    dispatch(
                        MarketEvent(shout.side, shout.price, shout.trader_id, False)
                    )
                else:
                    flip = (counterpart.trader_id,) if counterpart is not None else ()
                    settle(txn, day, flip)
                    dispatch(
                        MarketEvent(shout.side, shout.price, shout.trader_id, True)
                    )
                    if counterpart is not None:
                        dispatch(
                            MarketEvent(
                                counterpart.side,
                                counterpart.price,
                                counterpart.trader_id,
                                True,
                            )
                        )

            if not continuous and (
                (rnd + 1) % cfg.rounds_per_clear == 0 or rnd == cfg.rounds_per_day - 1
            ):
                txns = clear_periodic(book, cfg, day, rnd, seq + 1)
                seq += len(txns)
                for txn in txns:
                    bid_rec = standing.get(txn.buyer_id)
                    ask_rec = standing.get(txn.seller_id)
                    settle(txn, day, (txn.buyer_id, txn.seller_id))
                    for rec in (bid_rec, ask_rec):
                        if rec is not None:
                            dispatch(
                                MarketEvent(
                                    rec.shout.side,
                                    rec.shout.price,
                                    rec.shout.trader_id,
                                    True,
                                )
                            )

            bid_quote, ask_quote = market_quote(book, cfg)
            log.quotes.append(QuoteSnapshot(day, rnd, bid_quote, ask_quote))
            for t in traders:
                t.strategy.end_round(t.round_profit, t.rng)
                t.round_profit = 0.0

    log.trader_profits = {t.def_.trader_id: t.profit for t in traders}
    return log
