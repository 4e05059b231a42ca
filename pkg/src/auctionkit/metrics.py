"""Market performance measures.

Actual profit is taken in absolute form, sum of |value - price| over
traded units, so pathological loss-making trades inflate rather than
cancel it; the signed variant (realized surplus) is exposed alongside it,
and efficiency is reported in both forms. Alpha is the root mean squared
deviation of transaction prices from the equilibrium price, as a
percentage of it. Profit dispersion is the RMS gap between each trader's
actual and competitive-equilibrium profit. Market power compares one
side's realized surplus against its equilibrium share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .game import GameLog
from .market import EquilibriumReport, LengthMismatchError, Schedule, Side, compute_equilibrium


def actual_profit(values: Sequence[float], prices: Sequence[float]) -> float:
    """Sum of |value - price| over traded units."""
    if len(values) != len(prices):
        raise LengthMismatchError(
            f"{len(values)} values vs {len(prices)} prices"
        )
    return float(sum(abs(v - p) for v, p in zip(values, prices)))


def actual_profit_signed(values: Sequence[float], prices: Sequence[float],
                         sides: Sequence[Side]) -> float:
    """Realized surplus: value - price for buys, price - value for sells."""
    if not (len(values) == len(prices) == len(sides)):
        raise LengthMismatchError("values, prices, sides must align")
    total = 0.0
    for v, p, s in zip(values, prices, sides):
        total += (v - p) if s is Side.BUY else (p - v)
    return float(total)


def equilibrium_profit(schedule: Schedule) -> float:
    """Competitive-equilibrium surplus of one trading day: sum of
    |value - p0| over the intra-marginal units of both sides."""
    return compute_equilibrium(schedule).total_surplus


def allocative_efficiency(pa: float, pe: float) -> Optional[float]:
    """100 * Pa / Pe, undefined (None) when the equilibrium surplus is zero."""
    if pe == 0.0:
        return None
    return 100.0 * pa / pe


def convergence_alpha(prices: Sequence[float], p0: float) -> Optional[float]:
    """RMS deviation of prices from p0 as a percentage of p0.

    None when there are no prices; p0 must be positive.
    """
    if not prices:
        return None
    if p0 <= 0.0:
        raise ValueError(f"p0 must be positive, got {p0}")
    ms = sum((p - p0) ** 2 for p in prices) / len(prices)
    return 100.0 / p0 * math.sqrt(ms)


def profit_dispersion(actual: Sequence[float], equilibrium: Sequence[float]) -> float:
    """RMS of per-trader (actual - equilibrium) profit gaps, all traders
    counted, untraded traders at actual profit zero."""
    if len(actual) != len(equilibrium):
        raise LengthMismatchError(
            f"{len(actual)} actual vs {len(equilibrium)} equilibrium profits"
        )
    if not actual:
        return 0.0
    ms = sum((a - e) ** 2 for a, e in zip(actual, equilibrium)) / len(actual)
    return math.sqrt(ms)


def market_power(side_actual_signed: float, side_equilibrium: float) -> Optional[float]:
    """(realized - equilibrium) / equilibrium surplus for one side; None
    when the side's equilibrium surplus is zero."""
    if side_equilibrium == 0.0:
        return None
    return (side_actual_signed - side_equilibrium) / side_equilibrium


def _intra_marginal_profits(schedule: Schedule, report: EquilibriumReport) -> tuple[list[float], list[float]]:
    """Per-trader equilibrium profit for one day.

    Units are ranked best-first (ties by schedule position); the first q0
    units on each side are intra-marginal and earn |value - p0| each.
    """
    u = schedule.units_per_trader_per_day
    buyer_units = [
        (v, i) for i, v in enumerate(schedule.buyer_values) for _ in range(u)
    ]
    seller_units = [
        (v, i) for i, v in enumerate(schedule.seller_values) for _ in range(u)
    ]
    buyer_units.sort(key=lambda t: (-t[0], t[1]))
    seller_units.sort(key=lambda t: (t[0], t[1]))
    pb = [0.0] * len(schedule.buyer_values)
    ps = [0.0] * len(schedule.seller_values)
    for v, i in buyer_units[: report.q0]:
        pb[i] += v - report.p0
    for v, i in seller_units[: report.q0]:
        ps[i] += report.p0 - v
    return pb, ps


@dataclass(frozen=True)
class MetricsReport:
    """Whole-run and per-day measures for one game."""

    pa: float
    pa_signed: float
    pe: float
    ea: Optional[float]
    ea_signed: Optional[float]
    alpha: Optional[float]
    alpha_by_day: tuple[Optional[float], ...]
    volume_by_day: tuple[int, ...]
    day_p0: tuple[float, ...]
    profit_dispersion: float
    market_power_buyers: Optional[float]
    market_power_sellers: Optional[float]

    @property
    def volume(self) -> int:
        return sum(self.volume_by_day)


def metrics_report(log: GameLog) -> MetricsReport:
    """Assemble every measure from one game log."""
    days = log.config.days
    reports: list[EquilibriumReport] = []
    cache: dict[Schedule, EquilibriumReport] = {}
    for sched in log.day_schedules:
        if sched not in cache:
            cache[sched] = compute_equilibrium(sched)
        reports.append(cache[sched])

    buyer_ids = [d.trader_id for d in log.buyer_defs()]
    seller_ids = [d.trader_id for d in log.seller_defs()]
    actual = {tid: 0.0 for tid in buyer_ids + seller_ids}
    pa_abs = 0.0
    pa_buy_signed = 0.0
    pa_sell_signed = 0.0
    volume = [0] * days
    sq_dev = [0.0] * days
    for t in log.transactions:
        vb = log.value_of(t.buyer_id, t.day)
        vs = log.value_of(t.seller_id, t.day)
        pa_abs += abs(vb - t.price) + abs(t.price - vs)
        pa_buy_signed += vb - t.price
        pa_sell_signed += t.price - vs
        actual[t.buyer_id] += vb - t.price
        actual[t.seller_id] += t.price - vs
        volume[t.day] += 1
        sq_dev[t.day] += (t.price - reports[t.day].p0) ** 2

    pe = sum(r.total_surplus for r in reports)
    pe_buy = sum(r.buyer_surplus for r in reports)
    pe_sell = sum(r.seller_surplus for r in reports)

    alpha_by_day = []
    for d in range(days):
        if volume[d] == 0:
            alpha_by_day.append(None)
        else:
            alpha_by_day.append(
                100.0 / reports[d].p0 * math.sqrt(sq_dev[d] / volume[d])
            )
    total_volume = sum(volume)
    if total_volume == 0:
        alpha = None
    else:
        mean_p0 = sum(r.p0 for r in reports) / days
        alpha = 100.0 / mean_p0 * math.sqrt(sum(sq_dev) / total_volume)

    eq_profit = {tid: 0.0 for tid in buyer_ids + seller_ids}
    for sched, rep in zip(log.day_schedules, reports):
        pb, ps = _intra_marginal_profits(sched, rep)
        for tid, v in zip(buyer_ids, pb):
            eq_profit[tid] += v
        for tid, v in zip(seller_ids, ps):
            eq_profit[tid] += v
    ids = buyer_ids + seller_ids
    dispersion = profit_dispersion(
        [actual[t] for t in ids], [eq_profit[t] for t in ids]
    )

    return MetricsReport(
        pa=pa_abs,
        pa_signed=pa_buy_signed + pa_sell_signed,
        pe=pe,
        ea=allocative_efficiency(pa_abs, pe),
        ea_signed=allocative_efficiency(pa_buy_signed + pa_sell_signed, pe),
        alpha=alpha,
        alpha_by_day=tuple(alpha_by_day),
        volume_by_day=tuple(volume),
        day_p0=tuple(r.p0 for r in reports),
        profit_dispersion=dispersion,
        market_power_buyers=market_power(pa_buy_signed, pe_buy),
        market_power_sellers=market_power(pa_sell_signed, pe_sell),
    )
