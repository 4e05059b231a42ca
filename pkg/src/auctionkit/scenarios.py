"""Reusable supply and demand schedule generators.

Experiments in this package are parameterized by schedule shape rather
than hard-coded value lists: downward-sloping linear demand against
upward-sloping linear supply, flat (perfectly elastic) supply, uniform
random draws, and mid-run demand or supply shifts.
"""

from __future__ import annotations

import random
from typing import Optional, Sequence

from .market import Schedule

__all__ = [
    "linear_schedule",
    "flat_supply_schedule",
    "symmetric_linear",
    "uniform_random_schedule",
    "shifted_schedules",
]


def _check_positive(values: Sequence[float], label: str) -> None:
    if any(v < 0 for v in values):
        raise ValueError(f"{label} values must be non-negative, got {min(values)}")


def linear_schedule(
    n_per_side: int,
    buyer_intercept: float = 150.0,
    buyer_slope: float = 10.0,
    seller_intercept: float = 50.0,
    seller_slope: float = 10.0,
    units_per_trader_per_day: int = 1,
) -> Schedule:
    """Linear demand and supply: buyer i values buyer_intercept - i*slope,
    seller i costs seller_intercept + i*slope."""
    if n_per_side < 1:
        raise ValueError("n_per_side must be at least 1")
    buyers = tuple(buyer_intercept - i * buyer_slope for i in range(n_per_side))
    sellers = tuple(seller_intercept + i * seller_slope for i in range(n_per_side))
    _check_positive(buyers, "buyer")
    _check_positive(sellers, "seller")
    return Schedule(buyers, sellers, units_per_trader_per_day)


def flat_supply_schedule(
    n_per_side: int,
    buyer_intercept: float = 150.0,
    buyer_slope: float = 10.0,
    seller_value: float = 50.0,
    units_per_trader_per_day: int = 1,
) -> Schedule:
    """Linear demand against perfectly elastic supply: every seller shares
    one cost, so the equilibrium price pins to it while quantity comes
    from where demand crosses."""
    if n_per_side < 1:
        raise ValueError("n_per_side must be at least 1")
    buyers = tuple(buyer_intercept - i * buyer_slope for i in range(n_per_side))
    sellers = (float(seller_value),) * n_per_side
    _check_positive(buyers, "buyer")
    _check_positive(sellers, "seller")
    return Schedule(buyers, sellers, units_per_trader_per_day)


def symmetric_linear(n_per_side: int = 10, units_per_trader_per_day: int = 1) -> Schedule:
    """The workhorse schedule: demand 150 stepping down by 10 against
    supply 50 stepping up by 10.

    At the default size the curves cross at price 100 with six trades and
    a 300 surplus per day, convenient round numbers for experiments.
    """
    return linear_schedule(
        n_per_side,
        buyer_intercept=150.0,
        buyer_slope=10.0,
        seller_intercept=50.0,
        seller_slope=10.0,
        units_per_trader_per_day=units_per_trader_per_day,
    )


def uniform_random_schedule(
    n_buyers: int,
    n_sellers: int,
    low: float,
    high: float,
    rng: random.Random,
    units_per_trader_per_day: int = 1,
) -> Schedule:
    """Private values drawn independently and uniformly from [low, high]
    for both sides."""
    if n_buyers < 1 or n_sellers < 1:
        raise ValueError("need at least one trader per side")
    if not 0 <= low <= high:
        raise ValueError("need 0 <= low <= high")
    buyers = tuple(rng.uniform(low, high) for _ in range(n_buyers))
    sellers = tuple(rng.uniform(low, high) for _ in range(n_sellers))
    return Schedule(buyers, sellers, units_per_trader_per_day)


def shifted_schedules(
    days: int,
    shift_day: int,
    before: Schedule,
    after: Optional[Schedule] = None,
) -> tuple[Schedule, ...]:
    """Per-day schedule list that switches from `before` to `after` at
    shift_day (0-based). Trader counts must match across the shift so the
    same population can keep trading."""
    if days < 1:
        raise ValueError("days must be at least 1")
    if not 0 <= shift_day <= days:
        raise ValueError(f"shift_day {shift_day} outside 0..{days}")
    if after is None:
        after = before
    if len(after.buyer_values) != len(before.buyer_values) or len(
        after.seller_values
    ) != len(before.seller_values):
        raise ValueError("schedules before and after the shift must keep trader counts")
    return tuple(before if d < shift_day else after for d in range(days))
