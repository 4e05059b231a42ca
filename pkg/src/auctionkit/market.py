"""Core double-auction market mechanics.

Shouts, the order book, competitive equilibrium, transaction pricing, and
the two clearing modes (continuous crossing and periodic uniform-price
clears). Everything here is deterministic given its inputs; randomness
lives in the game loop and the strategies.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional


class AuctionError(Exception):
    """Base class for domain errors raised by the market."""


class CrossedInputError(AuctionError, ValueError):
    """Raised when a pricing rule is handed an ask above the bid."""


class NoEligibleTraderError(AuctionError):
    """Raised when neither side has a trader with entitlement left."""


class UnknownTraderError(AuctionError, KeyError):
    """Raised when a transaction references a trader id not in the schedule."""


class LengthMismatchError(AuctionError, ValueError):
    """Raised when paired per-trader vectors differ in length."""


class Side(str, enum.Enum):
    BUY = "buy"
    SELL = "sell"

    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class ShoutStatus(str, enum.Enum):
    STOOD = "stood"        # accepted into the book, not (yet) traded
    TRADED = "traded"      # matched into a transaction
    REJECTED = "rejected"  # refused by the improvement rule or bounds check


@dataclass(frozen=True)
class Shout:
    """A single bid or ask: side, price, owner, and time of arrival.

    Time is the triple (day, round, seq); seq increases over the whole
    game so equal-priced shouts break ties by arrival order.
    """

    side: Side
    price: float
    trader_id: str
    day: int
    round: int
    seq: int


@dataclass(frozen=True)
class Transaction:
    """A matched bid/ask pair with its execution price and time."""

    buyer_id: str
    seller_id: str
    price: float
    bid_price: float
    ask_price: float
    day: int
    round: int
    seq: int


@dataclass(frozen=True)
class KDAPricing:
    """k-double-auction rule: price = k * ask + (1 - k) * bid."""

    k: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"k must be in [0, 1], got {self.k}")


@dataclass(frozen=True)
class UniformPricing:
    """Uniform-price rule: price sits at ku of the way up the clearing interval.

    ku = 0 picks the low end of the interval (buyer-favoring, the
    (M+1)st-price rule); ku = 1 picks the high end (Mth-price rule).
    """

    ku: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.ku <= 1.0:
            raise ValueError(f"ku must be in [0, 1], got {self.ku}")


PricingRule = KDAPricing | UniformPricing


class ClearingMode(str, enum.Enum):
    CONTINUOUS = "continuous"
    PERIODIC = "periodic"


@dataclass
class MarketConfig:
    """Mechanism parameters for one market.

    min_price / max_price double as the quote defaults: the bid quote when
    no bid stands, and the ask quote when no ask stands.
    """

    clearing_mode: ClearingMode = ClearingMode.CONTINUOUS
    rounds_per_clear: int = 1
    improvement_rule: bool = True
    pricing: PricingRule = field(default_factory=KDAPricing)
    qs: float = 0.5
    days: int = 5
    rounds_per_day: int = 50
    min_price: float = 0.0
    max_price: float = 200.0
    persistent_shouts: bool = True
    tick_size: Optional[float] = None
    max_slots_per_round: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.qs <= 1.0:
            raise ValueError(f"qs must be in [0, 1], got {self.qs}")
        if self.days < 1 or self.rounds_per_day < 1:
            raise ValueError("days and rounds_per_day must be positive")
        if self.rounds_per_clear < 1:
            raise ValueError("rounds_per_clear must be positive")
        if self.max_price <= self.min_price:
            raise ValueError("max_price must exceed min_price")
        if self.tick_size is not None and self.tick_size <= 0:
            raise ValueError("tick_size must be positive when set")


@dataclass(frozen=True)
class Schedule:
    """Per-day value entitlements: one limit value per trader per side.

    Each trader may transact up to units_per_trader_per_day times per day,
    every unit at the trader's single limit value.
    """

    buyer_values: tuple[float, ...]
    seller_values: tuple[float, ...]
    units_per_trader_per_day: int = 1

    def __post_init__(self):
        if not self.buyer_values or not self.seller_values:
            raise LengthMismatchError("schedule needs at least one value per side")
        if self.units_per_trader_per_day < 1:
            raise ValueError("units_per_trader_per_day must be positive")
        # tuples may arrive as lists from config parsing
        object.__setattr__(self, "buyer_values", tuple(float(v) for v in self.buyer_values))
        object.__setattr__(self, "seller_values", tuple(float(v) for v in self.seller_values))

    def expanded(self) -> tuple[list[float], list[float]]:
        """Unit-level value lists: each trader's value repeated per unit."""
        u = self.units_per_trader_per_day
        return (
            [v for v in self.buyer_values for _ in range(u)],
            [v for v in self.seller_values for _ in range(u)],
        )


@dataclass(frozen=True)
class EquilibriumReport:
    """Competitive equilibrium of a schedule: quantity, price interval, surplus."""

    q0: int
    p_low: float
    p_high: float
    p0: float
    buyer_surplus: float
    seller_surplus: float

    @property
    def total_surplus(self) -> float:
        return self.buyer_surplus + self.seller_surplus


def compute_equilibrium(schedule: Schedule) -> EquilibriumReport:
    """Intersect the induced supply and demand steps of a schedule.

    q0 is the largest m such that the m-th highest buyer value is at least
    the m-th lowest seller value (unit-level, after entitlement expansion).
    The equilibrium price interval is bounded by the marginal and first
    extra-marginal units on each side; p0 is its midpoint. Surpluses are
    evaluated at p0 over the q0 intra-marginal units of each side.
    """
    buyers, sellers = schedule.expanded()
    b = sorted(buyers, reverse=True)
    a = sorted(sellers)
    m = 0
    for i in range(min(len(b), len(a))):
        if b[i] >= a[i]:
            m = i + 1
        else:
            break
    if m == 0:
        low, high = b[0], a[0]
    else:
        low = max(a[m - 1], b[m]) if m < len(b) else a[m - 1]
        high = min(b[m - 1], a[m]) if m < len(a) else b[m - 1]
    p0 = (low + high) / 2.0
    buyer_surplus = sum(b[i] - p0 for i in range(m))
    seller_surplus = sum(p0 - a[i] for i in range(m))
    return EquilibriumReport(
        q0=m,
        p_low=low,
        p_high=high,
        p0=p0,
        buyer_surplus=buyer_surplus,
        seller_surplus=seller_surplus,
    )


class OrderBook:
    """Standing shouts, at most one per trader.

    Insertion replaces the trader's previous standing shout. Best-of-side
    queries break price ties by earliest arrival (lowest seq).
    """

    def __init__(self):
        self._bids: dict[str, Shout] = {}
        self._asks: dict[str, Shout] = {}

    def _side_map(self, side: Side) -> dict[str, Shout]:
        return self._bids if side is Side.BUY else self._asks

    def insert(self, shout: Shout) -> None:
        self._side_map(shout.side)[shout.trader_id] = shout

    def remove(self, side: Side, trader_id: str) -> None:
        self._side_map(side).pop(trader_id, None)

    def standing(self, side: Side, trader_id: str) -> Optional[Shout]:
        return self._side_map(side).get(trader_id)

    def best_bid(self) -> Optional[Shout]:
        if not self._bids:
            return None
        return min(self._bids.values(), key=lambda s: (-s.price, s.seq))

    def best_ask(self) -> Optional[Shout]:
        if not self._asks:
            return None
        return min(self._asks.values(), key=lambda s: (s.price, s.seq))

    def bids(self) -> list[Shout]:
        """Bids best-first: descending price, ties by arrival."""
        return sorted(self._bids.values(), key=lambda s: (-s.price, s.seq))

    def asks(self) -> list[Shout]:
        """Asks best-first: ascending price, ties by arrival."""
        return sorted(self._asks.values(), key=lambda s: (s.price, s.seq))

    def clear(self) -> None:
        self._bids.clear()
        self._asks.clear()

    def is_crossed(self) -> bool:
        bb, ba = self.best_bid(), self.best_ask()
        return bb is not None and ba is not None and bb.price >= ba.price

    def __len__(self) -> int:
        return len(self._bids) + len(self._asks)


def market_quote(book: OrderBook, cfg: MarketConfig) -> tuple[float, float]:
    """(bid_quote, ask_quote): best standing prices, defaults when a side is empty."""
    bb, ba = book.best_bid(), book.best_ask()
    bid_quote = bb.price if bb is not None else cfg.min_price
    ask_quote = ba.price if ba is not None else cfg.max_price
    return bid_quote, ask_quote


def validate_shout(book: OrderBook, shout: Shout, cfg: MarketConfig) -> bool:
    """Accept or reject an arriving shout.

    Price must lie within the market bounds. Under the improvement rule a
    bid must strictly beat the best standing bid and an ask must strictly
    undercut the best standing ask; a trader's own standing shout counts,
    so re-shouting the same price is rejected.
    """
    if not cfg.min_price <= shout.price <= cfg.max_price:
        return False
    if cfg.improvement_rule:
        if shout.side is Side.BUY:
            bb = book.best_bid()
            if bb is not None and shout.price <= bb.price:
                return False
        else:
            ba = book.best_ask()
            if ba is not None and shout.price >= ba.price:
                return False
    return True


def transaction_price(pricing: PricingRule, ask_price: float, bid_price: float) -> float:
    """Execution price for a matched pair under the configured rule."""
    if ask_price > bid_price:
        raise CrossedInputError(
            f"ask {ask_price} exceeds bid {bid_price}; pair does not cross"
        )
    if isinstance(pricing, KDAPricing):
        return pricing.k * ask_price + (1.0 - pricing.k) * bid_price
    return ask_price + pricing.ku * (bid_price - ask_price)


def quantize(price: float, cfg: MarketConfig) -> float:
    """Snap a price to the configured tick, if any."""
    if cfg.tick_size is None:
        return price
    return round(price / cfg.tick_size) * cfg.tick_size


def post_continuous(
    book: OrderBook, shout: Shout, cfg: MarketConfig
) -> tuple[ShoutStatus, Optional[Transaction]]:
    """Process one shout under continuous clearing.

    A rejected shout leaves the book untouched. An accepted shout that
    crosses the best opposing standing shout trades immediately at the
    pair's price; otherwise it stands, replacing the trader's previous
    shout on that side.
    """
    if not validate_shout(book, shout, cfg):
        return ShoutStatus.REJECTED, None
    if shout.side is Side.BUY:
        ba = book.best_ask()
        if ba is not None and shout.price >= ba.price:
            price = transaction_price(cfg.pricing, ba.price, shout.price)
            book.remove(Side.SELL, ba.trader_id)
            book.remove(Side.BUY, shout.trader_id)
            txn = Transaction(
                buyer_id=shout.trader_id,
                seller_id=ba.trader_id,
                price=price,
                bid_price=shout.price,
                ask_price=ba.price,
                day=shout.day,
                round=shout.round,
                seq=shout.seq,
            )
            return ShoutStatus.TRADED, txn
    else:
        bb = book.best_bid()
        if bb is not None and shout.price <= bb.price:
            price = transaction_price(cfg.pricing, shout.price, bb.price)
            book.remove(Side.BUY, bb.trader_id)
            book.remove(Side.SELL, shout.trader_id)
            txn = Transaction(
                buyer_id=bb.trader_id,
                seller_id=shout.trader_id,
                price=price,
                bid_price=bb.price,
                ask_price=shout.price,
                day=shout.day,
                round=shout.round,
                seq=shout.seq,
            )
            return ShoutStatus.TRADED, txn
    book.insert(shout)
    return ShoutStatus.STOOD, None


def clearing_interval(
    bids: list[Shout], asks: list[Shout]
) -> tuple[int, float, float, list[tuple[Shout, Shout]]]:
    """Maximal crossing prefix of a book snapshot.

    bids must arrive best-first (descending), asks best-first (ascending).
    Returns (m, low, high, pairs): the number of crossing pairs, the
    uniform-price interval, and the matched pairs (i-th bid with i-th ask).
    No extra-marginal shout is ever matched while a strictly more
    competitive same-side shout stands unmatched, because matching walks
    both sides best-first.
    """
    m = 0
    for i in range(min(len(bids), len(asks))):
        if bids[i].price >= asks[i].price:
            m = i + 1
        else:
            break
    if m == 0:
        return 0, 0.0, 0.0, []
    low = asks[m - 1].price
    if m < len(bids):
        low = max(low, bids[m].price)
    high = bids[m - 1].price
    if m < len(asks):
        high = min(high, asks[m].price)
    pairs = [(bids[i], asks[i]) for i in range(m)]
    return m, low, high, pairs


def clear_periodic(
    book: OrderBook, cfg: MarketConfig, day: int, round_index: int, seq_start: int
) -> list[Transaction]:
    """Uncross the book at a single uniform price.

    The price sits within the clearing interval at position ku (uniform
    rule) or 1 - k (k-pricing rule, so k = 0.5 midpoints either way).
    Matched shouts leave the book; unmatched shouts stay standing.
    """
    m, low, high, pairs = clearing_interval(book.bids(), book.asks())
    if m == 0:
        return []
    if isinstance(pricing := cfg.pricing, UniformPricing):
        theta = pricing.ku
    else:
        theta = 1.0 - pricing.k
    price = low + theta * (high - low)
    txns = []
    seq = seq_start
    for bid, ask in pairs:
        book.remove(Side.BUY, bid.trader_id)
        book.remove(Side.SELL, ask.trader_id)
        txns.append(
            Transaction(
                buyer_id=bid.trader_id,
                seller_id=ask.trader_id,
                price=price,
                bid_price=bid.price,
                ask_price=ask.price,
                day=day,
                round=round_index,
                seq=seq,
            )
        )
        seq += 1
    return txns


def select_next_side(qs: float, rng) -> Side:
    """Draw the side offered the next shout slot: SELL with probability qs."""
    return Side.SELL if rng.random() < qs else Side.BUY
