"""Trading strategies for the double auction.

Seven strategies spanning the classic range: truth-telling, unconstrained
and budget-constrained zero intelligence, the adaptive Widrow-Hoff margin
learner, a reinforcement learner over profit-margin bins, a belief-based
expected-profit maximizer, and a background sniper.

Every strategy is a deterministic function of its own state, the
observable market context, and its private RNG stream. Module-level
functions expose each decision rule for direct testing; the Strategy
classes wrap them with per-trader state for the game loop.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .market import Shout, ShoutStatus, Side


@dataclass
class ShoutRecord:
    """Observable fate of one shout. status mutates STOOD -> TRADED when a
    standing shout is matched later."""

    shout: Shout
    status: ShoutStatus


@dataclass(frozen=True)
class MarketEvent:
    """One observable market happening: a shout and whether it was accepted.

    Both sides of a transaction produce accepted events at their own shout
    prices; a shout that stands or is rejected produces a not-accepted
    event at placement time.
    """

    side: Side
    price: float
    trader_id: str
    accepted: bool


@dataclass
class TraderContext:
    """Everything a strategy may observe when asked for a shout.

    day_clock fields give position within the trading day; quotes fall back
    to the market bounds when a side of the book is empty (has_bid /
    has_ask distinguish real quotes from defaults).
    """

    trader_id: str
    side: Side
    limit: float
    bid_quote: float
    ask_quote: float
    has_bid: bool
    has_ask: bool
    min_price: float
    max_price: float
    day: int
    round: int
    rounds_per_day: int
    history_window: Sequence[ShoutRecord]
    history_version: int
    last_own_result: Optional[ShoutStatus]
    units_left: int


# ===================================================== simple strategies


def tt_shout(ctx: TraderContext) -> float:
    """Truth-telling: shout the private limit value."""
    return ctx.limit


def zi_u_shout(ctx: TraderContext, rng) -> float:
    """Unconstrained zero intelligence: uniform over the whole price range,
    ignoring the limit entirely."""
    return rng.uniform(ctx.min_price, ctx.max_price)


def zi_c_shout(ctx: TraderContext, rng) -> float:
    """Budget-constrained zero intelligence: uniform on the no-loss side of
    the limit."""
    lo, hi = ctx.min_price, ctx.max_price
    limit = ctx.limit
    if not lo <= limit <= hi:
        warnings.warn(
            f"trader {ctx.trader_id} limit {limit} outside market bounds "
            f"[{lo}, {hi}]; clamping",
            stacklevel=2,
        )
        limit = min(max(limit, lo), hi)
    if ctx.side is Side.BUY:
        return rng.uniform(lo, limit)
    return rng.uniform(limit, hi)


# ================================================================== ZIP


@dataclass
class ZipState:
    """Adaptive margin learner state.

    margin is stored as a non-negative magnitude; sellers price at
    limit * (1 + margin), buyers at limit * (1 - margin). momentum carries
    the smoothed update between events.
    """

    margin: float
    beta: float
    gamma: float
    ca: float
    cr: float
    momentum: float = 0.0


def zip_price(state: ZipState, side: Side, limit: float) -> float:
    if side is Side.SELL:
        return limit * (1.0 + state.margin)
    return limit * (1.0 - state.margin)


def zip_target(price: float, price_up: bool, ca: float, cr: float, rng) -> float:
    """Stochastic target on the required side of an observed price.

    Moving the shout price up perturbs multiplicatively into [1, 1+cr] and
    additively into [0, ca]; moving down mirrors both draws below.
    """
    if price_up:
        r = rng.uniform(1.0, 1.0 + cr)
        a = rng.uniform(0.0, ca)
    else:
        r = rng.uniform(1.0 - cr, 1.0)
        a = rng.uniform(-ca, 0.0)
    return r * price + a


def zip_step(state: ZipState, side: Side, limit: float, target: float) -> None:
    """One Widrow-Hoff step of the shout price toward target, with momentum.

    delta = beta * (target - p); momentum' = gamma * momentum +
    (1 - gamma) * delta; p' = p + momentum'. The new margin is clamped so
    it never crosses zero (and never exceeds 1 for buyers).
    """
    p = zip_price(state, side, limit)
    delta = state.beta * (target - p)
    state.momentum = state.gamma * state.momentum + (1.0 - state.gamma) * delta
    p_new = p + state.momentum
    if side is Side.SELL:
        margin = p_new / limit - 1.0 if limit > 0 else state.margin
        state.margin = max(0.0, margin)
    else:
        margin = 1.0 - p_new / limit if limit > 0 else state.margin
        state.margin = min(1.0, max(0.0, margin))


def zip_react(
    state: ZipState,
    side: Side,
    limit: float,
    own_id: str,
    event: MarketEvent,
    rng,
) -> None:
    """Apply the three adaptation rules to one observed market event.

    Sellers: raise the margin when a competing ask is accepted at or above
    the own price; lower it when a competing ask at or below the own price
    fails; lower it when a bid is accepted at a price the seller would
    have refused. Buyers mirror all three. Own shouts trigger nothing.
    """
    if event.trader_id == own_id:
        return
    p = zip_price(state, side, limit)
    q = event.price
    if side is Side.SELL:
        if event.side is Side.SELL:
            if event.accepted and q >= p:
                zip_step(state, side, limit, zip_target(q, True, state.ca, state.cr, rng))
            elif not event.accepted and q <= p:
                zip_step(state, side, limit, zip_target(q, False, state.ca, state.cr, rng))
        else:
            if event.accepted and q < p:
                zip_step(state, side, limit, zip_target(q, False, state.ca, state.cr, rng))
    else:
        if event.side is Side.BUY:
            if event.accepted and q <= p:
                zip_step(state, side, limit, zip_target(q, False, state.ca, state.cr, rng))
            elif not event.accepted and q >= p:
                zip_step(state, side, limit, zip_target(q, True, state.ca, state.cr, rng))
        else:
            if event.accepted and q > p:
                zip_step(state, side, limit, zip_target(q, True, state.ca, state.cr, rng))


def zip_update(state: ZipState, ctx: TraderContext, event: MarketEvent, rng) -> None:
    zip_react(state, ctx.side, ctx.limit, ctx.trader_id, event, rng)


def zip_shout(state: ZipState, ctx: TraderContext) -> float:
    """Deterministic shout at the current margin, clamped to market bounds."""
    p = zip_price(state, ctx.side, ctx.limit)
    return min(max(p, ctx.min_price), ctx.max_price)


# =================================================== Roth-Erev learner


@dataclass
class ReState:
    """Propensity-matching state over profit-margin bins."""

    propensities: list[float]
    phi: float = 0.1
    eps: float = 0.2
    max_margin: float = 0.4
    chosen_bin: Optional[int] = None

    @property
    def n_bins(self) -> int:
        return len(self.propensities)

    def margins(self) -> list[float]:
        k = self.n_bins
        return [self.max_margin * (i + 1) / k for i in range(k)]


def make_re_state(n_bins: int = 8, phi: float = 0.1, eps: float = 0.2,
                  max_margin: float = 0.4) -> ReState:
    return ReState(propensities=[1.0] * n_bins, phi=phi, eps=eps, max_margin=max_margin)


def re_choose(state: ReState, ctx: TraderContext, rng) -> tuple[int, float]:
    """Draw a margin bin with probability proportional to propensity and
    price the limit at that margin."""
    total = sum(state.propensities)
    if total <= 0.0:
        idx = rng.randrange(state.n_bins)
    else:
        u = rng.random() * total
        acc = 0.0
        idx = state.n_bins - 1
        for i, q in enumerate(state.propensities):
            acc += q
            if u < acc:
                idx = i
                break
    margin = state.margins()[idx]
    if ctx.side is Side.SELL:
        price = ctx.limit * (1.0 + margin)
    else:
        price = ctx.limit * (1.0 - margin)
    return idx, min(max(price, ctx.min_price), ctx.max_price)


def re_update(state: ReState, reward: float) -> None:
    """Roth-Erev propensity update for the bin chosen this round.

    The chosen bin keeps (1 - eps) of the reward; the rest spills evenly
    onto the other bins. All propensities decay by phi first. No-op when
    no bin was chosen.
    """
    if state.chosen_bin is None:
        return
    k = state.n_bins
    spill = state.eps * reward / (k - 1) if k > 1 else 0.0
    for i in range(k):
        decayed = (1.0 - state.phi) * state.propensities[i]
        if i == state.chosen_bin:
            state.propensities[i] = decayed + (1.0 - state.eps) * reward
        else:
            state.propensities[i] = decayed + spill
    state.chosen_bin = None


# ================================================================== GD


@dataclass
class GdState:
    """Belief-based maximizer configuration plus a belief cache."""

    window_size: int = 30
    grid_points: int = 64
    _cache_version: int = -1
    _cache_knots: Optional[tuple[np.ndarray, np.ndarray]] = None


def _belief_knots(
    window: Sequence[ShoutRecord], side: Side, min_price: float, max_price: float
) -> tuple[np.ndarray, np.ndarray]:
    """Belief values at observed prices, anchored at the market bounds.

    For a buyer the belief that a bid at price b is accepted rises with b:
    (accepted bids <= b + asks <= b) over (that + failed bids >= b).
    Sellers mirror. The raw ratio is monotone by construction; anchors pin
    0 and 1 at the bounds and a running max/min pass keeps the knots
    monotone after anchoring.
    """
    bid_prices, bid_acc, ask_prices, ask_acc = [], [], [], []
    for rec in window:
        accepted = rec.status is ShoutStatus.TRADED
        if rec.shout.side is Side.BUY:
            bid_prices.append(rec.shout.price)
            bid_acc.append(accepted)
        else:
            ask_prices.append(rec.shout.price)
            ask_acc.append(accepted)
    bids = np.asarray(bid_prices)
    asks = np.asarray(ask_prices)
    bacc = np.asarray(bid_acc, dtype=bool)
    aacc = np.asarray(ask_acc, dtype=bool)
    observed = np.unique(np.concatenate([bids, asks])) if len(window) else np.array([])
    observed = observed[(observed > min_price) & (observed < max_price)]

    if side is Side.BUY:
        if observed.size == 0:
            knots_p = np.array([min_price, max_price])
            knots_q = np.array([0.0, 1.0])
            return knots_p, knots_q
        taken = np.sort(bids[bacc])
        all_asks = np.sort(asks)
        failed = np.sort(bids[~bacc])
        tbl = np.searchsorted(taken, observed, side="right")
        al = np.searchsorted(all_asks, observed, side="right")
        rbg = failed.size - np.searchsorted(failed, observed, side="left")
        num = tbl + al
        den = num + rbg
        q = np.where(den > 0, num / np.maximum(den, 1), 0.0)
        knots_p = np.concatenate([[min_price], observed, [max_price]])
        knots_q = np.concatenate([[0.0], q, [1.0]])
        knots_q = np.maximum.accumulate(np.clip(knots_q, 0.0, 1.0))
    else:
        if observed.size == 0:
            knots_p = np.array([min_price, max_price])
            knots_q = np.array([1.0, 0.0])
            return knots_p, knots_q
        taken = np.sort(asks[aacc])
        all_bids = np.sort(bids)
        failed = np.sort(asks[~aacc])
        tag = taken.size - np.searchsorted(taken, observed, side="left")
        bg = all_bids.size - np.searchsorted(all_bids, observed, side="left")
        ral = np.searchsorted(failed, observed, side="right")
        num = tag + bg
        den = num + ral
        q = np.where(den > 0, num / np.maximum(den, 1), 0.0)
        knots_p = np.concatenate([[min_price], observed, [max_price]])
        knots_q = np.concatenate([[1.0], q, [0.0]])
        # non-increasing: running max from the right
        knots_q = np.maximum.accumulate(np.clip(knots_q, 0.0, 1.0)[::-1])[::-1]
    return knots_p, knots_q


def gd_belief(
    window: Sequence[ShoutRecord], side: Side, min_price: float, max_price: float
):
    """Callable belief over price, cubic-interpolated between knots.

    Interpolation uses the smooth Hermite segment with zero end slopes, so
    the curve passes through every knot and stays monotone between them.
    """
    knots_p, knots_q = _belief_knots(window, side, min_price, max_price)

    def belief(prices):
        return _eval_belief(knots_p, knots_q, np.asarray(prices, dtype=float))

    belief.knots = (knots_p, knots_q)
    return belief


def _eval_belief(knots_p: np.ndarray, knots_q: np.ndarray, prices: np.ndarray) -> np.ndarray:
    prices = np.clip(prices, knots_p[0], knots_p[-1])
    idx = np.clip(np.searchsorted(knots_p, prices, side="right") - 1, 0, len(knots_p) - 2)
    p0, p1 = knots_p[idx], knots_p[idx + 1]
    q0, q1 = knots_q[idx], knots_q[idx + 1]
    span = np.where(p1 > p0, p1 - p0, 1.0)
    t = np.clip((prices - p0) / span, 0.0, 1.0)
    smooth = t * t * (3.0 - 2.0 * t)
    out = q0 + (q1 - q0) * smooth
    exact = prices >= knots_p[-1]
    return np.where(exact, knots_q[-1], out)


def gd_shout(state: GdState, ctx: TraderContext) -> Optional[float]:
    """Maximize expected profit (limit - b) * q(b) over a candidate grid.

    The grid is the observed window prices joined with evenly spaced
    points across the market range, restricted to the no-loss side of the
    limit. Declines when no candidate has strictly positive expectation.
    Ties go to the lower bid (buyers) or the higher ask (sellers).
    """
    window = list(ctx.history_window)[-state.window_size:]
    if state._cache_version == ctx.history_version and state._cache_knots is not None:
        knots_p, knots_q = state._cache_knots
    else:
        knots_p, knots_q = _belief_knots(window, ctx.side, ctx.min_price, ctx.max_price)
        state._cache_knots = (knots_p, knots_q)
        state._cache_version = ctx.history_version
    grid = np.union1d(
        knots_p, np.linspace(ctx.min_price, ctx.max_price, state.grid_points)
    )
    if ctx.side is Side.BUY:
        grid = grid[(grid >= ctx.min_price) & (grid <= ctx.limit)]
        if grid.size == 0:
            return None
        q = _eval_belief(knots_p, knots_q, grid)
        profit = (ctx.limit - grid) * q
        best = int(np.argmax(profit))  # first max: lowest bid wins ties
    else:
        grid = grid[(grid >= ctx.limit) & (grid <= ctx.max_price)]
        if grid.size == 0:
            return None
        q = _eval_belief(knots_p, knots_q, grid)
        profit = (grid - ctx.limit) * q
        rev_best = int(np.argmax(profit[::-1]))  # highest ask wins ties
        best = len(grid) - 1 - rev_best
    if profit[best] <= 0.0:
        return None
    return float(grid[best])


# ============================================================== Kaplan


@dataclass(frozen=True)
class KaplanParams:
    spread_frac: float = 0.1
    profit_frac: float = 0.02
    time_frac: float = 0.1


def kaplan_shout(ctx: TraderContext, params: KaplanParams) -> Optional[float]:
    """Background sniper: wait, then jump on a profitable standing quote.

    Shouts only when the best opposing quote is strictly profitable and at
    least one trigger fires: the quoted spread is narrow, the quote is
    juicy (profit beyond profit_frac of the limit), or the day is nearly
    over. The shout takes the opposing quote, clamped to the no-loss side.
    """
    if ctx.side is Side.BUY:
        if not ctx.has_ask:
            return None
        profit = ctx.limit - ctx.ask_quote
        if profit <= 0.0:
            return None
        opposing = ctx.ask_quote
    else:
        if not ctx.has_bid:
            return None
        profit = ctx.bid_quote - ctx.limit
        if profit <= 0.0:
            return None
        opposing = ctx.bid_quote

    narrow = (
        ctx.has_bid
        and ctx.has_ask
        and ctx.ask_quote > 0
        and (ctx.ask_quote - ctx.bid_quote) / ctx.ask_quote <= params.spread_frac
    )
    juicy = profit > params.profit_frac * ctx.limit
    remaining = (ctx.rounds_per_day - ctx.round) / ctx.rounds_per_day
    late = remaining <= params.time_frac
    if not (narrow or juicy or late):
        return None
    if ctx.side is Side.BUY:
        return min(opposing, ctx.limit)
    return max(opposing, ctx.limit)


# ===================================================== strategy classes


class Strategy:
    """Per-trader decision maker bound to one side and one trader id."""

    name = "base"

    def __init__(self, trader_id: str, side: Side):
        self.trader_id = trader_id
        self.side = side

    def shout(self, ctx: TraderContext, rng) -> Optional[float]:
        raise NotImplementedError

    def observe(self, event: MarketEvent, rng) -> None:
        pass

    def start_day(self, limit: float) -> None:
        pass

    def end_round(self, profit: float, rng) -> None:
        pass


class TruthTeller(Strategy):
    name = "tt"

    def shout(self, ctx, rng):
        return tt_shout(ctx)


class ZiUnconstrained(Strategy):
    name = "ziu"

    def shout(self, ctx, rng):
        return zi_u_shout(ctx, rng)


class ZiConstrained(Strategy):
    name = "zic"

    def shout(self, ctx, rng):
        return zi_c_shout(ctx, rng)


class Zip(Strategy):
    """Widrow-Hoff margin adaptation; parameters drawn per trader from the
    configured ranges at construction."""

    name = "zip"

    def __init__(
        self,
        trader_id: str,
        side: Side,
        rng,
        beta_range=(0.1, 0.5),
        gamma_range=(0.0, 0.1),
        margin_range=(0.05, 0.35),
        ca: float = 1.0,
        cr: float = 0.05,
    ):
        super().__init__(trader_id, side)
        self.state = ZipState(
            margin=rng.uniform(*margin_range),
            beta=rng.uniform(*beta_range),
            gamma=rng.uniform(*gamma_range),
            ca=ca,
            cr=cr,
        )
        self._limit = 0.0

    def start_day(self, limit):
        self._limit = limit

    def shout(self, ctx, rng):
        return zip_shout(self.state, ctx)

    def observe(self, event, rng):
        zip_react(self.state, self.side, self._limit, self.trader_id, event, rng)


class RothErev(Strategy):
    """Margin-bin reinforcement: one bin per round, rewarded by round profit."""

    name = "re"

    def __init__(
        self,
        trader_id: str,
        side: Side,
        n_bins: int = 8,
        phi: float = 0.1,
        eps: float = 0.2,
        max_margin: float = 0.4,
    ):
        super().__init__(trader_id, side)
        self.state = make_re_state(n_bins, phi, eps, max_margin)
        self._round_price: Optional[float] = None
        self._round_key = (-1, -1)

    def shout(self, ctx, rng):
        key = (ctx.day, ctx.round)
        if key != self._round_key:
            self._round_key = key
            idx, price = re_choose(self.state, ctx, rng)
            self.state.chosen_bin = idx
            self._round_price = price
        return self._round_price

    def end_round(self, profit, rng):
        re_update(self.state, profit)


class Gd(Strategy):
    name = "gd"

    def __init__(self, trader_id: str, side: Side, window_size: int = 30,
                 grid_points: int = 64):
        super().__init__(trader_id, side)
        self.state = GdState(window_size=window_size, grid_points=grid_points)

    def shout(self, ctx, rng):
        return gd_shout(self.state, ctx)


class Kaplan(Strategy):
    name = "kaplan"

    def __init__(self, trader_id: str, side: Side, spread_frac: float = 0.1,
                 profit_frac: float = 0.02, time_frac: float = 0.1):
        super().__init__(trader_id, side)
        self.params = KaplanParams(spread_frac, profit_frac, time_frac)

    def shout(self, ctx, rng):
        return kaplan_shout(ctx, self.params)


STRATEGIES = {
    "tt": TruthTeller,
    "ziu": ZiUnconstrained,
    "zic": ZiConstrained,
    "zip": Zip,
    "re": RothErev,
    "gd": Gd,
    "kaplan": Kaplan,
}

# strategies whose constructor draws from the trader's RNG stream
_NEEDS_RNG = {"zip"}


def make_strategy(name: str, trader_id: str, side: Side, params: dict, rng) -> Strategy:
    """Construct a registered strategy; unknown names or params raise ValueError."""
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; known: {sorted(STRATEGIES)}")
    cls = STRATEGIES[name]
    params = dict(params or {})
    for key, value in list(params.items()):
        if isinstance(value, list):
            params[key] = tuple(value)
    try:
        if name in _NEEDS_RNG:
            return cls(trader_id, side, rng, **params)
        return cls(trader_id, side, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for strategy {name!r}: {exc}") from exc
