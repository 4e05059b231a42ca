"""Strategy decision rules: worked examples and invariants."""

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auctionkit.market import Shout, ShoutStatus, Side
from auctionkit.strategies import (
    GdState,
    KaplanParams,
    MarketEvent,
    ReState,
    ShoutRecord,
    TraderContext,
    ZipState,
    _belief_knots,
    _eval_belief,
    gd_shout,
    kaplan_shout,
    make_re_state,
    make_strategy,
    re_choose,
    re_update,
    tt_shout,
    zi_c_shout,
    zi_u_shout,
    zip_price,
    zip_react,
    zip_shout,
    zip_step,
    zip_target,
)


def ctx(
    side=Side.BUY,
    limit=100.0,
    bid_quote=0.0,
    ask_quote=200.0,
    has_bid=False,
    has_ask=False,
    min_price=0.0,
    max_price=200.0,
    day=0,
    rnd=0,
    rounds_per_day=50,
    window=(),
    version=0,
    units_left=1,
):
    return TraderContext(
        trader_id="t0",
        side=side,
        limit=limit,
        bid_quote=bid_quote,
        ask_quote=ask_quote,
        has_bid=has_bid,
        has_ask=has_ask,
        min_price=min_price,
        max_price=max_price,
        day=day,
        round=rnd,
        rounds_per_day=rounds_per_day,
        history_window=list(window),
        history_version=version,
        last_own_result=None,
        units_left=units_left,
    )


def record(side, price, accepted, trader="x", seq=0):
    status = ShoutStatus.TRADED if accepted else ShoutStatus.STOOD
    return ShoutRecord(Shout(side, price, trader, 0, 0, seq), status)


class FixedRng:
    """rng stub whose uniform() returns the midpoint and random() cycles
    given values."""

    def __init__(self, randoms=(0.5,)):
        self._randoms = list(randoms)
        self._i = 0

    def uniform(self, a, b):
        return (a + b) / 2.0

    def random(self):
        v = self._randoms[self._i % len(self._randoms)]
        self._i += 1
        return v

    def randrange(self, n):
        return 0


# -------------------------------------------------------------- simple


class TestSimpleStrategies:
    def test_tt_shouts_limit(self):
        assert tt_shout(ctx(limit=73.5)) == 73.5

    def test_ziu_ignores_limit(self):
        rng = random.Random(3)
        prices = [zi_u_shout(ctx(side=Side.BUY, limit=10.0), rng) for _ in range(200)]
        assert all(0.0 <= p <= 200.0 for p in prices)
        assert any(p > 10.0 for p in prices)  # happily overbids its value

    def test_zic_buyer_never_overbids(self):
        rng = random.Random(4)
        for _ in range(200):
            assert 0.0 <= zi_c_shout(ctx(side=Side.BUY, limit=60.0), rng) <= 60.0

    def test_zic_seller_never_undercuts(self):
        rng = random.Random(5)
        for _ in range(200):
            p = zi_c_shout(ctx(side=Side.SELL, limit=60.0), rng)
            assert 60.0 <= p <= 200.0

    def test_zic_degenerate_limit_warns_and_clamps(self):
        rng = random.Random(6)
        with pytest.warns(UserWarning):
            p = zi_c_shout(ctx(side=Side.BUY, limit=300.0), rng)
        assert 0.0 <= p <= 200.0


# ----------------------------------------------------------------- ZIP


class TestZip:
    def test_widrow_hoff_worked_example(self):
        # seller at limit 10, margin 0.2 prices at 12; target 11 with
        # beta 0.5 and no momentum moves the price to 11.5, margin 0.15
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.05, cr=0.05)
        zip_step(state, Side.SELL, 10.0, target=11.0)
        assert state.margin == pytest.approx(0.15)
        assert zip_price(state, Side.SELL, 10.0) == pytest.approx(11.5)

    def test_momentum_smooths_consecutive_steps(self):
        state = ZipState(margin=0.2, beta=0.5, gamma=0.5, ca=0.05, cr=0.05)
        zip_step(state, Side.SELL, 10.0, target=11.0)
        # delta = -0.5, momentum = 0.5*0 + 0.5*(-0.5) = -0.25
        assert state.momentum == pytest.approx(-0.25)
        assert zip_price(state, Side.SELL, 10.0) == pytest.approx(11.75)

    def test_margins_never_cross_zero(self):
        state = ZipState(margin=0.05, beta=1.0, gamma=0.0, ca=0.0, cr=0.0)
        zip_step(state, Side.SELL, 10.0, target=5.0)  # target far below limit
        assert state.margin == 0.0
        state = ZipState(margin=0.05, beta=1.0, gamma=0.0, ca=0.0, cr=0.0)
        zip_step(state, Side.BUY, 10.0, target=20.0)  # target far above limit
        assert state.margin == 0.0

    def test_buyer_margin_capped_at_one(self):
        state = ZipState(margin=0.9, beta=1.0, gamma=0.0, ca=0.0, cr=0.0)
        zip_step(state, Side.BUY, 10.0, target=-50.0)
        assert state.margin == 1.0

    def test_target_directions(self):
        rng = random.Random(7)
        for _ in range(100):
            assert zip_target(100.0, True, 2.0, 0.05, rng) >= 100.0
            assert zip_target(100.0, False, 2.0, 0.05, rng) <= 100.0

    def test_seller_raises_on_accepted_higher_ask(self):
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        # own price 12; competing ask accepted at 14: raise toward it
        zip_react(state, Side.SELL, 10.0, "me", MarketEvent(Side.SELL, 14.0, "other", True), FixedRng())
        assert zip_price(state, Side.SELL, 10.0) > 12.0

    def test_seller_lowers_on_failed_cheaper_ask(self):
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        zip_react(state, Side.SELL, 10.0, "me", MarketEvent(Side.SELL, 11.0, "other", False), FixedRng())
        assert zip_price(state, Side.SELL, 10.0) < 12.0

    def test_seller_lowers_on_accepted_bid_below_own_price(self):
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        zip_react(state, Side.SELL, 10.0, "me", MarketEvent(Side.BUY, 11.0, "other", True), FixedRng())
        assert zip_price(state, Side.SELL, 10.0) < 12.0

    def test_seller_ignores_irrelevant_events(self):
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        # failed cheaper-side events above own price, accepted bids above own
        zip_react(state, Side.SELL, 10.0, "me", MarketEvent(Side.SELL, 13.0, "o", False), FixedRng())
        zip_react(state, Side.SELL, 10.0, "me", MarketEvent(Side.BUY, 13.0, "o", True), FixedRng())
        assert state.margin == 0.2

    def test_own_events_ignored(self):
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        zip_react(state, Side.SELL, 10.0, "me", MarketEvent(Side.SELL, 14.0, "me", True), FixedRng())
        assert state.margin == 0.2

    def test_buyer_rules_mirror(self):
        # buyer at limit 10, margin 0.2 bids 8
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        zip_react(state, Side.BUY, 10.0, "me", MarketEvent(Side.BUY, 7.0, "o", True), FixedRng())
        assert zip_price(state, Side.BUY, 10.0) < 8.0  # cheaper bid won: bid less
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        zip_react(state, Side.BUY, 10.0, "me", MarketEvent(Side.BUY, 9.0, "o", False), FixedRng())
        assert zip_price(state, Side.BUY, 10.0) > 8.0  # outbid: bid more
        state = ZipState(margin=0.2, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        zip_react(state, Side.BUY, 10.0, "me", MarketEvent(Side.SELL, 9.0, "o", True), FixedRng())
        assert zip_price(state, Side.BUY, 10.0) > 8.0  # deal above own bid: bid more

    def test_shout_clamped_to_bounds(self):
        state = ZipState(margin=0.5, beta=0.5, gamma=0.0, ca=0.0, cr=0.0)
        c = ctx(side=Side.SELL, limit=150.0, max_price=200.0)
        assert zip_shout(state, c) == 200.0  # 150 * 1.5 = 225 clamped

    @settings(max_examples=200, deadline=None)
    @given(
        margin=st.floats(0.0, 0.9),
        beta=st.floats(0.01, 1.0),
        gamma=st.floats(0.0, 0.99),
        seed=st.integers(0, 2**20),
    )
    def test_margin_clamps_hold_under_random_event_streams(self, margin, beta, gamma, seed):
        rng = random.Random(seed)
        for side in (Side.BUY, Side.SELL):
            state = ZipState(margin=margin, beta=beta, gamma=gamma, ca=1.0, cr=0.05)
            for _ in range(40):
                ev = MarketEvent(
                    Side.BUY if rng.random() < 0.5 else Side.SELL,
                    rng.uniform(0, 200),
                    "o",
                    rng.random() < 0.5,
                )
                zip_react(state, side, 100.0, "me", ev, rng)
                assert state.margin >= 0.0
                if side is Side.BUY:
                    assert state.margin <= 1.0


# ---------------------------------------------------------------- RE


class TestRothErev:
    def test_margin_bins(self):
        state = make_re_state(n_bins=8, max_margin=0.4)
        assert state.margins() == pytest.approx([0.05 * (i + 1) for i in range(8)])

    def test_update_arithmetic(self):
        state = ReState(propensities=[1.0, 1.0, 1.0, 1.0], phi=0.1, eps=0.2)
        state.chosen_bin = 1
        re_update(state, reward=10.0)
        # decay to 0.9 each; chosen gains 0.8*10, others 0.2*10/3 each
        assert state.propensities[1] == pytest.approx(0.9 + 8.0)
        for i in (0, 2, 3):
            assert state.propensities[i] == pytest.approx(0.9 + 2.0 / 3.0)
        assert state.chosen_bin is None

    def test_update_without_choice_is_noop(self):
        state = make_re_state(4)
        before = list(state.propensities)
        re_update(state, 5.0)
        assert state.propensities == before

    def test_choice_proportional_to_propensities(self):
        state = ReState(propensities=[3.0, 1.0], phi=0.1, eps=0.2)
        rng = random.Random(11)
        picks = [re_choose(state, ctx(), rng)[0] for _ in range(4000)]
        share = picks.count(0) / len(picks)
        assert abs(share - 0.75) < 0.03

    def test_prices_respect_side_and_margin(self):
        state = make_re_state(8)
        rng = random.Random(12)
        idx, price = re_choose(state, ctx(side=Side.BUY, limit=100.0), rng)
        assert price == pytest.approx(100.0 * (1 - state.margins()[idx]))
        idx, price = re_choose(state, ctx(side=Side.SELL, limit=100.0), rng)
        assert price == pytest.approx(100.0 * (1 + state.margins()[idx]))

    def test_propensities_stay_positive(self):
        state = make_re_state(4)
        rng = random.Random(13)
        for _ in range(200):
            idx, _ = re_choose(state, ctx(), rng)
            state.chosen_bin = idx
            re_update(state, rng.choice([0.0, 0.0, 5.0]))
            assert all(q >= 0.0 for q in state.propensities)
            assert sum(state.propensities) > 0.0


# ---------------------------------------------------------------- GD


class TestGdBelief:
    def test_empty_window_is_a_ramp(self):
        kp, kq = _belief_knots([], Side.BUY, 0.0, 200.0)
        assert list(kp) == [0.0, 200.0]
        assert list(kq) == [0.0, 1.0]
        assert _eval_belief(kp, kq, np.array([100.0]))[0] == pytest.approx(0.5)

    def test_count_formula_hand_example(self):
        window = [
            record(Side.BUY, 10.0, True, seq=1),
            record(Side.BUY, 20.0, False, seq=2),
            record(Side.SELL, 5.0, False, seq=3),
        ]
        kp, kq = _belief_knots(window, Side.BUY, 0.0, 200.0)
        lookup = dict(zip(kp.tolist(), kq.tolist()))
        # at 5: (0 taken + 1 ask) / (1 + 1 failed-above) = 0.5
        assert lookup[5.0] == pytest.approx(0.5)
        # at 10: (1 + 1) / (2 + 1) = 2/3
        assert lookup[10.0] == pytest.approx(2.0 / 3.0)
        assert lookup[0.0] == 0.0 and lookup[200.0] == 1.0

    def test_buyer_belief_monotone_nondecreasing(self):
        rng = random.Random(21)
        window = [
            record(
                Side.BUY if rng.random() < 0.5 else Side.SELL,
                rng.uniform(1, 199),
                rng.random() < 0.4,
                seq=i,
            )
            for i in range(40)
        ]
        kp, kq = _belief_knots(window, Side.BUY, 0.0, 200.0)
        xs = np.linspace(0, 200, 500)
        ys = _eval_belief(kp, kq, xs)
        assert np.all(np.diff(ys) >= -1e-12)
        assert np.all((ys >= 0.0) & (ys <= 1.0))

    def test_seller_belief_monotone_nonincreasing(self):
        rng = random.Random(22)
        window = [
            record(
                Side.BUY if rng.random() < 0.5 else Side.SELL,
                rng.uniform(1, 199),
                rng.random() < 0.4,
                seq=i,
            )
            for i in range(40)
        ]
        kp, kq = _belief_knots(window, Side.SELL, 0.0, 200.0)
        xs = np.linspace(0, 200, 500)
        ys = _eval_belief(kp, kq, xs)
        assert np.all(np.diff(ys) <= 1e-12)
        assert ys[0] == pytest.approx(1.0) and ys[-1] == pytest.approx(0.0)

    def test_interpolation_passes_through_knots(self):
        kp = np.array([0.0, 6.0, 8.0, 10.0])
        kq = np.array([0.0, 0.5, 1.0, 1.0])
        ys = _eval_belief(kp, kq, kp.copy())
        assert ys == pytest.approx(kq)


class TestGdShout:
    def _state_with_knots(self, c, kp, kq, grid_points=2):
        state = GdState(window_size=30, grid_points=grid_points)
        state._cache_version = c.history_version
        state._cache_knots = (np.asarray(kp, dtype=float), np.asarray(kq, dtype=float))
        return state

    def test_maximizes_expected_profit(self):
        c = ctx(side=Side.BUY, limit=10.0, max_price=10.0)
        # belief 0.5 at price 6, 1.0 at 8; candidates {0, 5.9999, 6, 8, 10}
        state = self._state_with_knots(c, [0.0, 5.9999, 6.0, 8.0, 10.0], [0.0, 0.0, 0.5, 1.0, 1.0])
        price = gd_shout(state, c)
        # expected profits: 6 -> 2.0, 8 -> 2.0, ties resolve to the lower bid
        assert price == pytest.approx(6.0, abs=1e-9)

    def test_seller_tie_prefers_higher_ask(self):
        c = ctx(side=Side.SELL, limit=0.0, min_price=0.0, max_price=10.0)
        state = self._state_with_knots(
            c, [0.0, 2.0, 3.9999, 4.0, 10.0], [1.0, 1.0, 0.5, 0.5, 0.0]
        )
        price = gd_shout(state, c)
        # 2 -> 2.0, 4 -> 2.0; seller takes the higher ask
        assert price == pytest.approx(4.0, abs=1e-3)

    def test_declines_when_nothing_profitable(self):
        c = ctx(side=Side.BUY, limit=10.0, max_price=200.0)
        # zero belief everywhere below the limit
        state = self._state_with_knots(c, [0.0, 150.0, 200.0], [0.0, 0.0, 1.0])
        assert gd_shout(state, c) is None

    def test_shout_is_argmax_of_expected_profit(self):
        from auctionkit.strategies import gd_belief

        c = ctx(side=Side.BUY, limit=100.0, min_price=0.0, max_price=200.0)
        state = GdState(grid_points=201)
        price = gd_shout(state, c)
        belief = gd_belief([], Side.BUY, 0.0, 200.0)
        grid = np.linspace(0.0, 100.0, 2001)
        profits = (100.0 - grid) * belief(grid)
        best = grid[int(np.argmax(profits))]
        assert 0.0 < price < 100.0
        assert price == pytest.approx(best, abs=0.5)

    def test_never_shouts_at_a_loss(self):
        rng = random.Random(23)
        for _ in range(50):
            window = [
                record(
                    Side.BUY if rng.random() < 0.5 else Side.SELL,
                    rng.uniform(1, 199),
                    rng.random() < 0.4,
                    seq=i,
                )
                for i in range(30)
            ]
            c = ctx(side=Side.BUY, limit=rng.uniform(10, 190), window=window,
                    version=rng.randrange(10**9))
            p = gd_shout(GdState(), c)
            if p is not None:
                assert p <= c.limit + 1e-9
            c = ctx(side=Side.SELL, limit=rng.uniform(10, 190), window=window,
                    version=rng.randrange(10**9))
            p = gd_shout(GdState(), c)
            if p is not None:
                assert p >= c.limit - 1e-9


# ------------------------------------------------------------- Kaplan


class TestKaplan:
    def test_narrow_spread_trigger(self):
        c = ctx(side=Side.BUY, limit=10.0, bid_quote=9.0, ask_quote=9.5,
                has_bid=True, has_ask=True)
        assert kaplan_shout(c, KaplanParams()) == pytest.approx(9.5)

    def test_unprofitable_quote_declines_regardless(self):
        c = ctx(side=Side.BUY, limit=10.0, bid_quote=9.0, ask_quote=12.0,
                has_bid=True, has_ask=True, rnd=49)
        assert kaplan_shout(c, KaplanParams()) is None

    def test_juicy_profit_trigger(self):
        c = ctx(side=Side.BUY, limit=10.0, ask_quote=5.0, has_ask=True)
        assert kaplan_shout(c, KaplanParams()) == pytest.approx(5.0)

    def test_timeout_trigger(self):
        c = ctx(side=Side.BUY, limit=10.0, ask_quote=9.9, has_ask=True,
                rnd=46, rounds_per_day=50)
        assert kaplan_shout(c, KaplanParams()) == pytest.approx(9.9)

    def test_waits_when_no_trigger(self):
        c = ctx(side=Side.BUY, limit=10.0, ask_quote=9.9, has_ask=True,
                rnd=0, rounds_per_day=50)
        assert kaplan_shout(c, KaplanParams()) is None

    def test_no_quote_declines(self):
        c = ctx(side=Side.BUY, limit=10.0)
        assert kaplan_shout(c, KaplanParams()) is None

    def test_seller_mirror(self):
        c = ctx(side=Side.SELL, limit=5.0, bid_quote=9.0, has_bid=True)
        # profit 4 > 0.02 * 5: juicy
        assert kaplan_shout(c, KaplanParams()) == pytest.approx(9.0)


# ----------------------------------------------------------- registry


class TestRegistry:
    def test_all_names_construct(self):
        rng = random.Random(31)
        for name in ("tt", "ziu", "zic", "zip", "re", "gd", "kaplan"):
            s = make_strategy(name, "t0", Side.BUY, {}, rng)
            assert s.name == name

    def test_unknown_name_raises(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            make_strategy("alien", "t0", Side.BUY, {}, random.Random(1))

    def test_bad_params_raise(self):
        with pytest.raises(ValueError, match="bad parameters"):
            make_strategy("kaplan", "t0", Side.BUY, {"nope": 1}, random.Random(1))

    def test_param_override(self):
        s = make_strategy("kaplan", "t0", Side.BUY, {"spread_frac": 0.5}, random.Random(1))
        assert s.params.spread_frac == 0.5
