"""Metric formulas against independent numpy oracles and hand examples."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auctionkit.game import make_defs, run_game
from auctionkit.market import (
    LengthMismatchError,
    MarketConfig,
    Schedule,
    Side,
    compute_equilibrium,
)
from auctionkit.metrics import (
    actual_profit,
    actual_profit_signed,
    allocative_efficiency,
    convergence_alpha,
    equilibrium_profit,
    market_power,
    metrics_report,
    profit_dispersion,
)

SYM = Schedule(
    buyer_values=tuple(150.0 - 10.0 * i for i in range(10)),
    seller_values=tuple(50.0 + 10.0 * i for i in range(10)),
)


floats = st.floats(0.1, 200.0, allow_nan=False)


class TestPureFormulas:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(floats, floats), min_size=0, max_size=30))
    def test_actual_profit_oracle(self, pairs):
        values = [v for v, _ in pairs]
        prices = [p for _, p in pairs]
        expected = float(np.sum(np.abs(np.array(values) - np.array(prices)))) if pairs else 0.0
        assert actual_profit(values, prices) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_actual_profit_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            actual_profit([1.0], [1.0, 2.0])

    def test_signed_profit_by_side(self):
        v = [10.0, 10.0]
        p = [6.0, 6.0]
        sides = [Side.BUY, Side.SELL]
        assert actual_profit_signed(v, p, sides) == pytest.approx((10 - 6) + (6 - 10))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(floats, min_size=1, max_size=30), floats)
    def test_alpha_oracle(self, prices, p0):
        arr = np.array(prices)
        expected = 100.0 / p0 * math.sqrt(float(np.mean((arr - p0) ** 2)))
        assert convergence_alpha(prices, p0) == pytest.approx(expected, rel=1e-12)

    def test_alpha_empty_is_absent(self):
        assert convergence_alpha([], 100.0) is None

    def test_alpha_scale_invariance(self):
        prices = [90.0, 110.0, 105.0]
        a1 = convergence_alpha(prices, 100.0)
        a2 = convergence_alpha([p * 7 for p in prices], 700.0)
        assert a1 == pytest.approx(a2, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(floats, floats), min_size=0, max_size=30))
    def test_dispersion_oracle(self, pairs):
        a = [x for x, _ in pairs]
        e = [y for _, y in pairs]
        expected = (
            math.sqrt(float(np.mean((np.array(a) - np.array(e)) ** 2))) if pairs else 0.0
        )
        assert profit_dispersion(a, e) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_efficiency_undefined_when_pe_zero(self):
        assert allocative_efficiency(5.0, 0.0) is None
        assert allocative_efficiency(50.0, 100.0) == pytest.approx(50.0)

    def test_market_power_worked_example(self):
        # one buyer value 10, one seller value 5, traded at 6, p0 = 7.5:
        # buyers realize 4 vs 2.5 -> +0.6, sellers 1 vs 2.5 -> -0.6
        assert market_power(4.0, 2.5) == pytest.approx(0.6)
        assert market_power(1.0, 2.5) == pytest.approx(-0.6)
        assert market_power(1.0, 0.0) is None

    def test_equilibrium_profit_is_max_surplus(self):
        assert equilibrium_profit(SYM) == pytest.approx(300.0)


class TestReportAssembly:
    def _log(self, seed=5, days=2):
        cfg = MarketConfig(days=days, rounds_per_day=15)
        defs = make_defs([("zic", {})] * 10, [("zic", {})] * 10)
        return run_game(cfg, SYM, defs, seed=seed)

    def test_pa_pe_and_efficiency_consistent(self):
        log = self._log()
        rep = metrics_report(log)
        pe = compute_equilibrium(SYM).total_surplus * log.config.days
        assert rep.pe == pytest.approx(pe)
        # zi-c never trades at a loss: absolute and signed forms agree
        assert rep.pa == pytest.approx(rep.pa_signed)
        assert rep.ea == pytest.approx(100.0 * rep.pa / pe, rel=1e-12)
        assert rep.pa_signed == pytest.approx(sum(log.trader_profits.values()), rel=1e-9)

    def test_signed_efficiency_never_exceeds_100(self):
        for seed in range(8):
            rep = metrics_report(self._log(seed=seed))
            assert rep.ea_signed <= 100.0 + 1e-9

    def test_volumes_match_transactions(self):
        log = self._log()
        rep = metrics_report(log)
        for d in range(log.config.days):
            assert rep.volume_by_day[d] == sum(1 for t in log.transactions if t.day == d)
        assert rep.volume == len(log.transactions)

    def test_alpha_matches_direct_computation(self):
        log = self._log()
        rep = metrics_report(log)
        p0 = compute_equilibrium(SYM).p0
        for d in range(log.config.days):
            prices = [t.price for t in log.transactions if t.day == d]
            if prices:
                direct = convergence_alpha(prices, p0)
                assert rep.alpha_by_day[d] == pytest.approx(direct, rel=1e-12)
            else:
                assert rep.alpha_by_day[d] is None
        all_prices = [t.price for t in log.transactions]
        assert rep.alpha == pytest.approx(convergence_alpha(all_prices, p0), rel=1e-12)

    def test_dispersion_matches_direct_computation(self):
        log = self._log()
        rep = metrics_report(log)
        eq = compute_equilibrium(SYM)
        actual = dict(log.trader_profits)
        gaps = []
        for i, d in enumerate(log.buyer_defs()):
            pi = max(SYM.buyer_values[i] - eq.p0, 0.0) * log.config.days
            if SYM.buyer_values[i] >= eq.p_low:  # intra-marginal in this schedule
                gaps.append(actual[d.trader_id] - pi)
            else:
                gaps.append(actual[d.trader_id])
        for i, d in enumerate(log.seller_defs()):
            pi = max(eq.p0 - SYM.seller_values[i], 0.0) * log.config.days
            if SYM.seller_values[i] <= eq.p_high:
                gaps.append(actual[d.trader_id] - pi)
            else:
                gaps.append(actual[d.trader_id])
        expected = math.sqrt(float(np.mean(np.array(gaps) ** 2)))
        assert rep.profit_dispersion == pytest.approx(expected, rel=1e-9)

    def test_market_power_sides_sum_identity(self):
        log = self._log()
        rep = metrics_report(log)
        eq = compute_equilibrium(SYM)
        peb = eq.buyer_surplus * log.config.days
        pes = eq.seller_surplus * log.config.days
        # mpb * Peb + mps * Pes == Pa_signed - Pe
        lhs = rep.market_power_buyers * peb + rep.market_power_sellers * pes
        assert lhs == pytest.approx(rep.pa_signed - rep.pe, rel=1e-9)

    def test_realized_surplus_never_exceeds_equilibrium(self):
        # feasibility: any realized matching is dominated by the optimum
        for seed in range(10):
            rep = metrics_report(self._log(seed=seed))
            assert rep.pa_signed <= rep.pe + 1e-9

    def test_shifted_days_use_their_own_p0(self):
        shifted = Schedule(
            tuple(v + 40.0 for v in SYM.buyer_values),
            tuple(v + 40.0 for v in SYM.seller_values),
        )
        cfg = MarketConfig(days=2, rounds_per_day=15)
        defs = make_defs([("zic", {})] * 10, [("zic", {})] * 10)
        log = run_game(cfg, [SYM, shifted], defs, seed=9)
        rep = metrics_report(log)
        assert rep.day_p0 == (100.0, 140.0)
        prices1 = [t.price for t in log.transactions if t.day == 1]
        if prices1:
            assert rep.alpha_by_day[1] == pytest.approx(
                convergence_alpha(prices1, 140.0), rel=1e-12
            )
