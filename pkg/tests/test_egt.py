"""Heuristic-game analysis: profile math, mixtures, replicator flows,
equilibria, perturbation. The two-strategy social dilemma with payoffs
(both cooperate 3, sucker 0, exploiter 4, both defect 1) gives exact
closed-form checks."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auctionkit.egt import (
    Equilibrium,
    HeuristicGame,
    MissingProfileError,
    enumerate_profiles,
    estimate_payoffs,
    find_equilibria,
    mixture_payoff,
    perturb,
    profile_assignment,
    replicator_flow,
    replicator_flow_batch,
    verify_ne,
)
from auctionkit.market import MarketConfig, Schedule


def dilemma() -> HeuristicGame:
    # two players; strategy 0 cooperates, strategy 1 defects
    return HeuristicGame.from_table(
        ("coop", "defect"),
        n_agents=2,
        table={
            (2, 0): [3.0, 0.0],
            (1, 1): [0.0, 4.0],
            (0, 2): [0.0, 1.0],
        },
    )


class TestProfiles:
    def test_counts_match_stars_and_bars(self):
        assert len(enumerate_profiles(3, 6)) == math.comb(6 + 3 - 1, 3 - 1) == 28
        assert len(enumerate_profiles(2, 2)) == 3

    def test_profiles_sum_to_n(self):
        for p in enumerate_profiles(4, 5):
            assert sum(p) == 5 and len(p) == 4

    def test_deterministic_order(self):
        assert enumerate_profiles(2, 2) == [(0, 2), (1, 1), (2, 0)]

    def test_missing_profile_raises(self):
        with pytest.raises(MissingProfileError):
            dilemma().payoff((3, 0), 0)


class TestProfileAssignment:
    def test_even_counts_split_evenly(self):
        rng = random.Random(1)
        buyers, sellers = profile_assignment((4, 2), 3, 3, rng)
        assert sorted(buyers) == sorted(sellers) == [0, 0, 1]

    def test_odd_counts_fill_all_seats(self):
        for seed in range(50):
            rng = random.Random(seed)
            buyers, sellers = profile_assignment((3, 2, 1), 3, 3, rng)
            assert len(buyers) == len(sellers) == 3
            combined = sorted(buyers + sellers)
            assert combined == [0, 0, 0, 1, 1, 2]

    def test_role_balance_within_one(self):
        for seed in range(50):
            rng = random.Random(seed)
            buyers, sellers = profile_assignment((5, 1), 3, 3, rng)
            assert abs(buyers.count(0) - sellers.count(0)) <= 1
            assert abs(buyers.count(1) - sellers.count(1)) <= 1


class TestMixturePayoff:
    def test_pure_mixtures_recover_homogeneous_profiles(self):
        g = dilemma()
        assert mixture_payoff(g, [1.0, 0.0], 0) == pytest.approx(3.0)
        assert mixture_payoff(g, [0.0, 1.0], 1) == pytest.approx(1.0)

    def test_half_half_worked_example(self):
        g = dilemma()
        assert mixture_payoff(g, [0.5, 0.5], 0) == pytest.approx(1.5)
        assert mixture_payoff(g, [0.5, 0.5], 1) == pytest.approx(2.5)

    def test_invalid_mixture_rejected(self):
        g = dilemma()
        with pytest.raises(ValueError):
            mixture_payoff(g, [0.7, 0.7], 0)
        with pytest.raises(ValueError):
            mixture_payoff(g, [1.0], 0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_linear_in_opponent_mixture_for_two_players(self, p):
        # with N = 2 the opponent is a single draw: u is linear in x
        g = dilemma()
        x = [p, 1.0 - p]
        assert mixture_payoff(g, x, 0) == pytest.approx(3.0 * p + 0.0 * (1 - p))
        assert mixture_payoff(g, x, 1) == pytest.approx(4.0 * p + 1.0 * (1 - p))


class TestReplicator:
    def test_defection_dominates_from_interior(self):
        g = dilemma()
        res = replicator_flow(g, [0.5, 0.5])
        assert res.converged
        assert res.x_final[1] == pytest.approx(1.0, abs=1e-6)
        assert res.max_simplex_drift < 1e-9

    def test_simplex_preserved_along_trajectory(self):
        g = dilemma()
        res = replicator_flow(g, [0.9, 0.1], record_every=10)
        assert res.trajectory is not None
        sums = res.trajectory.sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) < 1e-9
        assert np.min(res.trajectory) >= 0.0

    def test_vertex_is_stationary(self):
        g = dilemma()
        res = replicator_flow(g, [0.0, 1.0])
        assert res.steps == 0 and res.converged
        assert res.x_final == (0.0, 1.0)

    def test_flow_is_deterministic(self):
        g = dilemma()
        a = replicator_flow(g, [0.3, 0.7])
        b = replicator_flow(g, [0.3, 0.7])
        assert a == b

    def test_three_strategy_rock_paper_scissors_stays_interior(self):
        # zero-sum cycle: the barycenter is the attractor-free invariant
        g = HeuristicGame.from_table(
            ("r", "p", "s"),
            n_agents=2,
            table={
                (2, 0, 0): [0.0, np.nan, np.nan],
                (0, 2, 0): [np.nan, 0.0, np.nan],
                (0, 0, 2): [np.nan, np.nan, 0.0],
                (1, 1, 0): [-1.0, 1.0, np.nan],
                (1, 0, 1): [1.0, np.nan, -1.0],
                (0, 1, 1): [np.nan, -1.0, 1.0],
            },
        )
        res = replicator_flow(g, [1 / 3, 1 / 3, 1 / 3], max_steps=1000)
        assert res.x_final == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-9)


class TestEquilibria:
    def test_dilemma_has_single_full_basin_equilibrium(self):
        g = dilemma()
        eqs = find_equilibria(g, n_starts=50, seed=3)
        assert len(eqs) == 1
        eq = eqs[0]
        assert eq.point == pytest.approx((0.0, 1.0), abs=1e-5)
        assert eq.basin_fraction == 1.0
        assert eq.is_ne

    def test_basin_fractions_sum_to_one(self):
        g = dilemma()
        eqs = find_equilibria(g, n_starts=40, seed=4)
        assert sum(e.basin_fraction for e in eqs) == pytest.approx(1.0, abs=1e-9)

    def test_verify_ne_rejects_non_equilibrium(self):
        g = dilemma()
        ok, gain = verify_ne(g, [1.0, 0.0])  # all-cooperate is not a NE
        assert not ok and gain > 0

    def test_coordination_game_two_basins(self):
        g = HeuristicGame.from_table(
            ("a", "b"),
            n_agents=2,
            table={(2, 0): [2.0, np.nan], (1, 1): [0.0, 0.0], (0, 2): [np.nan, 1.0]},
        )
        eqs = find_equilibria(g, n_starts=100, seed=5)
        pure_points = [e.point for e in eqs if e.basin_fraction > 0.1]
        assert len(pure_points) == 2
        # the payoff-2 equilibrium should own the bigger basin
        assert eqs[0].point == pytest.approx((1.0, 0.0), abs=1e-5)
        assert all(e.is_ne for e in eqs if e.basin_fraction > 0.1)


class TestPerturb:
    def test_zero_delta_is_identity(self):
        g = dilemma()
        g2 = perturb(g, 1, 0, 0.0)
        for p in g.profiles():
            np.testing.assert_array_equal(
                g.payoff_mean[p], g2.payoff_mean[p]
            )

    def test_transfer_only_where_both_present(self):
        g = perturb(dilemma(), 1, 0, 0.5)
        assert g.payoff((1, 1), 0) == pytest.approx(0.5)
        assert g.payoff((1, 1), 1) == pytest.approx(3.5)
        assert g.payoff((2, 0), 0) == pytest.approx(3.0)  # untouched
        assert g.payoff((0, 2), 1) == pytest.approx(1.0)  # untouched

    def test_critical_transfer_flips_the_dilemma(self):
        # cooperation takes over once the transfer exceeds 1
        res = replicator_flow(perturb(dilemma(), 1, 0, 1.5), [0.5, 0.5])
        assert res.x_final[0] == pytest.approx(1.0, abs=1e-6)
        res = replicator_flow(perturb(dilemma(), 1, 0, 0.5), [0.5, 0.5])
        assert res.x_final[1] == pytest.approx(1.0, abs=1e-6)

    def test_original_game_unchanged(self):
        g = dilemma()
        perturb(g, 0, 1, 2.0)
        assert g.payoff((1, 1), 0) == pytest.approx(0.0)


class TestEstimatePayoffs:
    def _game(self, reps=6):
        sched = Schedule((150.0, 120.0, 90.0), (50.0, 80.0, 110.0))
        cfg = MarketConfig(days=1, rounds_per_day=10)
        return estimate_payoffs(
            cfg,
            sched,
            [("zic", {}), ("tt", {})],
            n_agents=6,
            reps=reps,
            seed=99,
        )

    def test_table_covers_all_profiles(self):
        game = self._game()
        assert sorted(game.payoff_mean) == enumerate_profiles(2, 6)

    def test_absent_strategies_are_nan(self):
        game = self._game()
        assert math.isnan(game.payoff((6, 0), 1))
        assert math.isfinite(game.payoff((6, 0), 0))

    def test_estimation_is_reproducible(self):
        a, b = self._game(), self._game()
        for p in a.profiles():
            np.testing.assert_array_equal(
                np.nan_to_num(a.payoff_mean[p]), np.nan_to_num(b.payoff_mean[p])
            )

    def test_se_shrinks_with_reps(self):
        small = self._game(reps=4)
        big = self._game(reps=16)
        p = (3, 3)
        assert big.payoff_se(p, 0) < small.payoff_se(p, 0) * 1.5

    def test_odd_agents_rejected(self):
        with pytest.raises(ValueError, match="even"):
            estimate_payoffs(
                MarketConfig(days=1),
                Schedule((1.0,), (1.0,)),
                [("tt", {})],
                n_agents=3,
                reps=1,
                seed=0,
            )


class TestFlowBatch:
    def test_matches_single_trajectories(self):
        g = dilemma()
        starts = [[0.7, 0.3], [0.3, 0.7], [0.05, 0.95]]
        batch = replicator_flow_batch(g, starts)
        for x0, res in zip(starts, batch):
            single = replicator_flow(g, x0)
            assert res.x_final == single.x_final
            assert res.steps == single.steps
            assert res.converged == single.converged

    def test_rejects_bad_shapes(self):
        g = dilemma()
        with pytest.raises(ValueError, match="shaped"):
            replicator_flow_batch(g, [0.5, 0.5])
        with pytest.raises(ValueError, match="simplex"):
            replicator_flow_batch(g, [[0.9, 0.3]])
