"""Empirical game theory over trading strategies.

A heuristic game collapses the market to one payoff table: for every way
N agents can be split among S strategies, the expected per-agent profit
of each strategy present. Tables come from batches of simulated games
(estimate_payoffs) or are built directly from known values. On top of the
table: expected payoff of a strategy against a mixture, replicator
dynamics integrated with fixed-step RK4, equilibrium discovery with basin
fractions from many random interior starts, and payoff-transfer
perturbation between strategy pairs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .game import TraderDef, run_game
from .market import MarketConfig, Schedule, Side
from .seeding import derive_seed


class MissingProfileError(KeyError):
    """Payoff queried for a profile absent from the table."""


def enumerate_profiles(n_strategies: int, n_agents: int) -> list[tuple[int, ...]]:
    """All count vectors over strategies summing to n_agents, in
    deterministic lexicographic order."""
    if n_strategies < 1 or n_agents < 0:
        raise ValueError("need at least one strategy and non-negative agents")
    profiles = []
    for combo in itertools.combinations_with_replacement(range(n_strategies), n_agents):
        counts = [0] * n_strategies
        for s in combo:
            counts[s] += 1
        profiles.append(tuple(counts))
    profiles.sort()
    return profiles


@dataclass
class HeuristicGame:
    """Symmetric payoff table over agent-count profiles.

    payoff_mean[p][s] is the estimated per-agent payoff of strategy s in
    profile p (nan when s is absent from p); payoff_var and payoff_n give
    the sample variance and sample count behind each estimate.
    """

    strategy_names: tuple[str, ...]
    n_agents: int
    payoff_mean: dict[tuple[int, ...], np.ndarray]
    payoff_var: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)
    payoff_n: dict[tuple[int, ...], int] = field(default_factory=dict)

    @property
    def n_strategies(self) -> int:
        return len(self.strategy_names)

    def profiles(self) -> list[tuple[int, ...]]:
        return sorted(self.payoff_mean)

    def payoff(self, profile: tuple[int, ...], strategy: int) -> float:
        if profile not in self.payoff_mean:
            raise MissingProfileError(profile)
        return float(self.payoff_mean[profile][strategy])

    def payoff_se(self, profile: tuple[int, ...], strategy: int) -> float:
        """Standard error of the payoff estimate; zero for exact tables."""
        if profile not in self.payoff_mean:
            raise MissingProfileError(profile)
        var = self.payoff_var.get(profile)
        n = self.payoff_n.get(profile, 0)
        if var is None or n <= 1:
            return 0.0
        return math.sqrt(max(float(var[strategy]), 0.0) / n)

    def scale(self) -> float:
        """Largest absolute payoff, used to normalize replicator time."""
        best = 0.0
        for arr in self.payoff_mean.values():
            finite = arr[np.isfinite(arr)]
            if finite.size:
                best = max(best, float(np.max(np.abs(finite))))
        return best if best > 0 else 1.0

    @classmethod
    def from_table(
        cls, strategy_names: Sequence[str], n_agents: int,
        table: dict[tuple[int, ...], Sequence[float]]
    ) -> "HeuristicGame":
        """Exact analytic game: absent strategies marked nan, variance zero."""
        means = {}
        for profile, payoffs in table.items():
            arr = np.array(payoffs, dtype=float)
            for s, c in enumerate(profile):
                if c == 0:
                    arr[s] = np.nan
            means[tuple(profile)] = arr
        return cls(tuple(strategy_names), n_agents, means)


# ------------------------------------------------------- payoff estimation


def profile_assignment(
    profile: tuple[int, ...], n_buyers: int, n_sellers: int, rng
) -> tuple[list[int], list[int]]:
    """Role-balanced seat assignment for one profile.

    Each strategy sends half its agents to each role; odd leftovers go,
    in seed-shuffled strategy order, to whichever role has more free
    capacity (ties broken by the seed too). Returns per-role strategy
    index lists, each shuffled into seating order.
    """
    buyers: list[int] = []
    sellers: list[int] = []
    leftovers: list[int] = []
    for s, count in enumerate(profile):
        base = count // 2
        buyers.extend([s] * base)
        sellers.extend([s] * base)
        if count % 2:
            leftovers.append(s)
    rng.shuffle(leftovers)
    for s in leftovers:
        free_b = n_buyers - len(buyers)
        free_s = n_sellers - len(sellers)
        if free_b > free_s:
            buyers.append(s)
        elif free_s > free_b:
            sellers.append(s)
        elif rng.random() < 0.5:
            buyers.append(s)
        else:
            sellers.append(s)
    if len(buyers) != n_buyers or len(sellers) != n_sellers:
        raise ValueError(
            f"profile {profile} cannot fill {n_buyers}+{n_sellers} seats"
        )
    rng.shuffle(buyers)
    rng.shuffle(sellers)
    return buyers, sellers


def estimate_payoffs(
    cfg: MarketConfig,
    schedule: Schedule,
    strategies: Sequence[tuple[str, dict]],
    n_agents: int,
    reps: int,
    seed: int,
) -> HeuristicGame:
    """Simulate every profile reps times and tabulate mean per-agent payoffs.

    n_agents must be even and match the schedule (half per role). Each
    (profile, rep) pair gets its own derived seed for seat assignment and
    for the game itself, so single profiles can be re-estimated in
    isolation and reproduce exactly.
    """
    n_strats = len(strategies)
    if n_agents % 2:
        raise ValueError("n_agents must be even (half buyers, half sellers)")
    half = n_agents // 2
    if len(schedule.buyer_values) != half or len(schedule.seller_values) != half:
        raise ValueError(
            f"schedule sizes {len(schedule.buyer_values)}x{len(schedule.seller_values)} "
            f"must be {half}x{half} for {n_agents} agents"
        )
    import random as _random

    names = tuple(name for name, _ in strategies)
    means: dict[tuple[int, ...], np.ndarray] = {}
    variances: dict[tuple[int, ...], np.ndarray] = {}
    counts: dict[tuple[int, ...], int] = {}
    for p_idx, profile in enumerate(enumerate_profiles(n_strats, n_agents)):
        samples = np.full((reps, n_strats), np.nan)
        for rep in range(reps):
            assign_rng = _random.Random(derive_seed(seed, p_idx, rep, 0))
            buyers, sellers = profile_assignment(profile, half, half, assign_rng)
            defs = [
                TraderDef(f"B{i}", Side.BUY, names[s], dict(strategies[s][1]))
                for i, s in enumerate(buyers)
            ] + [
                TraderDef(f"S{i}", Side.SELL, names[s], dict(strategies[s][1]))
                for i, s in enumerate(sellers)
            ]
            log = run_game(cfg, schedule, defs, seed=derive_seed(seed, p_idx, rep, 1))
            per_strategy: dict[int, list[float]] = {}
            for i, s in enumerate(buyers):
                per_strategy.setdefault(s, []).append(log.trader_profits[f"B{i}"])
            for i, s in enumerate(sellers):
                per_strategy.setdefault(s, []).append(log.trader_profits[f"S{i}"])
            for s, profits in per_strategy.items():
                samples[rep, s] = sum(profits) / len(profits)
        mean = np.full(n_strats, np.nan)
        var = np.full(n_strats, np.nan)
        for s, c in enumerate(profile):
            if c == 0:
                continue
            col = samples[:, s]
            if reps:
                mean[s] = col.mean()
                var[s] = col.var(ddof=1) if reps > 1 else 0.0
        means[profile] = mean
        variances[profile] = var
        counts[profile] = reps
    return HeuristicGame(names, n_agents, means, variances, counts)


# ----------------------------------------------------------- mixture math


def _multinomial(counts: Sequence[int]) -> int:
    total = sum(counts)
    out = 1
    for c in counts:
        out *= math.comb(total, c)
        total -= c
    return out


class _MixtureEvaluator:
    """Precomputed tensors for fast u(s, x) evaluation.

    All strategies share one list of opponent profiles (counts over N-1
    agents); the occupancy probability of each opponent profile is
    computed once per mixture and dotted with per-strategy weights,
    weight_js = multinomial(opp_j) * payoff(opp_j + e_s, s).
    """

    def __init__(self, game: HeuristicGame):
        self.game = game
        S = game.n_strategies
        N = game.n_agents
        opp_profiles = enumerate_profiles(S, N - 1)
        self.exponents = np.array(opp_profiles, dtype=float)  # (n_opp, S)
        coeffs = np.array([_multinomial(p) for p in opp_profiles], dtype=float)
        weights = np.empty((len(opp_profiles), S))
        variances = np.empty((len(opp_profiles), S))
        for j, opp in enumerate(opp_profiles):
            for s in range(S):
                full = list(opp)
                full[s] += 1
                pay = game.payoff(tuple(full), s)
                if not math.isfinite(pay):
                    raise ValueError(
                        f"payoff table has no finite value for strategy {s} "
                        f"in profile {tuple(full)}"
                    )
                weights[j, s] = coeffs[j] * pay
                variances[j, s] = (coeffs[j] ** 2) * game.payoff_se(tuple(full), s) ** 2
        self.weights = weights          # (n_opp, S)
        self.variances = variances      # (n_opp, S)

    def _occupancy(self, X: np.ndarray) -> np.ndarray:
        """(B, n_opp) profile probabilities for a batch of mixtures."""
        return np.prod(X[:, None, :] ** self.exponents[None, :, :], axis=2)

    def payoffs_batch(self, X: np.ndarray) -> np.ndarray:
        """u(s, x) for a (B, S) batch of mixtures, returned as (B, S)."""
        return self._occupancy(X) @ self.weights

    def payoffs(self, x: np.ndarray) -> np.ndarray:
        """u(s, x) for every s."""
        return self.payoffs_batch(x[None, :])[0]

    def payoff_se(self, x: np.ndarray) -> np.ndarray:
        """Standard error of each u(s, x), propagated from table SEs."""
        probs = self._occupancy(x[None, :])[0]
        return np.sqrt((probs**2) @ self.variances)


def mixture_payoff(game: HeuristicGame, mixture: Sequence[float], strategy: int) -> float:
    """Expected payoff of one agent playing `strategy` while the other
    N - 1 agents draw independently from `mixture`."""
    x = np.asarray(mixture, dtype=float)
    if x.shape != (game.n_strategies,):
        raise ValueError("mixture length must match strategy count")
    if abs(float(x.sum()) - 1.0) > 1e-9 or np.any(x < -1e-12):
        raise ValueError("mixture must be a probability vector")
    return float(_MixtureEvaluator(game).payoffs(np.maximum(x, 0.0))[strategy])


# ------------------------------------------------------ replicator dynamics


@dataclass(frozen=True)
class FlowResult:
    """One replicator trajectory: start, end, and bookkeeping."""

    x0: tuple[float, ...]
    x_final: tuple[float, ...]
    steps: int
    converged: bool
    max_simplex_drift: float
    trajectory: Optional[np.ndarray] = None


def _batch_field(evaluator: _MixtureEvaluator, scale: float, X: np.ndarray) -> np.ndarray:
    U = evaluator.payoffs_batch(X) / scale
    ubar = np.sum(X * U, axis=1, keepdims=True)
    return X * (U - ubar)


def _flow_batch(
    evaluator: _MixtureEvaluator,
    scale: float,
    X0: np.ndarray,
    dt: float,
    max_steps: int,
    tol: float,
    record_every: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """RK4-integrate a batch of replicator trajectories side by side.

    Rows whose field max-norm drops below tol freeze in place; the loop
    exits once every row has frozen. Returns (X_final, steps, converged,
    drift, trajectory), each indexed by row.
    """
    X = np.array(X0, dtype=float)
    n = X.shape[0]
    active = np.ones(n, dtype=bool)
    steps = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    drift = np.abs(X.sum(axis=1) - 1.0)
    traj = [X.copy()] if record_every else None
    for step in range(1, max_steps + 1):
        k1 = _batch_field(evaluator, scale, X)
        done = np.max(np.abs(k1), axis=1) < tol
        converged |= active & done
        active &= ~done
        if not active.any():
            break
        k2 = _batch_field(evaluator, scale, X + 0.5 * dt * k1)
        k3 = _batch_field(evaluator, scale, X + 0.5 * dt * k2)
        k4 = _batch_field(evaluator, scale, X + dt * k3)
        delta = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X[active] = np.maximum(X[active] + delta[active], 0.0)
        steps[active] += 1
        drift = np.maximum(drift, np.abs(X.sum(axis=1) - 1.0))
        if traj is not None and step % record_every == 0:
            traj.append(X.copy())
    else:
        final = np.max(np.abs(_batch_field(evaluator, scale, X)), axis=1) < tol
        converged |= active & final
    if traj is not None:
        traj.append(X.copy())
    trajectory = np.array(traj) if traj is not None else None
    return X, steps, converged, drift, trajectory


def replicator_flow(
    game: HeuristicGame,
    x0: Sequence[float],
    dt: float = 0.01,
    max_steps: int = 200_000,
    tol: float = 1e-8,
    record_every: int = 0,
    _evaluator: Optional[_MixtureEvaluator] = None,
) -> FlowResult:
    """Integrate x' = x * (u(x) - ubar(x)) with fixed-step RK4.

    Payoffs are divided by the table's largest magnitude, a pure time
    rescaling that keeps trajectories identical and the step size safe.
    Converged when the field's max component drops below tol. The simplex
    sum is never renormalized; its worst drift from 1 is reported.
    """
    x = np.asarray(x0, dtype=float)
    if x.shape != (game.n_strategies,):
        raise ValueError("x0 length must match strategy count")
    if abs(float(x.sum()) - 1.0) > 1e-9 or np.any(x < 0):
        raise ValueError("x0 must lie on the simplex")
    evaluator = _evaluator or _MixtureEvaluator(game)
    X, steps, converged, drift, trajectory = _flow_batch(
        evaluator, game.scale(), x[None, :], dt, max_steps, tol, record_every
    )
    return FlowResult(
        x0=tuple(float(v) for v in x),
        x_final=tuple(float(v) for v in X[0]),
        steps=int(steps[0]),
        converged=bool(converged[0]),
        max_simplex_drift=float(drift[0]),
        trajectory=trajectory[:, 0, :] if trajectory is not None else None,
    )


def replicator_flow_batch(
    game: HeuristicGame,
    x0s: Sequence[Sequence[float]],
    dt: float = 0.01,
    max_steps: int = 200_000,
    tol: float = 1e-8,
) -> list[FlowResult]:
    """Integrate many starting mixtures side by side.

    Same dynamics and stopping rule as replicator_flow, but all starts
    advance through a shared vectorized stepper, which is much faster than
    looping. Trajectories are not recorded.
    """
    X0 = np.asarray(x0s, dtype=float)
    if X0.ndim != 2 or X0.shape[1] != game.n_strategies:
        raise ValueError("x0s must be shaped (n_starts, n_strategies)")
    if np.any(np.abs(X0.sum(axis=1) - 1.0) > 1e-9) or np.any(X0 < 0):
        raise ValueError("every start must lie on the simplex")
    evaluator = _MixtureEvaluator(game)
    X, steps, converged, drift, _ = _flow_batch(
        evaluator, game.scale(), X0, dt, max_steps, tol
    )
    return [
        FlowResult(
            x0=tuple(float(v) for v in X0[i]),
            x_final=tuple(float(v) for v in X[i]),
            steps=int(steps[i]),
            converged=bool(converged[i]),
            max_simplex_drift=float(drift[i]),
        )
        for i in range(X0.shape[0])
    ]


# ------------------------------------------------------------- equilibria


@dataclass(frozen=True)
class Equilibrium:
    """A flow attractor: the point, its basin share, and its NE verdict."""

    point: tuple[float, ...]
    basin_fraction: float
    is_ne: bool
    max_deviation_gain: float


SE_FLOOR = 1e-9


def verify_ne(
    game: HeuristicGame,
    point: Sequence[float],
    support_tol: float = 1e-4,
    _evaluator: Optional[_MixtureEvaluator] = None,
) -> tuple[bool, float]:
    """Check the point is a Nash equilibrium within two standard errors.

    Every strategy's deviation gain u(s, x) - ubar(x) must stay below
    2 * SE of that gain (SE floored so exact tables verify strictly).
    Returns (verdict, worst gain in payoff units).
    """
    x = np.maximum(np.asarray(point, dtype=float), 0.0)
    evaluator = _evaluator or _MixtureEvaluator(game)
    u = evaluator.payoffs(x)
    se = evaluator.payoff_se(x)
    ubar = float(x @ u)
    se_ubar = float(np.sqrt(np.sum((x * se) ** 2)))
    worst = -math.inf
    ok = True
    for s in range(game.n_strategies):
        gain = float(u[s]) - ubar
        band = 2.0 * math.sqrt(se[s] ** 2 + se_ubar**2) + SE_FLOOR
        worst = max(worst, gain)
        if gain > band:
            ok = False
    return ok, worst


def find_equilibria(
    game: HeuristicGame,
    n_starts: int = 200,
    seed: int = 0,
    dt: float = 0.01,
    max_steps: int = 200_000,
    tol: float = 1e-8,
    cluster_tol: float = 1e-3,
    support_tol: float = 1e-4,
) -> list[Equilibrium]:
    """Flow from random interior starts, cluster the endpoints, and report
    each attractor with its basin fraction and NE verdict.

    Starts are Dirichlet(1, ..., 1) draws. Endpoints within cluster_tol in
    max-norm merge; each cluster is represented by its mean, with weights
    under support_tol snapped to zero. Sorted by basin fraction, largest
    first.
    """
    rng = np.random.default_rng(seed)
    evaluator = _MixtureEvaluator(game)
    X0 = np.stack([rng.dirichlet(np.ones(game.n_strategies)) for _ in range(n_starts)])
    endpoints, _, _, _, _ = _flow_batch(
        evaluator, game.scale(), X0, dt, max_steps, tol
    )
    clusters: list[list[np.ndarray]] = []
    for pt in endpoints:
        for cluster in clusters:
            if float(np.max(np.abs(pt - cluster[0]))) < cluster_tol:
                cluster.append(pt)
                break
        else:
            clusters.append([pt])
    out = []
    for cluster in clusters:
        rep_point = np.mean(cluster, axis=0)
        # Trajectories stop within tol of an attractor, not on it; crumbs
        # below the support threshold are numerical residue, so zero them
        # and renormalize before judging the point.
        rep_point[rep_point < support_tol] = 0.0
        rep_point /= rep_point.sum()
        is_ne, worst = verify_ne(
            game, rep_point, support_tol=support_tol, _evaluator=evaluator
        )
        out.append(
            Equilibrium(
                point=tuple(float(v) for v in rep_point),
                basin_fraction=len(cluster) / n_starts,
                is_ne=is_ne,
                max_deviation_gain=worst,
            )
        )
    out.sort(key=lambda e: (-e.basin_fraction, e.point))
    return out


# ------------------------------------------------------------ perturbation


def perturb(game: HeuristicGame, source: int, target: int, delta: float) -> HeuristicGame:
    """Transfer delta payoff from `source` to `target` in every profile
    where both strategies are present. delta = 0 returns an equal game."""
    S = game.n_strategies
    if not (0 <= source < S and 0 <= target < S):
        raise ValueError("strategy index out of range")
    means = {}
    for profile, arr in game.payoff_mean.items():
        new = arr.copy()
        if profile[source] > 0 and profile[target] > 0:
            new[source] -= delta
            new[target] += delta
        means[profile] = new
    return HeuristicGame(
        game.strategy_names,
        game.n_agents,
        means,
        {p: v.copy() for p, v in game.payoff_var.items()},
        dict(game.payoff_n),
    )
