"""Parameter search: a real-valued genetic algorithm, market fitness
functions, attractor-share fitness, and an epsilon-greedy bandit for
online mechanism adaptation.

The GA is generational with tournament selection, uniform crossover,
per-gene Gaussian mutation clamped to bounds, and elitism. Fitness
callables are maximized and must be deterministic; noisy market fitness
is made deterministic by averaging a fixed number of replications under
derived seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

from .egt import HeuristicGame, estimate_payoffs, find_equilibria
from .game import TraderDef, make_defs, run_game
from .market import KDAPricing, MarketConfig, Schedule
from .metrics import metrics_report
from .seeding import derive_seed, make_rng

Bounds = tuple[tuple[float, float], ...]

# Score assigned to a replication that produced no transactions, where
# the price-deviation measure is undefined. Equal to an RMS deviation of
# one whole equilibrium price, worse than any converging market.
NO_TRADE_ALPHA = 100.0


# ------------------------------------------------------------- genotypes


@dataclass(frozen=True)
class Genotype:
    """A real vector confined to per-gene [lo, hi] boxes."""

    genes: tuple[float, ...]
    bounds: Bounds

    def __post_init__(self):
        genes = tuple(float(g) for g in self.genes)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "genes", genes)
        object.__setattr__(self, "bounds", bounds)
        if len(genes) != len(bounds):
            raise ValueError(
                f"{len(genes)} genes but {len(bounds)} bounds"
            )
        for i, (g, (lo, hi)) in enumerate(zip(genes, bounds)):
            if lo > hi:
                raise ValueError(f"bounds[{i}] has lo {lo} > hi {hi}")
            if not lo <= g <= hi:
                raise ValueError(f"gene[{i}] = {g} outside [{lo}, {hi}]")


def random_genotype(bounds: Bounds, rng) -> Genotype:
    """Uniform draw inside the bounding box."""
    return Genotype(tuple(rng.uniform(lo, hi) for lo, hi in bounds), tuple(bounds))


@dataclass(frozen=True)
class GaConfig:
    population: int = 30
    generations: int = 100
    tournament_size: int = 2
    crossover_prob: float = 0.7
    mutation_sigma_frac: float = 0.05
    elitism: int = 1
    fitness_reps: int = 5

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if self.mutation_sigma_frac < 0:
            raise ValueError("mutation_sigma_frac must be non-negative")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("elitism must lie in [0, population]")
        if self.fitness_reps < 1:
            raise ValueError("fitness_reps must be at least 1")


@dataclass(frozen=True)
class GenerationStats:
    """One row of a GA trace."""

    generation: int
    best_fitness: float
    mean_fitness: float
    best_genes: tuple[float, ...]


def _tournament(fitnesses: Sequence[float], size: int, rng) -> int:
    best = rng.randrange(len(fitnesses))
    for _ in range(size - 1):
        i = rng.randrange(len(fitnesses))
        if fitnesses[i] > fitnesses[best] or (
            fitnesses[i] == fitnesses[best] and i < best
        ):
            best = i
    return best


def _crossover(a: Genotype, b: Genotype, rng) -> tuple[float, ...]:
    return tuple(
        ga if rng.random() < 0.5 else gb for ga, gb in zip(a.genes, b.genes)
    )


def _mutate(genes: tuple[float, ...], bounds: Bounds, sigma_frac: float, rng):
    n = len(genes)
    out = list(genes)
    for i, (lo, hi) in enumerate(bounds):
        if rng.random() < 1.0 / n:
            out[i] = min(hi, max(lo, out[i] + rng.gauss(0.0, sigma_frac * (hi - lo))))
    return tuple(out)


def ga_run(
    cfg: GaConfig,
    fitness: Callable[[Genotype], float],
    bounds: Bounds,
    seed: int,
) -> tuple[Genotype, list[GenerationStats]]:
    """Maximize `fitness` over the box. Returns the best genotype ever
    evaluated and a per-population trace (index 0 is the random init).

    Selection, crossover, and mutation all draw from one seeded stream,
    so a (config, seed) pair replays bit-exact. Fitness values are cached
    by gene vector, which keeps elite carry-overs free and relies on the
    fitness being deterministic.
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    rng = make_rng(seed)
    cache: dict[tuple[float, ...], float] = {}

    def evaluate(g: Genotype) -> float:
        if g.genes not in cache:
            cache[g.genes] = float(fitness(g))
        return cache[g.genes]

    population = [random_genotype(bounds, rng) for _ in range(cfg.population)]
    fits = [evaluate(g) for g in population]
    best_ever = max(range(len(population)), key=lambda i: (fits[i], -i))
    best_genotype, best_fitness = population[best_ever], fits[best_ever]
    trace: list[GenerationStats] = []

    def record(generation: int) -> None:
        i = max(range(len(population)), key=lambda j: (fits[j], -j))
        trace.append(
            GenerationStats(
                generation=generation,
                best_fitness=fits[i],
                mean_fitness=sum(fits) / len(fits),
                best_genes=population[i].genes,
            )
        )

    record(0)
    for generation in range(1, cfg.generations + 1):
        order = sorted(range(len(population)), key=lambda i: (-fits[i], i))
        next_pop = [population[i] for i in order[: cfg.elitism]]
        while len(next_pop) < cfg.population:
            p1 = population[_tournament(fits, cfg.tournament_size, rng)]
            p2 = population[_tournament(fits, cfg.tournament_size, rng)]
            genes = _crossover(p1, p2, rng) if rng.random() < cfg.crossover_prob else p1.genes
            genes = _mutate(genes, bounds, cfg.mutation_sigma_frac, rng)
            next_pop.append(Genotype(genes, bounds))
        population = next_pop
        fits = [evaluate(g) for g in population]
        i = max(range(len(population)), key=lambda j: (fits[j], -j))
        if fits[i] > best_fitness:
            best_genotype, best_fitness = population[i], fits[i]
        record(generation)
    return best_genotype, trace


# ------------------------------------------------- market fitness functions


@dataclass(frozen=True)
class FitnessScenario:
    """The fixed market a fitness evaluation replays: config, schedule,
    and how many seeded replications to average.

    schedule may be a per-day sequence wherever games merely replay it;
    fitness functions that size a trader population from it need a single
    Schedule."""

    config: MarketConfig
    schedule: Union[Schedule, tuple[Schedule, ...]]
    reps: int = 5

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")

    def single_schedule(self) -> Schedule:
        if not isinstance(self.schedule, Schedule):
            raise ValueError("this fitness needs one schedule, not a per-day list")
        return self.schedule


ZIP_GENE_NAMES = (
    "beta_lo",
    "beta_hi",
    "gamma_lo",
    "gamma_hi",
    "mu_lo",
    "mu_hi",
    "ca",
    "cr",
)

ZIP_GENE_BOUNDS: Bounds = (
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 5.0),
    (0.0, 0.5),
)


def zip_params(genes: Sequence[float]) -> dict:
    """Map the eight-gene vector to adaptive-margin trader parameters:
    three (lo, hi) draw ranges plus the two target perturbation scales.
    Crossed lo/hi pairs are repaired by swapping."""
    if len(genes) != 8:
        raise ValueError(f"expected 8 genes, got {len(genes)}")
    b_lo, b_hi, g_lo, g_hi, m_lo, m_hi, ca, cr = (float(g) for g in genes)
    if b_lo > b_hi:
        b_lo, b_hi = b_hi, b_lo
    if g_lo > g_hi:
        g_lo, g_hi = g_hi, g_lo
    if m_lo > m_hi:
        m_lo, m_hi = m_hi, m_lo
    return {
        "beta_range": (b_lo, b_hi),
        "gamma_range": (g_lo, g_hi),
        "margin_range": (m_lo, m_hi),
        "ca": ca,
        "cr": cr,
    }


def _mean_alpha(logs) -> float:
    total = 0.0
    for log in logs:
        alpha = metrics_report(log).alpha
        total += NO_TRADE_ALPHA if alpha is None else alpha
    return total / len(logs)


def zip_fitness(genotype: Genotype, scenario: FitnessScenario, seed: int) -> float:
    """Negated mean price-deviation alpha of a market populated entirely
    by adaptive-margin traders drawn from the genotype's ranges."""
    params = zip_params(genotype.genes)
    schedule = scenario.single_schedule()
    n_buyers = len(schedule.buyer_values)
    n_sellers = len(schedule.seller_values)
    defs = make_defs(
        [("zip", params)] * n_buyers,
        [("zip", params)] * n_sellers,
    )
    logs = [
        run_game(scenario.config, scenario.schedule, defs, derive_seed(seed, rep))
        for rep in range(scenario.reps)
    ]
    return -_mean_alpha(logs)


MECHANISM_PARAMS = ("qs", "k")


def _apply_param(cfg: MarketConfig, param: str, value: float) -> MarketConfig:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{param} must lie in [0, 1], got {value}")
    if param == "qs":
        return replace(cfg, qs=value)
    if param == "k":
        return replace(cfg, pricing=KDAPricing(k=value))
    raise ValueError(f"unknown mechanism parameter {param!r}, expected one of {MECHANISM_PARAMS}")


def mechanism_fitness(
    param: str,
    value: float,
    scenario: FitnessScenario,
    defs: Sequence[TraderDef],
    seed: int,
    objective: str = "alpha",
) -> float:
    """Fitness of one mechanism setting under a fixed trader mix.

    param "qs" sets the seller-turn probability, "k" the pricing weight.
    objective "alpha" maximizes convergence (returns -mean alpha);
    "efficiency" maximizes surplus extraction (+mean Ea). Games with no
    trades count as alpha 100 / efficiency 0.
    """
    cfg = _apply_param(scenario.config, param, value)
    logs = [
        run_game(cfg, scenario.schedule, list(defs), derive_seed(seed, rep))
        for rep in range(scenario.reps)
    ]
    if objective == "alpha":
        return -_mean_alpha(logs)
    if objective == "efficiency":
        total = 0.0
        for log in logs:
            ea = metrics_report(log).ea
            total += 0.0 if ea is None else ea
        return total / len(logs)
    raise ValueError(f"unknown objective {objective!r}, expected 'alpha' or 'efficiency'")


# ------------------------------------------------------ attractor fitness


def basin_share(
    game: HeuristicGame,
    strategy: int,
    n_starts: int = 100,
    seed: int = 0,
    support_tol: float = 1e-4,
) -> float:
    """Summed basin fraction of every attractor whose support includes
    the strategy. Lies in [0, 1]; the gap to 1 is the share of mixtures
    that evolve away from it entirely."""
    if not 0 <= strategy < game.n_strategies:
        raise ValueError("strategy index out of range")
    eqs = find_equilibria(game, n_starts=n_starts, seed=seed, support_tol=support_tol)
    return sum(e.basin_fraction for e in eqs if e.point[strategy] > support_tol)


def basin_fitness(
    genotype: Genotype,
    rivals: Sequence[tuple[str, dict]],
    scenario: FitnessScenario,
    n_agents: int,
    seed: int,
    n_starts: int = 100,
) -> float:
    """Evolutionary robustness of a genotype-parameterized adaptive-margin
    strategy: estimate the payoff table for {candidate} plus rivals, then
    return the candidate's summed attractor share."""
    candidate = ("zip", zip_params(genotype.genes))
    strategies = [candidate] + [(name, dict(params)) for name, params in rivals]
    game = estimate_payoffs(
        scenario.config,
        scenario.single_schedule(),
        strategies,
        n_agents=n_agents,
        reps=scenario.reps,
        seed=seed,
    )
    return basin_share(game, 0, n_starts=n_starts, seed=derive_seed(seed, 1))


# ------------------------------------------------------------------ bandit


@dataclass(frozen=True)
class BanditState:
    """Sample-mean bookkeeping for an epsilon-greedy bandit. counts and
    means cover completed reward observations; last_arm is the pull whose
    reward is still outstanding."""

    arms: tuple
    counts: tuple[int, ...]
    means: tuple[float, ...]
    epsilon: float
    last_arm: Optional[int] = None

    def __post_init__(self):
        if len(self.arms) < 1:
            raise ValueError("need at least one arm")
        if len(self.counts) != len(self.arms) or len(self.means) != len(self.arms):
            raise ValueError("counts and means must match the arm count")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


def make_bandit(arms: Sequence, epsilon: float) -> BanditState:
    n = len(arms)
    return BanditState(tuple(arms), (0,) * n, (0.0,) * n, epsilon)


def epsilon_greedy_step(state: BanditState, reward: Optional[float], rng) -> tuple[BanditState, int]:
    """Record the outstanding pull's reward, then pick the next arm:
    explore uniformly with probability epsilon, otherwise exploit the
    best sample mean (ties to the lowest index). Pass reward None only
    on the first call, when nothing is outstanding."""
    counts = list(state.counts)
    means = list(state.means)
    if state.last_arm is None:
        if reward is not None:
            raise ValueError("no pull outstanding, reward must be None")
    else:
        if reward is None or not math.isfinite(reward):
            raise ValueError("outstanding pull needs a finite reward")
        i = state.last_arm
        counts[i] += 1
        means[i] += (reward - means[i]) / counts[i]
    if rng.random() < state.epsilon:
        arm = rng.randrange(len(state.arms))
    else:
        arm = 0
        for i in range(1, len(means)):
            if means[i] > means[arm]:
                arm = i
    new_state = BanditState(state.arms, tuple(counts), tuple(means), state.epsilon, arm)
    return new_state, arm


@dataclass(frozen=True)
class BanditPull:
    """One row of an adaptation trace."""

    pull: int
    arm: int
    reward: float
    running_mean: float


def adapt_run(
    param: str,
    arm_values: Sequence[float],
    scenario: FitnessScenario,
    defs: Sequence[TraderDef],
    epsilon: float,
    pulls: int,
    seed: int,
) -> tuple[BanditState, list[BanditPull]]:
    """Online mechanism adaptation: every pull plays one full game with
    the chosen arm's parameter value and feeds back its allocative
    efficiency as the reward (0 when the game had no trades)."""
    if pulls < 1:
        raise ValueError("pulls must be at least 1")
    state = make_bandit(tuple(arm_values), epsilon)
    rng = make_rng(seed, 0)
    state, arm = epsilon_greedy_step(state, None, rng)
    rows: list[BanditPull] = []
    for pull in range(pulls):
        cfg = _apply_param(scenario.config, param, state.arms[arm])
        log = run_game(cfg, scenario.schedule, list(defs), derive_seed(seed, 1, pull))
        ea = metrics_report(log).ea
        reward = 0.0 if ea is None else float(ea)
        state, next_arm = epsilon_greedy_step(state, reward, rng)
        rows.append(BanditPull(pull, arm, reward, state.means[arm]))
        arm = next_arm
    return state, rows
