"""Seeded Monte Carlo ensembles over countermeasure strategies.

Each run draws one per-contact transmission probability p from a log-normal
distribution and simulates every strategy against that same draw (common
random numbers), so between-strategy comparisons are paired.  Run r uses
the r-th child of a splittable seed sequence, which makes every output a
pure function of (seed, config, scenario) regardless of evaluation order
or the number of worker processes: runs for one strategy are evaluated as
one vectorised batch, and per-strategy blocks are reduced in strategy
order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ENGINE_VERSION
from .epi import CompartmentState, EpiRates, step
from .policy import Strategy

DAYS_PER_WEEK = 7

DEFAULT_P_MEDIAN = 0.023


class EnsembleError(RuntimeError):
    """Raised when any run of an ensemble fails; the ensemble is rejected."""


@dataclass(frozen=True)
class RunConfig:
    """Ensemble execution parameters."""

    n_runs: int = 1000
    horizon_weeks: int = 40
    seed: int = 0
    p_log_mean: float = math.log(DEFAULT_P_MEDIAN)
    p_log_sd: float = 0.1

    def validate(self) -> None:
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.horizon_weeks < 1:
            raise ValueError("horizon_weeks must be at least 1")
        if self.p_log_sd < 0:
            raise ValueError("p_log_sd must be nonnegative")


@dataclass(frozen=True)
class SimulationInputs:
    """Resolved per-scenario arrays consumed by the simulator."""

    regions: tuple[str, ...]
    age_groups: tuple[str, ...]
    populations: np.ndarray  # (n_regions, n_ages)
    gamma: np.ndarray  # (n_ages,)
    lam: np.ndarray  # (n_ages,)
    contacts: np.ndarray  # (3, n_ages)
    initial_infections: np.ndarray  # (n_regions,)
    seed_age_index: int

    @property
    def region_totals(self) -> np.ndarray:
        return self.populations.sum(axis=1)

    @property
    def total_population(self) -> float:
        return float(self.populations.sum())


@dataclass(frozen=True)
class Trajectory:
    """One simulated run of one strategy."""

    strategy: Strategy
    s: np.ndarray  # (n_days + 1, n_regions, n_ages)
    i: np.ndarray
    r: np.ndarray
    d: np.ndarray
    regimes_by_week: np.ndarray  # (horizon_weeks,)
    weeks_in_regime: np.ndarray  # (3,)
    deaths_by_age: np.ndarray  # (n_ages,)
    daily_deaths: np.ndarray  # (n_days,) new deaths per day

    @property
    def total_deaths(self) -> float:
        return float(self.deaths_by_age.sum())


@dataclass(frozen=True)
class StrategyOutcome:
    """Ensemble aggregates for one strategy (means over exactly n_runs)."""

    strategy: Strategy
    expected_deaths_by_age: np.ndarray  # (n_ages,)
    expected_weeks_in_regime: np.ndarray  # (3,)
    per_run_deaths_by_age: np.ndarray  # (n_runs, n_ages)
    per_run_weeks_in_regime: np.ndarray  # (n_runs, 3)
    example_daily_deaths: np.ndarray  # (n_days,), run 0
    example_regimes: np.ndarray  # (horizon_weeks,), run 0
    mean_daily_deaths: np.ndarray  # (n_days,)

    @property
    def per_run_total_deaths(self) -> np.ndarray:
        return self.per_run_deaths_by_age.sum(axis=1)

    @property
    def expected_total_deaths(self) -> float:
        return float(self.expected_deaths_by_age.sum())


@dataclass(frozen=True)
class EnsembleResult:
    """Paired ensemble over all strategies, with provenance."""

    outcomes: tuple[StrategyOutcome, ...]
    p_values: np.ndarray  # (n_runs,)
    config: RunConfig
    regions: tuple[str, ...]
    age_groups: tuple[str, ...]
    engine_version: str = ENGINE_VERSION
    scenario_digest: str | None = None

    def outcome(self, strategy_id: str) -> StrategyOutcome:
        for outcome in self.outcomes:
            if outcome.strategy.id == strategy_id:
                return outcome
        raise KeyError(f"no strategy {strategy_id!r} in ensemble")


def sample_p(rng: np.random.Generator, p_log_mean: float, p_log_sd: float) -> float:
    """One log-normal transmission-probability draw: exp(N(mu, sd))."""
    return math.exp(p_log_mean + p_log_sd * rng.standard_normal())


def sample_p_values(config: RunConfig) -> np.ndarray:
    """The shared p draw per run index, from per-run seed substreams.

    Child r of SeedSequence(seed) depends only on (seed, r), so the draw
    sequence is stable under parallel scheduling and under raising n_runs.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.n_runs)
    return np.array(
        [
            sample_p(np.random.default_rng(child), config.p_log_mean, config.p_log_sd)
            for child in children
        ]
    )


def initial_state(inputs: SimulationInputs, n_runs: int | None = None) -> CompartmentState:
    """Day-0 state: the seed infections sit in one age column per region."""
    shape = (len(inputs.regions), len(inputs.age_groups))
    if n_runs is not None:
        shape = (n_runs,) + shape
    i0 = np.zeros(shape)
    i0[..., :, inputs.seed_age_index] = inputs.initial_infections
    s0 = np.broadcast_to(inputs.populations, shape).copy() - i0
    if np.any(s0 < 0):
        raise ValueError("initial infections exceed the seeded stratum population")
    return CompartmentState(s=s0, i=i0, r=np.zeros(shape), d=np.zeros(shape), t=0)


def _simulate_batch(
    strategy: Strategy,
    p: np.ndarray,
    config: RunConfig,
    inputs: SimulationInputs,
    record_states: bool = False,
    state_hook=None,
) -> dict[str, np.ndarray]:
    """Vectorised simulation of one strategy across a batch of p draws.

    All runs share the compartment arrays' leading axis; weekly policy
    decisions are evaluated per run with the same comparisons as
    ``policy.decide_transition`` / ``policy.advance``.  ``state_hook``
    (previous state, new state) is called after every daily step; states
    are immutable, so hooks can inspect full trajectories without copies.
    """
    n = len(p)
    horizon = config.horizon_weeks
    n_days = DAYS_PER_WEEK * horizon
    rates = EpiRates(
        gamma=inputs.gamma, lam=inputs.lam, p=p, contacts=inputs.contacts
    )
    region_totals = inputs.region_totals
    total_pop = inputs.total_population

    state = initial_state(inputs, n_runs=n)

    regime = np.zeros(n, dtype=np.int64)
    peak = np.zeros(n)
    has_left = np.zeros(n, dtype=bool)
    prev_obs = np.full(n, np.nan)

    i_total = np.empty((n, n_days + 1))
    i_total[:, 0] = state.i.sum(axis=(1, 2))
    daily_deaths = np.empty((n, n_days))
    regimes_by_week = np.empty((n, horizon), dtype=np.int64)
    weeks_in_regime = np.zeros((n, 3))

    if record_states:
        recorded = {
            name: np.empty((n, n_days + 1) + state.s.shape[1:]) for name in "sird"
        }
        for name in "sird":
            recorded[name][:, 0] = getattr(state, name)

    easing = strategy.easing_fraction
    rise = strategy.tightening_rise
    threshold = strategy.lockdown_threshold
    target = int(strategy.initial_target)

    for week in range(1, horizon + 1):
        regimes_by_week[:, week - 1] = regime
        np.add.at(weeks_in_regime, (np.arange(n), regime), 1.0)
        for _ in range(DAYS_PER_WEEK):
            previous = state
            prev_d = state.d.sum(axis=(1, 2))
            state = step(state, rates, regime, region_totals)
            day = state.t
            i_total[:, day] = state.i.sum(axis=(1, 2))
            daily_deaths[:, day - 1] = state.d.sum(axis=(1, 2)) - prev_d
            if state_hook is not None:
                state_hook(previous, state)
            if record_states:
                for name in "sird":
                    recorded[name][:, day] = getattr(state, name)

        if week == horizon:
            break

        # Weekly decision: deaths are current, the infected proportion lags
        # by seven days (day 7*(week - 1)).
        obs_deaths = state.d.sum(axis=(1, 2))
        obs_inf = i_total[:, DAYS_PER_WEEK * (week - 1)] / total_pop

        new_regime = regime.copy()
        lockdown_now = (regime == 0) & ~has_left & (obs_deaths >= threshold)
        new_regime[lockdown_now] = target
        if rise is not None:
            with np.errstate(invalid="ignore"):
                rose = (obs_inf > 0.0) & (obs_inf >= (1.0 + rise) * prev_obs)
            new_regime[(regime == 1) & ~np.isnan(prev_obs) & rose] = 2
        if easing is not None:
            peak_incl = np.maximum(peak, obs_inf)
            new_regime[(regime == 2) & (obs_inf < easing * peak_incl)] = 1

        staying = (new_regime == 2) & (regime == 2)
        entering = (new_regime == 2) & (regime != 2)
        peak = np.where(staying, np.maximum(peak, obs_inf), peak)
        peak = np.where(entering, obs_inf, peak)
        has_left |= new_regime != 0
        prev_obs = obs_inf.copy()
        regime = new_regime

    out = {
        "regimes_by_week": regimes_by_week,
        "weeks_in_regime": weeks_in_regime,
        "deaths_by_age": state.d.sum(axis=1),
        "daily_deaths": daily_deaths,
    }
    if record_states:
        out.update(recorded)
    return out


def simulate_strategy(
    strategy: Strategy,
    sampled_p: float,
    config: RunConfig,
    inputs: SimulationInputs,
) -> Trajectory:
    """Simulate one strategy for one p draw, recording the full trajectory."""
    strategy.validate()
    config.validate()
    raw = _simulate_batch(
        strategy, np.array([sampled_p]), config, inputs, record_states=True
    )
    return Trajectory(
        strategy=strategy,
        s=raw["s"][0],
        i=raw["i"][0],
        r=raw["r"][0],
        d=raw["d"][0],
        regimes_by_week=raw["regimes_by_week"][0],
        weeks_in_regime=raw["weeks_in_regime"][0],
        deaths_by_age=raw["deaths_by_age"][0],
        daily_deaths=raw["daily_deaths"][0],
    )


def _strategy_outcome(
    strategy: Strategy,
    p_values: np.ndarray,
    config: RunConfig,
    inputs: SimulationInputs,
    state_hook=None,
) -> StrategyOutcome:
    raw = _simulate_batch(strategy, p_values, config, inputs, state_hook=state_hook)
    deaths_by_age = raw["deaths_by_age"]
    if not np.all(np.isfinite(deaths_by_age)):
        bad = np.flatnonzero(~np.isfinite(deaths_by_age).all(axis=1)).tolist()
        raise EnsembleError(
            f"strategy {strategy.id!r}: non-finite outcome in runs {bad}"
        )
    return StrategyOutcome(
        strategy=strategy,
        expected_deaths_by_age=deaths_by_age.mean(axis=0),
        expected_weeks_in_regime=raw["weeks_in_regime"].mean(axis=0),
        per_run_deaths_by_age=deaths_by_age,
        per_run_weeks_in_regime=raw["weeks_in_regime"],
        example_daily_deaths=raw["daily_deaths"][0],
        example_regimes=raw["regimes_by_week"][0],
        mean_daily_deaths=raw["daily_deaths"].mean(axis=0),
    )


def run_ensemble(
    strategies: list[Strategy],
    config: RunConfig,
    inputs: SimulationInputs,
    workers: int = 1,
    scenario_digest: str | None = None,
    progress=None,
    state_hook=None,
) -> EnsembleResult:
    """Run the paired ensemble for every strategy.

    ``workers > 1`` evaluates strategies in separate processes; results are
    assembled in strategy order, so the output is bit-identical at any
    parallelism level.  ``progress`` is an optional callback
    (done_strategies, total_strategies); ``state_hook`` (serial mode only)
    observes every daily step of every run.
    """
    config.validate()
    if not strategies:
        raise ValueError("at least one strategy is required")
    for strategy in strategies:
        strategy.validate()
    ids = [s.id for s in strategies]
    if len(set(ids)) != len(ids):
        raise ValueError("strategy ids must be unique")

    p_values = sample_p_values(config)

    outcomes: list[StrategyOutcome | None] = [None] * len(strategies)
    if workers > 1:
        if state_hook is not None:
            raise ValueError("state_hook requires serial execution (workers=1)")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_strategy_outcome, strategy, p_values, config, inputs)
                for strategy in strategies
            ]
            for index, future in enumerate(futures):
                outcomes[index] = future.result()
                if progress is not None:
                    progress(index + 1, len(strategies))
    else:
        for index, strategy in enumerate(strategies):
            outcomes[index] = _strategy_outcome(
                strategy, p_values, config, inputs, state_hook=state_hook
            )
            if progress is not None:
                progress(index + 1, len(strategies))

    return EnsembleResult(
        outcomes=tuple(outcomes),
        p_values=p_values,
        config=config,
        regions=inputs.regions,
        age_groups=inputs.age_groups,
        scenario_digest=scenario_digest,
    )
