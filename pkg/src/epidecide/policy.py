"""Regime-switching strategy state machine.

A strategy watches two observation channels at weekly decision epochs:
cumulative deaths (known immediately) and the proportion of the population
currently infected (known with a one-week delay).  Transitions:

    no lockdown -> initial target   once cumulative deaths reach L
    partial     -> complete         on a week-over-week rise of the
                                    observed infected count (default 5%)
    complete    -> partial          once the observed infected proportion
                                    falls below fraction E of its observed
                                    peak since complete lockdown began

At most one transition fires per weekly decision, and once restrictions
have begun there is no path back to "no lockdown".  Strategies whose
easing fraction and tightening rise are both absent start restrictions in
partial lockdown and stay there: the "no complete lockdown" family, written
with an ``E*`` suffix.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum


class Regime(IntEnum):
    NO_LOCKDOWN = 0
    PARTIAL_LOCKDOWN = 1
    COMPLETE_LOCKDOWN = 2


REGIME_LABELS = {
    Regime.NO_LOCKDOWN: "none",
    Regime.PARTIAL_LOCKDOWN: "partial",
    Regime.COMPLETE_LOCKDOWN: "complete",
}

DEFAULT_TIGHTENING_RISE = 0.05

STANDARD_LOCKDOWN_THRESHOLDS = {"L1": 100.0, "L2": 300.0, "L3": 500.0}
STANDARD_EASING_FRACTIONS = {"E0": 0.0, "E1": 0.12, "E2": 0.3, "E3": 0.5}


class StrategyError(ValueError):
    """Raised for strategies whose fields violate the transition rules."""


@dataclass(frozen=True)
class Strategy:
    """Threshold parameters governing regime transitions.

    ``easing_fraction is None`` marks the partial-only family: the initial
    transition targets partial lockdown and neither the tightening nor the
    easing rule ever applies.
    """

    id: str
    initial_target: Regime
    lockdown_threshold: float
    easing_fraction: float | None = None
    tightening_rise: float | None = DEFAULT_TIGHTENING_RISE

    @property
    def partial_only(self) -> bool:
        return self.easing_fraction is None

    def validate(self) -> None:
        if not self.id:
            raise StrategyError("strategy id must be nonempty")
        if self.lockdown_threshold <= 0:
            raise StrategyError(f"{self.id}: lockdown_threshold must be positive")
        if self.initial_target not in (Regime.PARTIAL_LOCKDOWN, Regime.COMPLETE_LOCKDOWN):
            raise StrategyError(f"{self.id}: initial_target must be partial or complete")
        if self.easing_fraction is None:
            if self.initial_target is not Regime.PARTIAL_LOCKDOWN:
                raise StrategyError(
                    f"{self.id}: a strategy without an easing rule must target partial lockdown"
                )
            if self.tightening_rise is not None:
                raise StrategyError(
                    f"{self.id}: a strategy without an easing rule cannot tighten into complete lockdown"
                )
        else:
            if not 0.0 <= self.easing_fraction <= 1.0:
                raise StrategyError(f"{self.id}: easing_fraction must lie in [0, 1]")
            if self.tightening_rise is not None and self.tightening_rise < 0:
                raise StrategyError(f"{self.id}: tightening_rise must be nonnegative")


@dataclass(frozen=True)
class Observation:
    """What the decision maker sees at the end of week ``week``.

    ``cumulative_deaths`` is current (day 7*week); ``infected_proportion``
    lags by seven days and reflects day 7*(week - 1).
    """

    week: int
    cumulative_deaths: float
    infected_proportion: float


@dataclass(frozen=True)
class PolicyState:
    """Mutable part of the state machine, carried between weekly decisions.

    ``peak_observed_infected`` tracks the observed infected proportion
    since complete lockdown was last entered; ``prev_observed_infected``
    remembers last week's observation for the week-over-week rise test.
    """

    regime: Regime = Regime.NO_LOCKDOWN
    peak_observed_infected: float = 0.0
    has_left_r0: bool = False
    prev_observed_infected: float | None = None


def decide_transition(strategy: Strategy, state: PolicyState, observation: Observation) -> Regime:
    """Regime in force for the coming week; at most one switch per call."""
    if state.regime is Regime.NO_LOCKDOWN:
        if not state.has_left_r0 and observation.cumulative_deaths >= strategy.lockdown_threshold:
            return strategy.initial_target
        return Regime.NO_LOCKDOWN

    if state.regime is Regime.PARTIAL_LOCKDOWN:
        if strategy.tightening_rise is not None and state.prev_observed_infected is not None:
            current = observation.infected_proportion
            threshold = (1.0 + strategy.tightening_rise) * state.prev_observed_infected
            # current > 0 guards the degenerate 0 >= 1.05*0 case: a flat
            # zero observation series is not a rise.
            if current > 0.0 and current >= threshold:
                return Regime.COMPLETE_LOCKDOWN
        return Regime.PARTIAL_LOCKDOWN

    # Complete lockdown: ease once observations fall far enough below the
    # observed peak (strict inequality, so E=0 never eases).
    if strategy.easing_fraction is not None:
        peak = max(state.peak_observed_infected, observation.infected_proportion)
        if observation.infected_proportion < strategy.easing_fraction * peak:
            return Regime.PARTIAL_LOCKDOWN
    return Regime.COMPLETE_LOCKDOWN


def advance(strategy: Strategy, state: PolicyState, observation: Observation) -> PolicyState:
    """Apply one weekly decision and update the bookkeeping fields.

    The peak comparator resets whenever complete lockdown is (re-)entered,
    starting from the observation at the entry decision.
    """
    regime = decide_transition(strategy, state, observation)
    if regime is Regime.COMPLETE_LOCKDOWN:
        if state.regime is Regime.COMPLETE_LOCKDOWN:
            peak = max(state.peak_observed_infected, observation.infected_proportion)
        else:
            peak = observation.infected_proportion
    else:
        peak = state.peak_observed_infected
    return PolicyState(
        regime=regime,
        peak_observed_infected=peak,
        has_left_r0=state.has_left_r0 or regime is not Regime.NO_LOCKDOWN,
        prev_observed_infected=observation.infected_proportion,
    )


def enumerate_standard_strategies() -> list[Strategy]:
    """The 15-strategy grid: {L1,L2,L3} x {E0,E1,E2,E3} plus {L1,L2,L3} E*."""
    strategies = []
    for l_name, threshold in STANDARD_LOCKDOWN_THRESHOLDS.items():
        for e_name, easing in STANDARD_EASING_FRACTIONS.items():
            strategies.append(
                Strategy(
                    id=f"{l_name}_{e_name}",
                    initial_target=Regime.COMPLETE_LOCKDOWN,
                    lockdown_threshold=threshold,
                    easing_fraction=easing,
                )
            )
    for l_name, threshold in STANDARD_LOCKDOWN_THRESHOLDS.items():
        strategies.append(
            Strategy(
                id=f"{l_name}_E*",
                initial_target=Regime.PARTIAL_LOCKDOWN,
                lockdown_threshold=threshold,
                easing_fraction=None,
                tightening_rise=None,
            )
        )
    for strategy in strategies:
        strategy.validate()
    return strategies
