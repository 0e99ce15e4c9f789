"""Conversion of simulation outcomes into life-year-loss attributes.

Three attributes, all measured in expected life-years lost so they share a
common scale:

    covid    -- deaths by age group weighted by remaining life expectancy
    cancer   -- diagnosis delays accrued per week of suspended referral
                pathways, linear in lockdown duration
    poverty  -- additional poverty-years converted to life-years at a
                fixed exchange rate, accrued per week of lockdown

Partial lockdown contributes a configurable fraction (default one half) of
a complete-lockdown week for the cancer and poverty attributes.  Every
function here is linear in its week/death inputs, which is what lets
ensemble expectations be converted exactly: attribute(E[outcome]) equals
E[attribute(outcome)].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import EnsembleResult
from .policy import Regime

AGE_SHARE_TOLERANCE = 1e-9


class AttributeModelError(ValueError):
    """Raised for attribute-model inputs outside their valid domain."""


@dataclass(frozen=True)
class LifeTable:
    """Expected remaining life-years per age group at death."""

    expected_remaining_years: dict[str, float]

    def validate(self, age_groups: list[str] | tuple[str, ...]) -> None:
        for age in age_groups:
            if age not in self.expected_remaining_years:
                raise AttributeModelError(f"life table is missing age group {age!r}")
        values = [self.expected_remaining_years[a] for a in age_groups]
        if any(v < 0 for v in values):
            raise AttributeModelError("life table values must be nonnegative")

    def as_array(self, age_groups) -> np.ndarray:
        return np.array([self.expected_remaining_years[a] for a in age_groups])


@dataclass(frozen=True)
class CancerDelayModel:
    """Linear life-year losses per week of suspended cancer diagnosis."""

    life_years_per_week: dict[str, float]  # per age group, full suspension
    partial_factor: float = 0.5

    def validate(self, age_groups) -> None:
        for age in age_groups:
            if age not in self.life_years_per_week:
                raise AttributeModelError(f"cancer model is missing age group {age!r}")
        if any(v < 0 for v in self.life_years_per_week.values()):
            raise AttributeModelError("cancer slopes must be nonnegative")
        if not 0.0 <= self.partial_factor <= 1.0:
            raise AttributeModelError("cancer partial_factor must lie in [0, 1]")

    def as_array(self, age_groups) -> np.ndarray:
        return np.array([self.life_years_per_week[a] for a in age_groups])


@dataclass(frozen=True)
class PovertyModel:
    """Lockdown-induced poverty converted to life-years.

    ``total_poverty_years`` person-years accrue over
    ``reference_lockdown_weeks`` weeks of complete lockdown and are divided
    by ``poverty_years_per_life_year`` to land on the common scale.
    ``age_shares`` splits the total across coarse bands.
    """

    total_poverty_years: float = 4.37e6
    poverty_years_per_life_year: float = 8.8
    age_shares: dict[str, float] = field(
        default_factory=lambda: {
            "children": 1.41 / 4.37,
            "working-age": 2.54 / 4.37,
            "pension-age": 0.42 / 4.37,
        }
    )
    reference_lockdown_weeks: float = 10.0
    partial_factor: float = 0.5

    def validate(self) -> None:
        if self.total_poverty_years <= 0:
            raise AttributeModelError("total_poverty_years must be positive")
        if self.poverty_years_per_life_year <= 0:
            raise AttributeModelError("poverty_years_per_life_year must be positive")
        if self.reference_lockdown_weeks <= 0:
            raise AttributeModelError("reference_lockdown_weeks must be positive")
        if not 0.0 <= self.partial_factor <= 1.0:
            raise AttributeModelError("poverty partial_factor must lie in [0, 1]")
        if any(v < 0 for v in self.age_shares.values()):
            raise AttributeModelError("age shares must be nonnegative")
        total = sum(self.age_shares.values())
        if abs(total - 1.0) > AGE_SHARE_TOLERANCE:
            raise AttributeModelError(
                f"age shares must sum to 1 (got {total!r})"
            )


@dataclass(frozen=True)
class AttributeVector:
    """Expected life-years lost per attribute for one strategy."""

    covid: float
    cancer: float
    poverty: float

    def as_array(self) -> np.ndarray:
        return np.array([self.covid, self.cancer, self.poverty])

    @property
    def total(self) -> float:
        return self.covid + self.cancer + self.poverty


def covid_life_years(deaths_by_age, life_table: LifeTable, age_groups) -> float:
    """Deaths per age group weighted by remaining life expectancy."""
    deaths = np.asarray(deaths_by_age, dtype=float)
    life_table.validate(age_groups)
    return float(np.dot(deaths, life_table.as_array(age_groups)))


def cancer_life_years(
    weeks_complete: float,
    weeks_partial: float,
    model: CancerDelayModel,
    age_groups,
    age_indices=None,
) -> float:
    """Life-years lost to delayed diagnosis over the simulated lockdowns.

    ``age_indices`` restricts the sum to a subset of age groups.
    """
    if weeks_complete < 0 or weeks_partial < 0:
        raise AttributeModelError("week counts must be nonnegative")
    model.validate(age_groups)
    slopes = model.as_array(age_groups)
    if age_indices is not None:
        slopes = slopes[list(age_indices)]
    effective_weeks = weeks_complete + model.partial_factor * weeks_partial
    return float(slopes.sum() * effective_weeks)


def poverty_life_years(
    weeks_complete: float,
    weeks_partial: float,
    model: PovertyModel,
    age_filter: str | None = None,
) -> float:
    """Life-years lost to lockdown-induced poverty.

    At the reference duration of complete lockdown the unfiltered output
    reproduces the full converted total; ``age_filter`` selects one coarse
    band's share.
    """
    if weeks_complete < 0 or weeks_partial < 0:
        raise AttributeModelError("week counts must be nonnegative")
    model.validate()
    if age_filter is None:
        share = 1.0
    else:
        if age_filter not in model.age_shares:
            raise AttributeModelError(f"unknown age band {age_filter!r}")
        share = model.age_shares[age_filter]
    base = model.total_poverty_years / model.poverty_years_per_life_year
    effective_weeks = weeks_complete + model.partial_factor * weeks_partial
    return base * share * effective_weeks / model.reference_lockdown_weeks


def split_age_band(value: float, fractions: dict[str, float]) -> dict[str, float]:
    """Redistribute a quantity from one age band onto target bands.

    ``fractions`` maps target band -> proportion and must sum to 1, so the
    split conserves the total exactly.
    """
    total = sum(fractions.values())
    if abs(total - 1.0) > AGE_SHARE_TOLERANCE:
        raise AttributeModelError(f"band fractions must sum to 1 (got {total!r})")
    if any(f < 0 for f in fractions.values()):
        raise AttributeModelError("band fractions must be nonnegative")
    return {band: value * fraction for band, fraction in fractions.items()}


@dataclass(frozen=True)
class AttributeModels:
    """The three attribute models plus the age-band bookkeeping.

    ``coarse_bands`` maps poverty bands to fine age groups;
    ``under_45_share`` gives, per coarse band, the proportion that falls
    under 45 (used for the age-restricted analysis).
    """

    life_table: LifeTable
    cancer: CancerDelayModel
    poverty: PovertyModel
    coarse_bands: dict[str, list[str]]
    under_45_age_groups: list[str]
    under_45_share: dict[str, float]

    def validate(self, age_groups) -> None:
        self.life_table.validate(age_groups)
        self.cancer.validate(age_groups)
        self.poverty.validate()
        for band, members in self.coarse_bands.items():
            if band not in self.poverty.age_shares:
                raise AttributeModelError(f"band {band!r} has no poverty share")
            for age in members:
                if age not in age_groups:
                    raise AttributeModelError(
                        f"band {band!r} references unknown age group {age!r}"
                    )
        for age in self.under_45_age_groups:
            if age not in age_groups:
                raise AttributeModelError(f"unknown under-45 age group {age!r}")
        for band in self.under_45_share:
            if band not in self.coarse_bands:
                raise AttributeModelError(
                    f"under-45 share references unknown band {band!r}"
                )


def _age_indices(age_groups, selected) -> list[int]:
    return [i for i, age in enumerate(age_groups) if age in selected]


def strategy_attributes(
    deaths_by_age,
    weeks_in_regime,
    models: AttributeModels,
    age_groups,
    age_filter: str | None = None,
) -> AttributeVector:
    """Attribute vector for one strategy outcome.

    ``age_filter`` of "under45"/"over45" restricts deaths and cancer slopes
    to the matching fine age groups and takes the corresponding share of
    the poverty total (splitting coarse bands proportionally).
    """
    deaths = np.asarray(deaths_by_age, dtype=float)
    weeks_complete = float(weeks_in_regime[int(Regime.COMPLETE_LOCKDOWN)])
    weeks_partial = float(weeks_in_regime[int(Regime.PARTIAL_LOCKDOWN)])

    if age_filter is None:
        covid = covid_life_years(deaths, models.life_table, age_groups)
        cancer = cancer_life_years(
            weeks_complete, weeks_partial, models.cancer, age_groups
        )
        poverty = poverty_life_years(weeks_complete, weeks_partial, models.poverty)
        return AttributeVector(covid=covid, cancer=cancer, poverty=poverty)

    if age_filter not in ("under45", "over45"):
        raise AttributeModelError(f"unknown age filter {age_filter!r}")
    under = set(models.under_45_age_groups)
    selected = under if age_filter == "under45" else set(age_groups) - under
    indices = _age_indices(age_groups, selected)

    life_years = models.life_table.as_array(age_groups)
    covid = float(np.dot(deaths[indices], life_years[indices]))
    cancer = cancer_life_years(
        weeks_complete, weeks_partial, models.cancer, age_groups, age_indices=indices
    )
    poverty = 0.0
    for band in models.coarse_bands:
        split = split_age_band(
            poverty_life_years(weeks_complete, weeks_partial, models.poverty, band),
            {
                "under45": models.under_45_share.get(band, 0.0),
                "over45": 1.0 - models.under_45_share.get(band, 0.0),
            },
        )
        poverty += split[age_filter]
    return AttributeVector(covid=covid, cancer=cancer, poverty=poverty)


def attribute_table(
    result: EnsembleResult,
    models: AttributeModels,
    age_filter: str | None = None,
) -> dict[str, AttributeVector]:
    """Per-strategy attribute vectors from ensemble expectations."""
    models.validate(result.age_groups)
    return {
        outcome.strategy.id: strategy_attributes(
            outcome.expected_deaths_by_age,
            outcome.expected_weeks_in_regime,
            models,
            result.age_groups,
            age_filter=age_filter,
        )
        for outcome in result.outcomes
    }
