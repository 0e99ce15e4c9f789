"""Scenario configuration: schema, validation, and builders.

A scenario is a human-editable YAML document bundling every data table the
engine needs: region/age structure, populations, calibration inputs,
regime contact rules, the strategy list, run configuration, and the three
attribute models.  Loading validates every invariant up front and reports
the offending field path; the loaded form round-trips through ``dump``
without loss.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .attributes import (
    AttributeModels,
    CancerDelayModel,
    LifeTable,
    PovertyModel,
)
from .ensemble import RunConfig, SimulationInputs
from .epi import (
    CalibrationInputs,
    calibrate_removal_rate,
    calibrate_transmission_probability,
    regime_contact_table,
    split_rates,
)
from .policy import Regime, Strategy, StrategyError

SCHEMA_VERSION = 1

REGIME_NAMES = {"partial": Regime.PARTIAL_LOCKDOWN, "complete": Regime.COMPLETE_LOCKDOWN}
CONTACT_OVERRIDE_KEYS = {"none": 0, "partial": 1, "complete": 2}

DEFAULT_SCENARIO_RESOURCE = "default_scenario.yaml"


class ScenarioError(ValueError):
    """Validation failure, carrying the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


def _require(mapping, key, path, kind=None):
    if not isinstance(mapping, dict):
        raise ScenarioError(path, "expected a mapping")
    if key not in mapping:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
    value = mapping[key]
    if kind is not None and not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ScenarioError(f"{path}.{key}" if path else key, f"expected {names}")
    return value


def _number(mapping, key, path, minimum=None, maximum=None, strict_min=False):
    value = _require(mapping, key, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}.{key}", "expected a number")
    value = float(value)
    field = f"{path}.{key}"
    if minimum is not None:
        if strict_min and value <= minimum:
            raise ScenarioError(field, f"must be > {minimum}")
        if not strict_min and value < minimum:
            raise ScenarioError(field, f"must be >= {minimum}")
    if maximum is not None and value > maximum:
        raise ScenarioError(field, f"must be <= {maximum}")
    return value


def _age_map(mapping, key, path, age_groups, minimum=None, maximum=None):
    table = _require(mapping, key, path, dict)
    field = f"{path}.{key}"
    for age in age_groups:
        if age not in table:
            raise ScenarioError(field, f"missing age group {age!r}")
    for age in table:
        if age not in age_groups:
            raise ScenarioError(f"{field}.{age}", "unknown age group")
    return {
        age: _number(table, age, field, minimum=minimum, maximum=maximum)
        for age in age_groups
    }


@dataclass(frozen=True)
class Scenario:
    """A validated scenario; ``data`` is the canonical nested document."""

    data: dict

    def __eq__(self, other) -> bool:
        return isinstance(other, Scenario) and self.data == other.data

    # -- identity ---------------------------------------------------------

    def digest(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @property
    def name(self) -> str:
        return self.data["name"]

    # -- structure --------------------------------------------------------

    @property
    def regions(self) -> tuple[str, ...]:
        return tuple(self.data["regions"])

    @property
    def age_groups(self) -> tuple[str, ...]:
        return tuple(self.data["age_groups"])

    def populations(self) -> np.ndarray:
        table = self.data["populations"]
        return np.array(
            [[table[region][age] for age in self.age_groups] for region in self.regions]
        )

    def age_population_weights(self) -> np.ndarray:
        return self.populations().sum(axis=0)

    # -- calibration ------------------------------------------------------

    def calibration_inputs(self) -> CalibrationInputs:
        cal = self.data["calibration"]
        return CalibrationInputs(
            ifr=np.array([cal["ifr"][a] for a in self.age_groups]),
            population_weights=self.age_population_weights(),
            baseline_contacts=np.array(
                [cal["baseline_contacts"][a] for a in self.age_groups]
            ),
            recovery_window=int(cal["recovery_window_days"]),
            residual=cal["residual_infected"],
            r0=cal["r0"],
        )

    def removal_rate(self) -> float:
        cal = self.data["calibration"]
        return calibrate_removal_rate(int(cal["recovery_window_days"]), cal["residual_infected"])

    def calibrated_p(self) -> float:
        return calibrate_transmission_probability(
            self.calibration_inputs(), self.removal_rate()
        )

    def contact_table(self) -> np.ndarray:
        contacts = self.data["contacts"]
        overrides = {}
        for name, row in contacts.get("overrides", {}).items():
            overrides[CONTACT_OVERRIDE_KEYS[name]] = np.array(
                [row[a] for a in self.age_groups]
            )
        baseline = np.array(
            [self.data["calibration"]["baseline_contacts"][a] for a in self.age_groups]
        )
        return regime_contact_table(
            baseline,
            partial_scale=contacts["partial_scale"],
            complete_contacts=contacts["complete_contacts"],
            overrides=overrides,
        )

    # -- simulation -------------------------------------------------------

    def build_inputs(self) -> SimulationInputs:
        rate = self.removal_rate()
        ifr = np.array(
            [self.data["calibration"]["ifr"][a] for a in self.age_groups]
        )
        gamma, lam = split_rates(ifr, rate)
        seeding = self.data["run"]["initial_infections"]
        per_region = seeding["per_region"]
        if isinstance(per_region, dict):
            seeds = np.array([per_region[region] for region in self.regions], dtype=float)
        else:
            seeds = np.full(len(self.regions), float(per_region))
        return SimulationInputs(
            regions=self.regions,
            age_groups=self.age_groups,
            populations=self.populations(),
            gamma=gamma,
            lam=lam,
            contacts=self.contact_table(),
            initial_infections=seeds,
            seed_age_index=self.age_groups.index(seeding["age_group"]),
        )

    def p_log_mean(self) -> float:
        median = self.data["transmission"].get("p_median")
        if median is None:
            median = self.calibrated_p()
        return math.log(median)

    def run_config(self, seed: int | None = None, n_runs: int | None = None) -> RunConfig:
        run = self.data["run"]
        return RunConfig(
            n_runs=int(n_runs if n_runs is not None else run["n_runs"]),
            horizon_weeks=int(run["horizon_weeks"]),
            seed=int(seed if seed is not None else run["default_seed"]),
            p_log_mean=self.p_log_mean(),
            p_log_sd=self.data["transmission"]["p_log_sd"],
        )

    # -- strategies -------------------------------------------------------

    def strategies(self) -> list[Strategy]:
        out = []
        for raw in self.data["strategies"]:
            out.append(
                Strategy(
                    id=raw["id"],
                    initial_target=REGIME_NAMES[raw["initial_target"]],
                    lockdown_threshold=float(raw["lockdown_threshold"]),
                    easing_fraction=raw.get("easing_fraction"),
                    tightening_rise=raw.get("tightening_rise"),
                )
            )
        return out

    # -- attributes -------------------------------------------------------

    def attribute_models(self) -> AttributeModels:
        attrs = self.data["attributes"]
        return AttributeModels(
            life_table=LifeTable(dict(attrs["life_table"])),
            cancer=CancerDelayModel(
                life_years_per_week=dict(attrs["cancer"]["life_years_per_week"]),
                partial_factor=attrs["cancer"]["partial_factor"],
            ),
            poverty=PovertyModel(
                total_poverty_years=attrs["poverty"]["total_poverty_years"],
                poverty_years_per_life_year=attrs["poverty"]["poverty_years_per_life_year"],
                age_shares=dict(attrs["poverty"]["age_shares"]),
                reference_lockdown_weeks=attrs["poverty"]["reference_lockdown_weeks"],
                partial_factor=attrs["poverty"]["partial_factor"],
            ),
            coarse_bands={k: list(v) for k, v in attrs["age_bands"].items()},
            under_45_age_groups=list(attrs["under_45_age_groups"]),
            under_45_share=dict(attrs["under_45_share"]),
        )


def validate_scenario_dict(data) -> dict:
    """Validate a raw document and return its canonical deep copy."""
    if not isinstance(data, dict):
        raise ScenarioError("$", "scenario document must be a mapping")
    version = _require(data, "schema_version", "", int)
    if version != SCHEMA_VERSION:
        raise ScenarioError(
            "schema_version", f"unsupported version {version} (expected {SCHEMA_VERSION})"
        )
    _require(data, "name", "", str)

    regions = _require(data, "regions", "", list)
    if not regions or len(set(regions)) != len(regions):
        raise ScenarioError("regions", "must be a nonempty list of unique names")
    age_groups = _require(data, "age_groups", "", list)
    if not age_groups or len(set(age_groups)) != len(age_groups):
        raise ScenarioError("age_groups", "must be a nonempty list of unique names")

    populations = _require(data, "populations", "", dict)
    for region in regions:
        if region not in populations:
            raise ScenarioError("populations", f"missing region {region!r}")
        _age_map(populations, region, "populations", age_groups, minimum=0.0)
    for region in populations:
        if region not in regions:
            raise ScenarioError(f"populations.{region}", "unknown region")

    cal = _require(data, "calibration", "", dict)
    _number(cal, "r0", "calibration", minimum=0.0, strict_min=True)
    window = _number(cal, "recovery_window_days", "calibration", minimum=1.0)
    if window != int(window):
        raise ScenarioError("calibration.recovery_window_days", "must be an integer")
    residual = _number(cal, "residual_infected", "calibration")
    if not 0.0 < residual < 1.0:
        raise ScenarioError("calibration.residual_infected", "must lie strictly in (0, 1)")
    ifr = _age_map(cal, "ifr", "calibration", age_groups, minimum=0.0)
    for age, value in ifr.items():
        if value >= 1.0:
            raise ScenarioError(f"calibration.ifr.{age}", "must be < 1")
    _age_map(cal, "baseline_contacts", "calibration", age_groups, minimum=0.0)

    contacts = _require(data, "contacts", "", dict)
    _number(contacts, "partial_scale", "contacts", minimum=0.0)
    _number(contacts, "complete_contacts", "contacts", minimum=0.0)
    for name in contacts.get("overrides", {}):
        if name not in CONTACT_OVERRIDE_KEYS:
            raise ScenarioError(f"contacts.overrides.{name}", "unknown regime key")
        _age_map(contacts["overrides"], name, "contacts.overrides", age_groups, minimum=0.0)

    transmission = _require(data, "transmission", "", dict)
    if transmission.get("p_median") is not None:
        median = _number(transmission, "p_median", "transmission")
        if not 0.0 < median <= 1.0:
            raise ScenarioError("transmission.p_median", "must lie in (0, 1]")
    _number(transmission, "p_log_sd", "transmission", minimum=0.0)

    run = _require(data, "run", "", dict)
    n_runs = _number(run, "n_runs", "run", minimum=1.0)
    if n_runs != int(n_runs):
        raise ScenarioError("run.n_runs", "must be an integer")
    horizon = _number(run, "horizon_weeks", "run", minimum=1.0)
    if horizon != int(horizon):
        raise ScenarioError("run.horizon_weeks", "must be an integer")
    if not isinstance(run.get("default_seed"), int) or isinstance(run.get("default_seed"), bool):
        raise ScenarioError("run.default_seed", "must be an integer")
    seeding = _require(run, "initial_infections", "run", dict)
    seed_age = _require(seeding, "age_group", "run.initial_infections", str)
    if seed_age not in age_groups:
        raise ScenarioError("run.initial_infections.age_group", f"unknown age group {seed_age!r}")
    per_region = _require(seeding, "per_region", "run.initial_infections")
    if isinstance(per_region, dict):
        for region in regions:
            if region not in per_region:
                raise ScenarioError(
                    "run.initial_infections.per_region", f"missing region {region!r}"
                )
            _number(per_region, region, "run.initial_infections.per_region", minimum=0.0)
    elif isinstance(per_region, bool) or not isinstance(per_region, (int, float)):
        raise ScenarioError("run.initial_infections.per_region", "expected a number or mapping")
    elif per_region < 0:
        raise ScenarioError("run.initial_infections.per_region", "must be >= 0")

    strategies = _require(data, "strategies", "", list)
    if not strategies:
        raise ScenarioError("strategies", "at least one strategy is required")
    seen = set()
    for index, raw in enumerate(strategies):
        path = f"strategies[{index}]"
        sid = _require(raw, "id", path, str)
        if sid in seen:
            raise ScenarioError(f"{path}.id", f"duplicate strategy id {sid!r}")
        seen.add(sid)
        target = _require(raw, "initial_target", path, str)
        if target not in REGIME_NAMES:
            raise ScenarioError(f"{path}.initial_target", "must be 'partial' or 'complete'")
        _number(raw, "lockdown_threshold", path, minimum=0.0, strict_min=True)
        easing = raw.get("easing_fraction")
        if easing is not None:
            if isinstance(easing, bool) or not isinstance(easing, (int, float)):
                raise ScenarioError(f"{path}.easing_fraction", "expected a number or null")
            if not 0.0 <= easing <= 1.0:
                raise ScenarioError(f"{path}.easing_fraction", "must lie in [0, 1]")
        rise = raw.get("tightening_rise")
        if rise is not None:
            if isinstance(rise, bool) or not isinstance(rise, (int, float)):
                raise ScenarioError(f"{path}.tightening_rise", "expected a number or null")
            if rise < 0:
                raise ScenarioError(f"{path}.tightening_rise", "must be >= 0")
        try:
            Strategy(
                id=sid,
                initial_target=REGIME_NAMES[target],
                lockdown_threshold=float(raw["lockdown_threshold"]),
                easing_fraction=easing,
                tightening_rise=rise,
            ).validate()
        except StrategyError as exc:
            raise ScenarioError(path, str(exc)) from exc

    attrs = _require(data, "attributes", "", dict)
    _age_map(attrs, "life_table", "attributes", age_groups, minimum=0.0)
    cancer = _require(attrs, "cancer", "attributes", dict)
    partial_factor = _number(cancer, "partial_factor", "attributes.cancer", minimum=0.0)
    if partial_factor > 1.0:
        raise ScenarioError("attributes.cancer.partial_factor", "must lie in [0, 1]")
    _age_map(cancer, "life_years_per_week", "attributes.cancer", age_groups, minimum=0.0)
    poverty = _require(attrs, "poverty", "attributes", dict)
    _number(poverty, "total_poverty_years", "attributes.poverty", minimum=0.0, strict_min=True)
    _number(
        poverty, "poverty_years_per_life_year", "attributes.poverty", minimum=0.0, strict_min=True
    )
    _number(
        poverty, "reference_lockdown_weeks", "attributes.poverty", minimum=0.0, strict_min=True
    )
    pf = _number(poverty, "partial_factor", "attributes.poverty", minimum=0.0)
    if pf > 1.0:
        raise ScenarioError("attributes.poverty.partial_factor", "must lie in [0, 1]")
    shares = _require(poverty, "age_shares", "attributes.poverty", dict)
    for band in shares:
        _number(shares, band, "attributes.poverty.age_shares", minimum=0.0)
    if abs(sum(shares.values()) - 1.0) > 1e-9:
        raise ScenarioError("attributes.poverty.age_shares", "must sum to 1")

    bands = _require(attrs, "age_bands", "attributes", dict)
    covered = []
    for band, members in bands.items():
        if band not in shares:
            raise ScenarioError(f"attributes.age_bands.{band}", "band has no poverty share")
        if not isinstance(members, list) or not members:
            raise ScenarioError(f"attributes.age_bands.{band}", "expected a nonempty list")
        for age in members:
            if age not in age_groups:
                raise ScenarioError(f"attributes.age_bands.{band}", f"unknown age group {age!r}")
        covered.extend(members)
    if sorted(covered) != sorted(age_groups):
        raise ScenarioError("attributes.age_bands", "bands must partition the age groups")

    under_ages = _require(attrs, "under_45_age_groups", "attributes", list)
    for age in under_ages:
        if age not in age_groups:
            raise ScenarioError("attributes.under_45_age_groups", f"unknown age group {age!r}")
    under_share = _require(attrs, "under_45_share", "attributes", dict)
    for band, value in under_share.items():
        if band not in bands:
            raise ScenarioError(f"attributes.under_45_share.{band}", "unknown band")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 <= value <= 1:
            raise ScenarioError(f"attributes.under_45_share.{band}", "must lie in [0, 1]")

    return copy.deepcopy(data)


def scenario_from_dict(data) -> Scenario:
    scenario = Scenario(data=validate_scenario_dict(data))
    # Builders double as deep validation: any surviving inconsistency in the
    # numeric tables surfaces here with its own message.
    inputs = scenario.build_inputs()
    seed_pop = inputs.populations[:, inputs.seed_age_index]
    if np.any(inputs.initial_infections > seed_pop):
        raise ScenarioError(
            "run.initial_infections.per_region",
            "initial infections exceed the seeded stratum population",
        )
    scenario.attribute_models().validate(scenario.age_groups)
    scenario.run_config()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Load and fully validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("$", f"not valid YAML: {exc}") from exc
    return scenario_from_dict(raw)


def loads_scenario(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("$", f"not valid YAML: {exc}") from exc
    return scenario_from_dict(raw)


def dump_scenario(scenario: Scenario, path: str | Path | None = None) -> str:
    """Serialise back to YAML; floats keep their shortest round-trip form."""
    text = yaml.safe_dump(scenario.data, sort_keys=False, allow_unicode=True)
    if path is not None:
        Path(path).write_text(text)
    return text


def default_scenario() -> Scenario:
    """The bundled baseline scenario (the 15-strategy national example)."""
    with resources.files("epidecide.data").joinpath(DEFAULT_SCENARIO_RESOURCE).open() as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def default_scenario_text() -> str:
    return resources.files("epidecide.data").joinpath(DEFAULT_SCENARIO_RESOURCE).read_text()
