"""Run persistence and tabular export.

A stored run is immutable and content-addressed: its id digests the full
scenario snapshot, the seed, the run count and the engine version, so
re-submitting identical work lands on the same directory.  Layout:

    runs/<run-id>/meta.json        seed, digests, timestamps
    runs/<run-id>/snapshot.yaml    the scenario exactly as executed
    runs/<run-id>/ensemble.json    the full EnsembleResult
    runs/<run-id>/attributes.json  cached attribute tables (full/under45/over45)
    runs/<run-id>/exports/         delimited tables and figures

Numbers serialise through JSON's shortest round-trip decimal form, so a
stored run reloads bit-identically and re-executing the snapshot
reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import ENGINE_VERSION
from .attributes import AttributeVector, attribute_table
from .decision import rank, validate_weights
from .ensemble import EnsembleResult, RunConfig, StrategyOutcome
from .policy import Regime, Strategy
from .scenario import Scenario, dump_scenario, loads_scenario

AGE_FILTERS = (None, "under45", "over45")

EXPORT_COLUMNS = [
    "strategy",
    "covid_life_years",
    "cancer_life_years",
    "poverty_life_years",
    "weeks_no_lockdown",
    "weeks_partial_lockdown",
    "weeks_complete_lockdown",
    "score",
]


class StoreError(KeyError):
    """Raised for unknown run or scenario ids."""


def default_partition(strategies) -> tuple[list[str], list[str]]:
    """Lockdown vs non-lockdown ids; the partial-only family is non-lockdown."""
    lockdown = [s.id for s in strategies if not s.partial_only]
    non_lockdown = [s.id for s in strategies if s.partial_only]
    return lockdown, non_lockdown


def _strategy_to_dict(strategy: Strategy) -> dict:
    return {
        "id": strategy.id,
        "initial_target": int(strategy.initial_target),
        "lockdown_threshold": strategy.lockdown_threshold,
        "easing_fraction": strategy.easing_fraction,
        "tightening_rise": strategy.tightening_rise,
    }


def _strategy_from_dict(raw: dict) -> Strategy:
    return Strategy(
        id=raw["id"],
        initial_target=Regime(raw["initial_target"]),
        lockdown_threshold=raw["lockdown_threshold"],
        easing_fraction=raw["easing_fraction"],
        tightening_rise=raw["tightening_rise"],
    )


def ensemble_to_dict(result: EnsembleResult) -> dict:
    return {
        "engine_version": result.engine_version,
        "scenario_digest": result.scenario_digest,
        "regions": list(result.regions),
        "age_groups": list(result.age_groups),
        "config": {
            "n_runs": result.config.n_runs,
            "horizon_weeks": result.config.horizon_weeks,
            "seed": result.config.seed,
            "p_log_mean": result.config.p_log_mean,
            "p_log_sd": result.config.p_log_sd,
        },
        "p_values": result.p_values.tolist(),
        "outcomes": [
            {
                "strategy": _strategy_to_dict(o.strategy),
                "expected_deaths_by_age": o.expected_deaths_by_age.tolist(),
                "expected_weeks_in_regime": o.expected_weeks_in_regime.tolist(),
                "per_run_deaths_by_age": o.per_run_deaths_by_age.tolist(),
                "per_run_weeks_in_regime": o.per_run_weeks_in_regime.tolist(),
                "example_daily_deaths": o.example_daily_deaths.tolist(),
                "example_regimes": o.example_regimes.tolist(),
                "mean_daily_deaths": o.mean_daily_deaths.tolist(),
            }
            for o in result.outcomes
        ],
    }


def ensemble_from_dict(raw: dict) -> EnsembleResult:
    outcomes = tuple(
        StrategyOutcome(
            strategy=_strategy_from_dict(o["strategy"]),
            expected_deaths_by_age=np.array(o["expected_deaths_by_age"]),
            expected_weeks_in_regime=np.array(o["expected_weeks_in_regime"]),
            per_run_deaths_by_age=np.array(o["per_run_deaths_by_age"]),
            per_run_weeks_in_regime=np.array(o["per_run_weeks_in_regime"]),
            example_daily_deaths=np.array(o["example_daily_deaths"]),
            example_regimes=np.array(o["example_regimes"], dtype=np.int64),
            mean_daily_deaths=np.array(o["mean_daily_deaths"]),
        )
        for o in raw["outcomes"]
    )
    config = RunConfig(**raw["config"])
    return EnsembleResult(
        outcomes=outcomes,
        p_values=np.array(raw["p_values"]),
        config=config,
        regions=tuple(raw["regions"]),
        age_groups=tuple(raw["age_groups"]),
        engine_version=raw["engine_version"],
        scenario_digest=raw["scenario_digest"],
    )


def run_id_for(scenario: Scenario, seed: int, n_runs: int) -> str:
    payload = json.dumps(
        {
            "scenario": scenario.data,
            "seed": seed,
            "n_runs": n_runs,
            "engine_version": ENGINE_VERSION,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class StoredRun:
    run_id: str
    scenario: Scenario
    result: EnsembleResult
    attributes: dict[str, dict[str, AttributeVector]]  # filter key -> table
    created_at: str

    @property
    def strategies(self) -> list[Strategy]:
        return [o.strategy for o in self.result.outcomes]

    def attribute_vectors(self, age_filter: str | None = None) -> dict[str, AttributeVector]:
        key = age_filter or "full"
        if key not in self.attributes:
            raise StoreError(f"unknown age filter {age_filter!r}")
        return self.attributes[key]


def compute_attribute_tables(
    scenario: Scenario, result: EnsembleResult
) -> dict[str, dict[str, AttributeVector]]:
    models = scenario.attribute_models()
    return {
        (age_filter or "full"): attribute_table(result, models, age_filter=age_filter)
        for age_filter in AGE_FILTERS
    }


class ResultStore:
    """Append-only directory store for completed runs and scenarios."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)
        (self.root / "scenarios").mkdir(parents=True, exist_ok=True)

    # -- scenarios --------------------------------------------------------

    def save_scenario(self, scenario: Scenario) -> str:
        scenario_id = scenario.digest()
        path = self.root / "scenarios" / f"{scenario_id}.yaml"
        if not path.exists():
            dump_scenario(scenario, path)
        return scenario_id

    def has_scenario(self, scenario_id: str) -> bool:
        return (self.root / "scenarios" / f"{scenario_id}.yaml").exists()

    def load_scenario(self, scenario_id: str) -> Scenario:
        path = self.root / "scenarios" / f"{scenario_id}.yaml"
        if not path.exists():
            raise StoreError(f"unknown scenario id {scenario_id!r}")
        return loads_scenario(path.read_text())

    def list_scenarios(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "scenarios").glob("*.yaml"))

    # -- runs ---------------------------------------------------------------

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    def has_run(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "meta.json").exists()

    def list_runs(self) -> list[str]:
        return sorted(
            p.parent.name for p in (self.root / "runs").glob("*/meta.json")
        )

    def save_run(self, scenario: Scenario, result: EnsembleResult) -> StoredRun:
        run_id = run_id_for(scenario, result.config.seed, result.config.n_runs)
        directory = self.run_dir(run_id)
        attributes = compute_attribute_tables(scenario, result)
        if self.has_run(run_id):
            return self.load_run(run_id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "exports").mkdir(exist_ok=True)
        created_at = datetime.now(timezone.utc).isoformat()
        dump_scenario(scenario, directory / "snapshot.yaml")
        (directory / "ensemble.json").write_text(json.dumps(ensemble_to_dict(result)))
        (directory / "attributes.json").write_text(
            json.dumps(
                {
                    key: {sid: vec.as_array().tolist() for sid, vec in table.items()}
                    for key, table in attributes.items()
                }
            )
        )
        (directory / "meta.json").write_text(
            json.dumps(
                {
                    "run_id": run_id,
                    "scenario_digest": scenario.digest(),
                    "seed": result.config.seed,
                    "n_runs": result.config.n_runs,
                    "engine_version": result.engine_version,
                    "created_at": created_at,
                },
                indent=2,
            )
        )
        return StoredRun(
            run_id=run_id,
            scenario=scenario,
            result=result,
            attributes=attributes,
            created_at=created_at,
        )

    def load_run(self, run_id: str) -> StoredRun:
        directory = self.run_dir(run_id)
        if not self.has_run(run_id):
            raise StoreError(f"unknown run id {run_id!r}")
        meta = json.loads((directory / "meta.json").read_text())
        scenario = loads_scenario((directory / "snapshot.yaml").read_text())
        result = ensemble_from_dict(json.loads((directory / "ensemble.json").read_text()))
        raw_attributes = json.loads((directory / "attributes.json").read_text())
        attributes = {
            key: {sid: AttributeVector(*values) for sid, values in table.items()}
            for key, table in raw_attributes.items()
        }
        return StoredRun(
            run_id=run_id,
            scenario=scenario,
            result=result,
            attributes=attributes,
            created_at=meta["created_at"],
        )


# -- exports ----------------------------------------------------------------


def export_rows(run: StoredRun, weights, age_filter: str | None = None) -> list[dict]:
    """Per-strategy export rows in ranking order (best score first)."""
    validate_weights(weights)
    table = run.attribute_vectors(age_filter)
    ranked = rank(weights, table)
    weeks = {
        o.strategy.id: o.expected_weeks_in_regime for o in run.result.outcomes
    }
    rows = []
    for scored in ranked:
        w = weeks[scored.strategy_id]
        rows.append(
            {
                "strategy": scored.strategy_id,
                "covid_life_years": scored.attributes.covid,
                "cancer_life_years": scored.attributes.cancer,
                "poverty_life_years": scored.attributes.poverty,
                "weeks_no_lockdown": float(w[0]),
                "weeks_partial_lockdown": float(w[1]),
                "weeks_complete_lockdown": float(w[2]),
                "score": scored.score,
            }
        )
    return rows


def write_export(
    run: StoredRun,
    weights,
    path: str | Path,
    age_filter: str | None = None,
) -> Path:
    """Write the delimited results table; floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = export_rows(run, weights, age_filter=age_filter)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXPORT_COLUMNS)
        for row in rows:
            writer.writerow(
                [row["strategy"]] + [repr(row[c]) for c in EXPORT_COLUMNS[1:]]
            )
    return path


def read_export(path: str | Path) -> list[dict]:
    """Reload a delimited export, parsing numeric columns back to floats."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {"strategy": raw["strategy"]}
            for column in EXPORT_COLUMNS[1:]:
                row[column] = float(raw[column])
            rows.append(row)
    return rows
