import copy

import pytest

from epidecide.scenario import Scenario, scenario_from_dict

# Two regions, three age groups, aggressive rates: small enough that a full
# ensemble runs in milliseconds, epidemic enough that thresholds trigger.
TOY_SCENARIO = {
    "schema_version": 1,
    "name": "toy",
    "description": "two-region toy instance for tests",
    "regions": ["East", "West"],
    "age_groups": ["young", "mid", "old"],
    "populations": {
        "East": {"young": 40000.0, "mid": 50000.0, "old": 10000.0},
        "West": {"young": 20000.0, "mid": 25000.0, "old": 5000.0},
    },
    "calibration": {
        "r0": 2.79,
        "recovery_window_days": 28,
        "residual_infected": 0.05,
        "ifr": {"young": 0.0001, "mid": 0.005, "old": 0.06},
        "baseline_contacts": {"young": 14.0, "mid": 11.0, "old": 6.0},
    },
    "contacts": {"partial_scale": 0.5, "complete_contacts": 3.0, "overrides": {}},
    "transmission": {"p_median": 0.025, "p_log_sd": 0.1},
    "run": {
        "n_runs": 8,
        "horizon_weeks": 12,
        "default_seed": 7,
        "initial_infections": {"age_group": "mid", "per_region": 5.0},
    },
    "strategies": [
        {
            "id": "A_E1",
            "initial_target": "complete",
            "lockdown_threshold": 5.0,
            "easing_fraction": 0.12,
            "tightening_rise": 0.05,
        },
        {
            "id": "A_E0",
            "initial_target": "complete",
            "lockdown_threshold": 5.0,
            "easing_fraction": 0.0,
            "tightening_rise": 0.05,
        },
        {
            "id": "A_E*",
            "initial_target": "partial",
            "lockdown_threshold": 5.0,
            "easing_fraction": None,
            "tightening_rise": None,
        },
    ],
    "attributes": {
        "life_table": {"young": 60.0, "mid": 30.0, "old": 8.0},
        "cancer": {
            "partial_factor": 0.5,
            "life_years_per_week": {"young": 10.0, "mid": 60.0, "old": 30.0},
        },
        "poverty": {
            "total_poverty_years": 88000.0,
            "poverty_years_per_life_year": 8.8,
            "age_shares": {
                "children": 0.25,
                "working-age": 0.6,
                "pension-age": 0.15,
            },
            "reference_lockdown_weeks": 10.0,
            "partial_factor": 0.5,
        },
        "age_bands": {
            "children": ["young"],
            "working-age": ["mid"],
            "pension-age": ["old"],
        },
        "under_45_age_groups": ["young", "mid"],
        "under_45_share": {"children": 1.0, "working-age": 0.6, "pension-age": 0.0},
    },
    "sources": {},
}


def toy_scenario_dict() -> dict:
    return copy.deepcopy(TOY_SCENARIO)


@pytest.fixture
def toy_dict() -> dict:
    return toy_scenario_dict()


@pytest.fixture
def toy_scenario() -> Scenario:
    return scenario_from_dict(toy_scenario_dict())
