"""Discrete-time stratified SIRD disease dynamics and rate calibration.

The population is split into regions and age groups.  Within a stratum
(region, age) the compartments are Susceptible, Infectious, Recovered and
Dead, updated once per simulated day:

    dS = -beta_a * (I_region / N_region) * S
    dI = -dS - (gamma_a + lambda_a) * I
    dR = gamma_a * I
    dD = lambda_a * I

with beta_a = p * contacts_a(regime).  Ages mix uniformly within a region;
regions do not mix.  Compartments are real-valued and every function here
is pure, so trajectories can be evaluated in parallel batches: all state
arrays have shape (..., n_regions, n_ages) and broadcast over leading axes.

Calibration follows the geometric-lifetime construction: an infected
individual leaves the I compartment each day with probability
gamma_a + lambda_a, chosen so that only a small residual is still infected
after a fixed recovery window, and the death share of the exit rate equals
the age-group infection fatality ratio.  The per-contact transmission
probability p is backed out of a population-weighted R0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Regime indices used throughout: 0 = no lockdown, 1 = partial, 2 = complete.
N_REGIMES = 3

DEFAULT_PARTIAL_CONTACT_SCALE = 0.5
DEFAULT_COMPLETE_CONTACTS = 3.0


class CalibrationError(ValueError):
    """Raised when calibration inputs are outside their valid domain."""


class StateInvariantError(ValueError):
    """Raised when a compartment state violates a structural invariant."""


@dataclass(frozen=True)
class CompartmentState:
    """SIRD compartment counts per (region, age) cell at day index ``t``.

    Arrays share a common shape ``(..., n_regions, n_ages)``; leading axes
    hold independent trajectories (e.g. Monte Carlo runs).
    """

    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    d: np.ndarray
    t: int

    def total(self) -> np.ndarray:
        return self.s + self.i + self.r + self.d


@dataclass(frozen=True)
class EpiRates:
    """Calibrated daily rates.

    gamma, lam    -- per-age recovery / death rates, shape (n_ages,)
    p             -- per-contact transmission probability; scalar or an
                     array broadcastable over leading state axes
    contacts      -- per-regime per-age daily contact counts, shape
                     (N_REGIMES, n_ages)
    """

    gamma: np.ndarray
    lam: np.ndarray
    p: float | np.ndarray
    contacts: np.ndarray


@dataclass(frozen=True)
class CalibrationInputs:
    """Inputs for rate calibration (all per age group unless noted)."""

    ifr: np.ndarray
    population_weights: np.ndarray
    baseline_contacts: np.ndarray
    recovery_window: int = 28
    residual: float = 0.05
    r0: float = 2.79

    def validate(self) -> None:
        ifr = np.asarray(self.ifr, dtype=float)
        if np.any(ifr < 0) or np.any(ifr >= 1):
            raise CalibrationError("ifr values must lie in [0, 1)")
        if self.recovery_window < 1:
            raise CalibrationError("recovery_window must be at least 1 day")
        if not 0 < self.residual < 1:
            raise CalibrationError("residual must lie strictly in (0, 1)")
        if self.r0 <= 0:
            raise CalibrationError("r0 must be positive")
        if np.any(np.asarray(self.baseline_contacts) < 0):
            raise CalibrationError("baseline contacts must be nonnegative")
        if np.any(np.asarray(self.population_weights) < 0):
            raise CalibrationError("population weights must be nonnegative")


def calibrate_removal_rate(recovery_window: int, residual: float) -> float:
    """Daily probability of leaving the infectious compartment.

    Solves 1 - (1 - x)**window = 1 - residual, i.e. the probability of
    having recovered or died within the window equals 1 - residual.  The
    result is gamma_a + lambda_a, identical for every age group.
    """
    if recovery_window < 1:
        raise CalibrationError("recovery_window must be at least 1 day")
    if not 0 < residual < 1:
        raise CalibrationError("residual must lie strictly in (0, 1)")
    return 1.0 - residual ** (1.0 / recovery_window)


def split_rates(ifr, total_rate):
    """Split the total exit rate into (recovery, death) components.

    The probability of eventually dying once infected is the geometric sum
    sum_t lambda * (1 - gamma - lambda)**t = lambda / (gamma + lambda), so
    lambda_a = ifr_a * total_rate and gamma_a is the remainder.  Accepts
    scalars or arrays.
    """
    ifr_arr = np.asarray(ifr, dtype=float)
    if np.any(ifr_arr < 0) or np.any(ifr_arr >= 1):
        raise CalibrationError("ifr must lie in [0, 1)")
    if not 0 < total_rate <= 1:
        raise CalibrationError("total_rate must lie in (0, 1]")
    lam = ifr_arr * total_rate
    gamma = total_rate - lam
    if ifr_arr.ndim == 0:
        return float(gamma), float(lam)
    return gamma, lam


def calibrate_transmission_probability(inputs: CalibrationInputs, total_rate) -> float:
    """Per-contact transmission probability consistent with R0.

    R0 is the population-weighted average of the expected number of
    infections caused by one infectious individual,
    c_a * p * sum_t (1 - gamma_a - lambda_a)**t, with the infinite sum in
    closed form 1 / (gamma_a + lambda_a).
    """
    inputs.validate()
    n = np.asarray(inputs.population_weights, dtype=float)
    c = np.asarray(inputs.baseline_contacts, dtype=float)
    rate = np.broadcast_to(np.asarray(total_rate, dtype=float), n.shape)
    if not np.all((rate > 0) & (rate <= 1)):
        raise CalibrationError("total_rate must lie in (0, 1]")
    denominator = float(np.sum(n * c / rate))
    if denominator == 0.0:
        raise CalibrationError("population-weighted contact total is zero")
    return inputs.r0 * float(np.sum(n)) / denominator


def regime_contact_table(
    baseline_contacts,
    partial_scale: float = DEFAULT_PARTIAL_CONTACT_SCALE,
    complete_contacts: float = DEFAULT_COMPLETE_CONTACTS,
    overrides: dict[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Per-regime per-age contact counts, shape (N_REGIMES, n_ages).

    Defaults: no lockdown keeps the baseline, partial lockdown halves it,
    complete lockdown pins every age group at 3 contacts per day.  Any
    regime row can be replaced via ``overrides``.
    """
    baseline = np.asarray(baseline_contacts, dtype=float)
    if np.any(baseline < 0):
        raise CalibrationError("baseline contacts must be nonnegative")
    table = np.stack(
        [
            baseline,
            baseline * partial_scale,
            np.full_like(baseline, complete_contacts),
        ]
    )
    if overrides:
        for regime, row in overrides.items():
            table[regime] = np.asarray(row, dtype=float)
    if np.any(table < 0):
        raise CalibrationError("contact overrides must be nonnegative")
    return table


def regime_contacts(baseline_contacts, regime: int, **kwargs) -> np.ndarray:
    """Per-age contact counts in force under one regime."""
    return regime_contact_table(baseline_contacts, **kwargs)[regime]


def step(
    state: CompartmentState,
    rates: EpiRates,
    regime,
    region_totals: np.ndarray,
) -> CompartmentState:
    """Advance the SIRD state by one day under the given regime.

    ``regime`` is either a single regime index or an integer array over
    leading state axes (one regime per trajectory).  ``region_totals`` are
    the fixed stratum populations summed over ages, shape (n_regions,).
    If an extreme force of infection would overshoot S in a single step it
    is truncated so S bottoms out at zero and conservation is preserved.
    """
    contacts = rates.contacts[np.asarray(regime)]
    beta = np.asarray(rates.p)[..., None, None] * np.expand_dims(contacts, -2)
    i_region = np.sum(state.i, axis=-1, keepdims=True)
    force = beta * (i_region / region_totals[:, None])
    new_infections = np.minimum(force, 1.0) * state.s
    recoveries = rates.gamma * state.i
    deaths = rates.lam * state.i
    return CompartmentState(
        s=state.s - new_infections,
        i=state.i + new_infections - recoveries - deaths,
        r=state.r + recoveries,
        d=state.d + deaths,
        t=state.t + 1,
    )


def validate_state(
    state: CompartmentState,
    populations: np.ndarray,
    rtol: float = 1e-9,
) -> None:
    """Check nonnegativity and per-stratum conservation against N_{i,a}."""
    for name in ("s", "i", "r", "d"):
        if np.any(getattr(state, name) < 0):
            raise StateInvariantError(f"compartment {name!r} has negative entries")
    drift = np.abs(state.total() - populations)
    if np.any(drift > rtol * populations):
        worst = float(np.max(drift / populations))
        raise StateInvariantError(
            f"conservation violated: max relative drift {worst:.3e} exceeds {rtol:.1e}"
        )
