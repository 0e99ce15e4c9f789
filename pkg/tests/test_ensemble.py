import math

import numpy as np
import pytest

from epidecide.ensemble import (
    EnsembleError,
    RunConfig,
    SimulationInputs,
    initial_state,
    run_ensemble,
    sample_p,
    sample_p_values,
    simulate_strategy,
)
from epidecide.epi import validate_state
from epidecide.policy import (
    Observation,
    PolicyState,
    Regime,
    Strategy,
    advance,
    enumerate_standard_strategies,
)


def toy_inputs(scenario):
    return scenario.build_inputs()


class TestSampleP:
    def test_degenerate_sd_is_exact(self):
        config = RunConfig(n_runs=5, seed=1, p_log_mean=math.log(0.023), p_log_sd=0.0)
        values = sample_p_values(config)
        assert np.all(values == math.exp(math.log(0.023)))

    def test_log_moments(self):
        rng = np.random.default_rng(123)
        draws = np.array(
            [sample_p(rng, math.log(0.023), 0.1) for _ in range(100_000)]
        )
        log_draws = np.log(draws)
        assert log_draws.mean() == pytest.approx(
            math.log(0.023), abs=3 * 0.1 / math.sqrt(100_000)
        )
        assert log_draws.std() == pytest.approx(0.1, rel=0.05)

    def test_substreams_deterministic_and_prefix_stable(self):
        a = sample_p_values(RunConfig(n_runs=16, seed=99))
        b = sample_p_values(RunConfig(n_runs=16, seed=99))
        np.testing.assert_array_equal(a, b)
        shorter = sample_p_values(RunConfig(n_runs=4, seed=99))
        np.testing.assert_array_equal(a[:4], shorter)
        different = sample_p_values(RunConfig(n_runs=16, seed=100))
        assert not np.array_equal(a, different)


class TestSimulateStrategy:
    def test_zero_seed_means_no_epidemic(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        inputs = SimulationInputs(
            regions=inputs.regions,
            age_groups=inputs.age_groups,
            populations=inputs.populations,
            gamma=inputs.gamma,
            lam=inputs.lam,
            contacts=inputs.contacts,
            initial_infections=np.zeros(len(inputs.regions)),
            seed_age_index=inputs.seed_age_index,
        )
        strategy = toy_scenario.strategies()[0]
        config = toy_scenario.run_config()
        trajectory = simulate_strategy(strategy, 0.025, config, inputs)
        assert trajectory.total_deaths == 0.0
        assert np.all(trajectory.regimes_by_week == int(Regime.NO_LOCKDOWN))
        np.testing.assert_array_equal(
            trajectory.weeks_in_regime, [config.horizon_weeks, 0.0, 0.0]
        )

    def test_immediate_transition_and_partial_only_closure(self, toy_dict):
        from epidecide.scenario import scenario_from_dict

        toy_dict["strategies"] = [
            {
                "id": "E*",
                "initial_target": "partial",
                "lockdown_threshold": 1e-9,
                "easing_fraction": None,
                "tightening_rise": None,
            }
        ]
        scenario = scenario_from_dict(toy_dict)
        trajectory = simulate_strategy(
            scenario.strategies()[0], 0.025, scenario.run_config(), scenario.build_inputs()
        )
        regimes = trajectory.regimes_by_week
        assert regimes[0] == int(Regime.NO_LOCKDOWN)
        assert np.all(regimes[1:] == int(Regime.PARTIAL_LOCKDOWN))

    def test_matches_independent_desk_oracle(self):
        """Three weeks, one region, one age: straight-line reimplementation.

        The oracle recomputes the difference equations and the weekly rules
        (death threshold with delayed infected observations) from scratch.
        """
        population = 10_000.0
        inputs = SimulationInputs(
            regions=("only",),
            age_groups=("all",),
            populations=np.array([[population]]),
            gamma=np.array([0.08]),
            lam=np.array([0.02]),
            contacts=np.array([[10.0], [5.0], [3.0]]),
            initial_infections=np.array([50.0]),
            seed_age_index=0,
        )
        p = 0.03
        strategy = Strategy(
            id="L_E1",
            initial_target=Regime.COMPLETE_LOCKDOWN,
            lockdown_threshold=20.0,
            easing_fraction=0.5,
            tightening_rise=0.05,
        )
        config = RunConfig(n_runs=1, horizon_weeks=3, seed=0)
        trajectory = simulate_strategy(strategy, p, config, inputs)

        contacts = {0: 10.0, 1: 5.0, 2: 3.0}
        s, i, r, d = population - 50.0, 50.0, 0.0, 0.0
        i_hist = [i]
        regime = 0
        peak = 0.0
        prev_obs = None
        has_left = False
        regimes = []
        for week in range(1, 4):
            regimes.append(regime)
            for _ in range(7):
                force = p * contacts[regime] * (i / population)
                new = min(force, 1.0) * s
                rec, dead = 0.08 * i, 0.02 * i
                s, i, r, d = s - new, i + new - rec - dead, r + rec, d + dead
                i_hist.append(i)
            if week == 3:
                break
            obs = i_hist[7 * (week - 1)] / population
            if regime == 0 and not has_left and d >= 20.0:
                regime = 2
                peak = obs
            elif regime == 2:
                peak = max(peak, obs)
                if obs < 0.5 * peak:
                    regime = 1
            elif regime == 1 and prev_obs is not None:
                if obs > 0 and obs >= 1.05 * prev_obs:
                    regime = 2
                    peak = obs
            has_left = has_left or regime != 0
            prev_obs = obs

        assert list(trajectory.regimes_by_week) == regimes
        assert trajectory.d[-1, 0, 0] == pytest.approx(d, rel=1e-12)
        assert trajectory.s[-1, 0, 0] == pytest.approx(s, rel=1e-12)
        assert trajectory.i[-1, 0, 0] == pytest.approx(i, rel=1e-12)

    def test_trajectory_states_satisfy_invariants(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        strategy = toy_scenario.strategies()[0]
        trajectory = simulate_strategy(strategy, 0.03, toy_scenario.run_config(), inputs)
        from epidecide.epi import CompartmentState

        for day in range(trajectory.s.shape[0]):
            validate_state(
                CompartmentState(
                    s=trajectory.s[day],
                    i=trajectory.i[day],
                    r=trajectory.r[day],
                    d=trajectory.d[day],
                    t=day,
                ),
                inputs.populations,
            )
        assert trajectory.weeks_in_regime.sum() == toy_scenario.run_config().horizon_weeks

    def test_weekly_decisions_match_scalar_policy_module(self, toy_scenario):
        """The batched kernel and the scalar state machine agree exactly."""
        inputs = toy_inputs(toy_scenario)
        config = toy_scenario.run_config()
        total_pop = inputs.total_population
        for strategy in toy_scenario.strategies():
            trajectory = simulate_strategy(strategy, 0.028, config, inputs)
            i_total = trajectory.i.sum(axis=(1, 2))
            d_total = trajectory.d.sum(axis=(1, 2))
            state = PolicyState()
            regimes = [int(state.regime)]
            for week in range(1, config.horizon_weeks):
                observation = Observation(
                    week=week,
                    cumulative_deaths=float(d_total[7 * week]),
                    infected_proportion=float(i_total[7 * (week - 1)] / total_pop),
                )
                state = advance(strategy, state, observation)
                regimes.append(int(state.regime))
            assert regimes == list(trajectory.regimes_by_week)


class TestRunEnsemble:
    def test_degenerate_ensemble_equals_single_trajectory(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        config = RunConfig(n_runs=1, horizon_weeks=8, seed=3, p_log_sd=0.0,
                           p_log_mean=math.log(0.025))
        strategies = toy_scenario.strategies()
        result = run_ensemble(strategies, config, inputs)
        p = math.exp(math.log(0.025))
        for outcome in result.outcomes:
            trajectory = simulate_strategy(outcome.strategy, p, config, inputs)
            np.testing.assert_array_equal(
                outcome.expected_deaths_by_age, trajectory.deaths_by_age
            )
            np.testing.assert_array_equal(
                outcome.expected_weeks_in_regime, trajectory.weeks_in_regime
            )

    def test_bit_identical_repeats(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        config = toy_scenario.run_config()
        strategies = toy_scenario.strategies()
        a = run_ensemble(strategies, config, inputs)
        b = run_ensemble(strategies, config, inputs)
        np.testing.assert_array_equal(a.p_values, b.p_values)
        for oa, ob in zip(a.outcomes, b.outcomes):
            np.testing.assert_array_equal(oa.per_run_deaths_by_age, ob.per_run_deaths_by_age)
            np.testing.assert_array_equal(oa.expected_deaths_by_age, ob.expected_deaths_by_age)
            np.testing.assert_array_equal(oa.example_daily_deaths, ob.example_daily_deaths)

    def test_parallel_workers_bit_identical(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        config = toy_scenario.run_config()
        strategies = toy_scenario.strategies()
        serial = run_ensemble(strategies, config, inputs, workers=1)
        parallel = run_ensemble(strategies, config, inputs, workers=3)
        for oa, ob in zip(serial.outcomes, parallel.outcomes):
            np.testing.assert_array_equal(oa.per_run_deaths_by_age, ob.per_run_deaths_by_age)
            np.testing.assert_array_equal(oa.per_run_weeks_in_regime, ob.per_run_weeks_in_regime)

    def test_common_random_numbers_pair_runs(self, toy_scenario):
        # One shared p vector serves every strategy; a single-strategy
        # ensemble sees the same draws as the full one.
        inputs = toy_inputs(toy_scenario)
        config = toy_scenario.run_config()
        strategies = toy_scenario.strategies()
        full = run_ensemble(strategies, config, inputs)
        solo = run_ensemble(strategies[:1], config, inputs)
        np.testing.assert_array_equal(full.p_values, solo.p_values)
        np.testing.assert_array_equal(
            full.outcomes[0].per_run_deaths_by_age,
            solo.outcomes[0].per_run_deaths_by_age,
        )

    def test_aggregation_is_mean_of_per_run_values(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        result = run_ensemble(toy_scenario.strategies(), toy_scenario.run_config(), inputs)
        for outcome in result.outcomes:
            np.testing.assert_allclose(
                outcome.expected_deaths_by_age,
                outcome.per_run_deaths_by_age.mean(axis=0),
                rtol=1e-12,
            )
            np.testing.assert_allclose(
                outcome.expected_weeks_in_regime,
                outcome.per_run_weeks_in_regime.mean(axis=0),
                rtol=1e-12,
            )

    def test_null_epidemic_yields_zero_deaths_everywhere(self, toy_dict):
        from epidecide.scenario import scenario_from_dict

        toy_dict["run"]["initial_infections"]["per_region"] = 0.0
        scenario = scenario_from_dict(toy_dict)
        result = run_ensemble(
            scenario.strategies(), scenario.run_config(), scenario.build_inputs()
        )
        for outcome in result.outcomes:
            assert outcome.expected_total_deaths == 0.0
            np.testing.assert_array_equal(
                outcome.expected_weeks_in_regime,
                [scenario.run_config().horizon_weeks, 0.0, 0.0],
            )

    def test_failed_run_rejected_with_run_indices(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        broken = SimulationInputs(
            regions=inputs.regions,
            age_groups=inputs.age_groups,
            populations=np.zeros_like(inputs.populations),
            gamma=inputs.gamma,
            lam=inputs.lam,
            contacts=inputs.contacts,
            initial_infections=np.zeros(len(inputs.regions)),
            seed_age_index=inputs.seed_age_index,
        )
        with np.errstate(invalid="ignore"), pytest.raises(EnsembleError, match="runs"):
            run_ensemble(toy_scenario.strategies(), toy_scenario.run_config(), broken)

    def test_duplicate_strategy_ids_rejected(self, toy_scenario):
        strategies = toy_scenario.strategies()
        with pytest.raises(ValueError, match="unique"):
            run_ensemble(
                [strategies[0], strategies[0]],
                toy_scenario.run_config(),
                toy_inputs(toy_scenario),
            )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RunConfig(n_runs=0).validate()
        with pytest.raises(ValueError):
            RunConfig(horizon_weeks=0).validate()
        with pytest.raises(ValueError):
            RunConfig(p_log_sd=-0.1).validate()


class TestInitialState:
    def test_seed_placement(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        state = initial_state(inputs)
        assert state.i[0, inputs.seed_age_index] == 5.0
        assert state.s[0, inputs.seed_age_index] == pytest.approx(
            inputs.populations[0, inputs.seed_age_index] - 5.0
        )
        validate_state(state, inputs.populations)

    def test_overseeded_stratum_rejected(self, toy_scenario):
        inputs = toy_inputs(toy_scenario)
        bad = SimulationInputs(
            regions=inputs.regions,
            age_groups=inputs.age_groups,
            populations=inputs.populations,
            gamma=inputs.gamma,
            lam=inputs.lam,
            contacts=inputs.contacts,
            initial_infections=np.full(len(inputs.regions), 1e9),
            seed_age_index=inputs.seed_age_index,
        )
        with pytest.raises(ValueError, match="exceed"):
            initial_state(bad)
