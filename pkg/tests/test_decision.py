import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epidecide.attributes import AttributeVector
from epidecide.decision import (
    WEIGHT_PRESETS,
    CriticalWeightResult,
    WeightError,
    critical_weight,
    expected_utility,
    grouped_points,
    importance_ratio,
    marginal_utility,
    non_dominated_mask,
    pareto_front,
    rank,
    validate_weights,
)


def dominance_oracle(points) -> np.ndarray:
    """O(n^2) pairwise strict-dominance check (lower is better)."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (
                pts[j, 0] <= pts[i, 0]
                and pts[j, 1] <= pts[i, 1]
                and (pts[j, 0] < pts[i, 0] or pts[j, 1] < pts[i, 1])
            ):
                mask[i] = False
                break
    return mask


def table_from(rows: dict[str, tuple[float, float, float]]):
    return {k: AttributeVector(*v) for k, v in rows.items()}


class TestMarginalUtility:
    def test_zero(self):
        assert marginal_utility(0.0) == 0.0

    def test_negates(self):
        assert marginal_utility(1000.0) == -1000.0

    @given(x=st.floats(-1e9, 1e9), y=st.floats(-1e9, 1e9))
    def test_additive(self, x, y):
        assert marginal_utility(x) + marginal_utility(y) == pytest.approx(
            marginal_utility(x + y), rel=1e-12, abs=1e-6
        )


class TestExpectedUtility:
    def test_selector_weight(self):
        assert expected_utility((1.0, 0.0, 0.0), (5.0, 7.0, 9.0)) == -5.0

    def test_equal_weights_mean(self):
        assert expected_utility(
            (1 / 3, 1 / 3, 1 / 3), (3.0, 6.0, 9.0)
        ) == pytest.approx(-6.0, rel=1e-12)

    def test_dot_product_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a = rng.uniform(0, 1e6, size=3)
            score = expected_utility((0.45, 0.45, 0.1), a)
            assert score == pytest.approx(
                -(0.45 * a[0] + 0.45 * a[1] + 0.1 * a[2]), rel=1e-12
            )

    def test_accepts_attribute_vector(self):
        assert expected_utility((0.5, 0.5, 0.0), AttributeVector(2.0, 4.0, 99.0)) == -3.0

    def test_simplex_violations(self):
        with pytest.raises(WeightError):
            expected_utility((0.2, 0.2, 0.2), (1.0, 1.0, 1.0))
        with pytest.raises(WeightError):
            expected_utility((-0.1, 0.6, 0.5), (1.0, 1.0, 1.0))
        with pytest.raises(WeightError):
            expected_utility((0.5, 0.5), (1.0, 1.0))

    def test_presets_are_valid(self):
        for preset in WEIGHT_PRESETS.values():
            validate_weights(preset)


class TestRank:
    def test_single_strategy(self):
        table = table_from({"only": (1.0, 2.0, 3.0)})
        ranked = rank((1.0, 0.0, 0.0), table)
        assert [s.strategy_id for s in ranked] == ["only"]

    def test_selector_orders_by_attribute(self):
        table = table_from({"worse": (20.0, 0.0, 0.0), "better": (10.0, 99.0, 99.0)})
        ranked = rank((1.0, 0.0, 0.0), table)
        assert [s.strategy_id for s in ranked] == ["better", "worse"]

    def test_tie_breaks_lexicographically(self):
        table = table_from({"b": (1.0, 1.0, 1.0), "a": (1.0, 1.0, 1.0)})
        ranked = rank((1 / 3, 1 / 3, 1 / 3), table)
        assert [s.strategy_id for s in ranked] == ["a", "b"]

    def test_contributions_decompose_score(self):
        table = table_from({"s": (10.0, 20.0, 30.0)})
        scored = rank((0.45, 0.45, 0.1), table)[0]
        assert scored.score == pytest.approx(sum(scored.contributions), abs=1e-12)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            ids = [f"s{i}" for i in range(rng.integers(2, 12))]
            table = {i: AttributeVector(*rng.uniform(0, 1e5, 3)) for i in ids}
            k = rng.dirichlet(np.ones(3))
            ranked = rank(k, table)
            oracle_scores = {
                i: -(k[0] * v.covid + k[1] * v.cancer + k[2] * v.poverty)
                for i, v in table.items()
            }
            oracle_order = sorted(ids, key=lambda i: (-oracle_scores[i], i))
            assert [s.strategy_id for s in ranked] == oracle_order

    @given(scale=st.floats(min_value=1e-3, max_value=1e3))
    def test_argmax_invariant_under_common_scaling(self, scale):
        table = table_from(
            {"a": (10.0, 5.0, 1.0), "b": (2.0, 2.0, 20.0), "c": (4.0, 9.0, 3.0)}
        )
        scaled = {
            k: AttributeVector(scale * v.covid, scale * v.cancer, scale * v.poverty)
            for k, v in table.items()
        }
        k = (0.45, 0.45, 0.1)
        assert [s.strategy_id for s in rank(k, table)] == [
            s.strategy_id for s in rank(k, scaled)
        ]


class TestParetoFront:
    def test_single_dominating_point(self):
        pts = [(1.0, 1.0), (2.0, 3.0), (4.0, 2.0)]
        np.testing.assert_array_equal(pareto_front(pts), [[1.0, 1.0]])

    def test_worked_example(self):
        pts = [(1.0, 3.0), (2.0, 2.0), (3.0, 1.0), (2.5, 2.5)]
        np.testing.assert_array_equal(
            pareto_front(pts), [[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]
        )

    def test_duplicates_survive(self):
        pts = [(1.0, 1.0), (1.0, 1.0), (2.0, 0.5)]
        mask = non_dominated_mask(pts)
        assert mask.tolist() == [True, True, True]

    def test_random_instances_match_pairwise_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            n = int(rng.integers(1, 40))
            pts = rng.integers(0, 12, size=(n, 2)).astype(float)  # many ties
            np.testing.assert_array_equal(
                non_dominated_mask(pts), dominance_oracle(pts)
            )

    def test_front_sorted_by_first_coordinate(self):
        rng = np.random.default_rng(29)
        pts = rng.uniform(0, 1, size=(50, 2))
        front = pareto_front(pts)
        assert np.all(np.diff(front[:, 0]) >= 0)

    def test_grouped_points_default_axes(self):
        table = table_from({"s1": (1.0, 2.0, 7.0), "s0": (3.0, 4.0, 5.0)})
        ids, pts = grouped_points(table)
        assert ids == ["s0", "s1"]
        np.testing.assert_array_equal(pts, [[7.0, 5.0], [3.0, 7.0]])


class TestCriticalWeight:
    def test_analytic_singletons(self):
        table = table_from({"A": (10.0, 10.0, 0.0), "B": (2.0, 2.0, 20.0)})
        result = critical_weight(["A"], ["B"], table)
        assert result.found
        assert result.c_star == pytest.approx(5.0 / 14.0, abs=1e-6)
        assert result.best_lockdown == "A"
        assert result.best_non_lockdown == "B"

    def test_crossing_property_sign_flip(self):
        table = table_from({"A": (10.0, 10.0, 0.0), "B": (2.0, 2.0, 20.0)})
        result = critical_weight(["A"], ["B"], table)
        c = result.c_star

        def gap(cc):
            k = (cc, cc, 1.0 - 2.0 * cc)
            return expected_utility(k, table["A"]) - expected_utility(k, table["B"])

        assert gap(c - 1e-4) * gap(c + 1e-4) < 0

    def test_identical_vectors_degenerate(self):
        table = table_from({"A": (5.0, 5.0, 5.0), "B": (5.0, 5.0, 5.0)})
        result = critical_weight(["A"], ["B"], table)
        assert not result.found
        assert result.degenerate_interval == (0.0, 0.5)
        assert not result.no_crossing

    def test_no_crossing_reported(self):
        # A dominates everywhere on [0, 0.5].
        table = table_from({"A": (1.0, 1.0, 1.0), "B": (10.0, 10.0, 10.0)})
        result = critical_weight(["A"], ["B"], table)
        assert result.no_crossing
        assert result.c_star is None

    def test_envelope_uses_best_of_each_set(self):
        # B2 shadows B1 near the crossing; the crossing must use B2.
        table = table_from(
            {
                "A": (10.0, 10.0, 0.0),
                "B1": (2.0, 2.0, 30.0),
                "B2": (2.0, 2.0, 20.0),
            }
        )
        result = critical_weight(["A"], ["B1", "B2"], table)
        assert result.best_non_lockdown == "B2"
        assert result.c_star == pytest.approx(5.0 / 14.0, abs=1e-6)

    def test_empty_side_rejected(self):
        table = table_from({"A": (1.0, 1.0, 1.0)})
        with pytest.raises(ValueError, match="nonempty"):
            critical_weight([], ["A"], table)

    def test_tolerance_respected(self):
        table = table_from({"A": (10.0, 10.0, 0.0), "B": (2.0, 2.0, 20.0)})
        tight = critical_weight(["A"], ["B"], table, tolerance=1e-9)
        assert tight.c_star == pytest.approx(5.0 / 14.0, abs=1e-8)


class TestImportanceRatio:
    def test_under_45_paper_value(self):
        assert importance_ratio(0.474) == pytest.approx(0.474 / 0.052, abs=1e-9)

    def test_over_45_paper_value(self):
        assert importance_ratio(0.338) == pytest.approx(0.338 / 0.324, abs=1e-9)

    def test_quarter_is_half(self):
        assert importance_ratio(0.25) == pytest.approx(0.5, abs=1e-15)

    def test_half_is_infinite(self):
        assert importance_ratio(0.5) == float("inf")
