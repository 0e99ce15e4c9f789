"""Additive multi-attribute utility scoring and trade-off analysis.

Marginal utilities are the negative identity (attributes are losses), so a
strategy's score under criterion weights k is -sum_i k_i * a_i and the best
strategy is the one with the least weighted life-years lost.  On top of the
ranking sit two trade-off tools: the Pareto front on grouped attribute
axes, and the critical weight c* at which the best strategy flips between
the lockdown and non-lockdown families along the weight path
k(c) = (c, c, 1-2c).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attributes import AttributeVector

WEIGHT_SUM_TOLERANCE = 1e-9

WEIGHT_PRESETS: dict[str, tuple[float, float, float]] = {
    "covid-only": (1.0, 0.0, 0.0),
    "covid-cancer": (0.5, 0.5, 0.0),
    "equal": (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
    "custom-0.45": (0.45, 0.45, 0.1),
}


class WeightError(ValueError):
    """Raised for weight vectors off the probability simplex."""


def validate_weights(weights) -> np.ndarray:
    k = np.asarray(weights, dtype=float)
    if k.shape != (3,):
        raise WeightError(f"expected 3 weights, got shape {k.shape}")
    if np.any(k < 0):
        raise WeightError("weights must be nonnegative")
    total = float(k.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise WeightError(f"weights must sum to 1 (got {total!r})")
    return k


def marginal_utility(value: float) -> float:
    """Negative identity: losses map to negative utilities."""
    return -value


def expected_utility(weights, attributes) -> float:
    """Weighted sum of marginal utilities, sum_i k_i * (-a_i)."""
    k = validate_weights(weights)
    if isinstance(attributes, AttributeVector):
        a = attributes.as_array()
    else:
        a = np.asarray(attributes, dtype=float)
    if a.shape != k.shape:
        raise WeightError(f"attribute shape {a.shape} does not match weights")
    return float(np.dot(k, -a))


@dataclass(frozen=True)
class ScoredStrategy:
    strategy_id: str
    score: float
    contributions: tuple[float, float, float]  # k_i * U_i per attribute
    attributes: AttributeVector


def rank(weights, table: dict[str, AttributeVector]) -> list[ScoredStrategy]:
    """Strategies by descending score; ties break lexicographically by id."""
    if not table:
        raise WeightError("cannot rank an empty strategy table")
    k = validate_weights(weights)
    scored = []
    for strategy_id in sorted(table):
        attrs = table[strategy_id]
        contributions = tuple(
            float(k[i] * marginal_utility(v)) for i, v in enumerate(attrs.as_array())
        )
        scored.append(
            ScoredStrategy(
                strategy_id=strategy_id,
                score=float(sum(contributions)),
                contributions=contributions,
                attributes=attrs,
            )
        )
    scored.sort(key=lambda s: (-s.score, s.strategy_id))
    return scored


def non_dominated_mask(points) -> np.ndarray:
    """Boolean mask of points not strictly dominated (lower is better).

    A point is dominated if another point is <= in both coordinates and
    < in at least one; ties (exact duplicates) survive.  Sort-and-sweep
    over ascending first coordinate.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected an (n, 2) array of points")
    n = len(pts)
    mask = np.ones(n, dtype=bool)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    best_y_strictly_left = np.inf
    group_start = 0
    while group_start < n:
        group_end = group_start
        x = pts[order[group_start], 0]
        while group_end < n and pts[order[group_end], 0] == x:
            group_end += 1
        group = order[group_start:group_end]
        group_min_y = pts[group, 1].min()
        for index in group:
            y = pts[index, 1]
            if best_y_strictly_left <= y or group_min_y < y:
                mask[index] = False
        best_y_strictly_left = min(best_y_strictly_left, group_min_y)
        group_start = group_end
    return mask


def pareto_front(points) -> np.ndarray:
    """The non-dominated subset, sorted by first coordinate."""
    pts = np.asarray(points, dtype=float)
    front = pts[non_dominated_mask(pts)]
    order = np.lexsort((front[:, 1], front[:, 0]))
    return front[order]


def grouped_points(
    table: dict[str, AttributeVector],
) -> tuple[list[str], np.ndarray]:
    """Default Pareto axes: (covid + cancer combined, poverty).

    The within-group combination is an unweighted sum, i.e. equal weighting
    of the grouped attributes.
    """
    ids = sorted(table)
    pts = np.array(
        [[table[i].covid + table[i].cancer, table[i].poverty] for i in ids]
    )
    return ids, pts


@dataclass(frozen=True)
class CriticalWeightResult:
    """Outcome of the lockdown / non-lockdown crossing search on c in [0, 0.5].

    ``degenerate_interval`` marks a whole interval where the two set
    envelopes coincide; ``no_crossing`` means the same family is preferred
    across the entire range.
    """

    c_star: float | None
    importance_ratio: float | None
    best_lockdown: str | None
    best_non_lockdown: str | None
    no_crossing: bool = False
    degenerate_interval: tuple[float, float] | None = None

    @property
    def found(self) -> bool:
        return self.c_star is not None


def importance_ratio(c: float) -> float:
    """Relative importance of short/medium-term attributes, c / (1 - 2c)."""
    denominator = 1.0 - 2.0 * c
    if denominator == 0.0:
        return float("inf")
    return c / denominator


def _weights_on_path(c: float) -> np.ndarray:
    return np.array([c, c, 1.0 - 2.0 * c])


def _best_of_set(c: float, ids, table) -> tuple[float, str]:
    best_score = -np.inf
    best_id = None
    weights = _weights_on_path(c)
    for strategy_id in sorted(ids):
        score = float(np.dot(weights, -table[strategy_id].as_array()))
        if score > best_score:
            best_score = score
            best_id = strategy_id
    return best_score, best_id


def critical_weight(
    lockdown_ids,
    non_lockdown_ids,
    table: dict[str, AttributeVector],
    tolerance: float = 1e-6,
    grid_points: int = 2048,
) -> CriticalWeightResult:
    """Crossing of the best-of-set score envelopes along k(c) = (c, c, 1-2c).

    Both envelopes are maxima of linear functions of c, so their difference
    is piecewise linear; a grid scan locates a sign change and bisection
    refines it to ``tolerance``.  Sets must be nonempty and disjoint keys
    of ``table``.
    """
    lockdown_ids = list(lockdown_ids)
    non_lockdown_ids = list(non_lockdown_ids)
    if not lockdown_ids or not non_lockdown_ids:
        raise ValueError("both strategy sets must be nonempty")
    for strategy_id in lockdown_ids + non_lockdown_ids:
        if strategy_id not in table:
            raise KeyError(f"strategy {strategy_id!r} not in attribute table")

    def gap(c: float) -> float:
        return _best_of_set(c, lockdown_ids, table)[0] - _best_of_set(
            c, non_lockdown_ids, table
        )[0]

    grid = np.linspace(0.0, 0.5, grid_points)
    values = np.array([gap(c) for c in grid])

    scale = max(1.0, float(np.max(np.abs(values))))
    near_zero = np.abs(values) <= 1e-12 * scale
    if np.all(near_zero):
        return CriticalWeightResult(
            c_star=None,
            importance_ratio=None,
            best_lockdown=_best_of_set(0.25, lockdown_ids, table)[1],
            best_non_lockdown=_best_of_set(0.25, non_lockdown_ids, table)[1],
            degenerate_interval=(0.0, 0.5),
        )

    crossing = None
    for index in range(len(grid) - 1):
        lo_value, hi_value = values[index], values[index + 1]
        if lo_value == 0.0:
            crossing = (grid[index], grid[index])
            break
        if lo_value * hi_value < 0.0:
            crossing = (grid[index], grid[index + 1])
            break
    else:
        if values[-1] == 0.0:
            crossing = (grid[-1], grid[-1])

    if crossing is None:
        return CriticalWeightResult(
            c_star=None,
            importance_ratio=None,
            best_lockdown=None,
            best_non_lockdown=None,
            no_crossing=True,
        )

    lo, hi = crossing
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if gap(lo) * gap(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    c_star = 0.5 * (lo + hi)

    return CriticalWeightResult(
        c_star=c_star,
        importance_ratio=importance_ratio(c_star),
        best_lockdown=_best_of_set(c_star, lockdown_ids, table)[1],
        best_non_lockdown=_best_of_set(c_star, non_lockdown_ids, table)[1],
    )
