import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchbb.bounds import bracket_modes
from switchbb.core import BoxRegion, Dataset, SwitchingModel, canonicalize
from switchbb.swreg import (
    SwitchingProblem,
    classify,
    constant_classification_sets,
    cost_sw,
    cost_sw_assigned,
    klinreg,
    lower_classification,
    lower_pointwise,
    solve_switching,
    split_symmetric,
)

from oracles import cost_sw_loops, exhaustive_switching_optimum, sample_in_box


def _random_instance(rng, n=2, d=2, N=12, sigma=0.1):
    theta = rng.uniform(-5, 5, size=(n, d))
    X = rng.uniform(-5, 5, size=(N, d))
    labels = rng.integers(1, n + 1, size=N)
    y = np.einsum("ij,ij->i", X, theta[labels - 1]) + sigma * rng.normal(size=N)
    return Dataset(X, y, true_labels=labels, true_params=theta)


def _box_bracket(box, n, d, data):
    return bracket_modes(box.lower.reshape(n, d), box.upper.reshape(n, d), data)


# ---------------------------------------------------------------------- cost


def test_classify_picks_smaller_error():
    data = Dataset([[1.0]], [1.0])
    model = SwitchingModel(2, np.array([0.5, 2.0]))
    assert classify(model, data).tolist() == [1]


def test_classify_breaks_ties_with_smallest_index():
    data = Dataset([[1.0], [2.0]], [1.0, -1.0])
    model = SwitchingModel(2, np.array([0.7, 0.7]))
    assert classify(model, data).tolist() == [1, 1]


def test_classify_recovers_separated_modes():
    rng = np.random.default_rng(0)
    theta = np.array([[4.0, 0.0], [-4.0, 1.0]])
    X = rng.uniform(-5, 5, size=(40, 2))
    labels = rng.integers(1, 3, size=40)
    data = Dataset(X, np.einsum("ij,ij->i", X, theta[labels - 1]), true_labels=labels)
    model = SwitchingModel.from_modes(theta)
    mism = classify(model, data) != labels
    # only points nearly orthogonal to the mode gap can be ambiguous
    assert mism.mean() <= 0.05


def test_cost_sw_zero_on_noiseless_truth():
    rng = np.random.default_rng(1)
    data = _random_instance(rng, sigma=0.0)
    assert cost_sw(SwitchingModel.from_modes(data.true_params), data) == pytest.approx(0.0, abs=1e-20)


def test_cost_sw_single_mode_is_plain_sse():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(9, 2))
    y = rng.normal(size=9)
    data = Dataset(X, y)
    w = rng.normal(size=2)
    sse = float(((y - X @ w) ** 2).sum())
    assert cost_sw(SwitchingModel(1, w), data) == pytest.approx(sse)


def test_cost_sw_matches_loop_oracle():
    rng = np.random.default_rng(3)
    data = _random_instance(rng, n=2, d=1, N=10)
    model = SwitchingModel(2, rng.normal(size=2))
    assert cost_sw(model, data) == pytest.approx(cost_sw_loops(model.modes, data.X, data.y))


def test_cost_assigned_definitional_equivalence():
    rng = np.random.default_rng(4)
    data = _random_instance(rng)
    model = SwitchingModel(2, rng.normal(size=4))
    q = classify(model, data)
    assert cost_sw_assigned(model, q, data) == pytest.approx(cost_sw(model, data))


def test_cost_assigned_swapped_labels_is_larger():
    rng = np.random.default_rng(5)
    data = _random_instance(rng, sigma=0.0)
    model = SwitchingModel.from_modes(data.true_params)
    q = classify(model, data)
    swapped = 3 - q  # 1 <-> 2
    assert cost_sw_assigned(model, swapped, data) > cost_sw(model, data)
    assert cost_sw_assigned(model, np.ones_like(q), data) == pytest.approx(
        float(((data.y - data.X @ model.modes[0]) ** 2).sum())
    )


# --------------------------------------------------------------------- split


def test_split_matches_worked_geometry():
    box = BoxRegion([-10.0, -10.0], [10.0, 10.0])
    b1, b2 = split_symmetric(box, n=2, d=1)
    assert np.allclose(b1.lower, [-10, -10]) and np.allclose(b1.upper, [0, 10])
    assert np.allclose(b2.lower, [0, 0]) and np.allclose(b2.upper, [10, 10])


def test_split_on_non_first_coordinate_is_plain_bisection():
    box = BoxRegion([0.0, -8.0, 0.0, -8.0], [1.0, 8.0, 1.0, 8.0])
    b1, b2 = split_symmetric(box, n=2, d=2)
    assert np.allclose(b1.upper, [1, 0, 1, 8])
    assert np.allclose(b2.lower, [0, 0, 0, -8])


def test_split_corrections_idempotent_on_ordered_bounds():
    box = BoxRegion([-10.0, 0.0], [0.0, 10.0])
    children = split_symmetric(box, n=2, d=1)
    for child in children:
        for grand in split_symmetric(child, n=2, d=1):
            assert np.all(grand.lower <= grand.upper)


def test_split_drops_infeasible_child():
    # Longest side is w2 (11 vs 10); its lower half [-10, -4.5] forces the
    # correction w1 <= -4.5, which crosses w1's lower bound 0: no ordered
    # point lives there, so only the upper half survives.
    box = BoxRegion([0.0, -10.0], [10.0, 1.0])
    children = split_symmetric(box, n=2, d=1)
    assert len(children) == 1
    assert np.allclose(children[0].lower, [0.0, -4.5])
    assert np.allclose(children[0].upper, [10.0, 1.0])


def test_split_zero_volume_raises():
    with pytest.raises(ValueError):
        split_symmetric(BoxRegion([1.0, 1.0], [1.0, 1.0]), n=2, d=1)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_split_keeps_every_ordered_point(seed):
    rng = np.random.default_rng(seed)
    n, d = 2, 2
    lo = rng.uniform(-5, 0, size=n * d)
    hi = lo + rng.uniform(0.1, 5, size=n * d)
    box = BoxRegion(lo, hi)
    children = split_symmetric(box, n, d)
    samples = sample_in_box(rng, lo, hi, 200)
    ordered = samples[samples[:, 0] <= samples[:, d]]
    for w in ordered:
        assert any(c.contains(w, atol=1e-12) for c in children)


# -------------------------------------------------------------- lower bounds


def test_lower_pointwise_degenerate_box_equals_cost():
    rng = np.random.default_rng(6)
    data = _random_instance(rng, n=2, d=2, N=8)
    w = rng.uniform(-3, 3, size=4)
    box = BoxRegion(w, w)
    bracket = _box_bracket(box, 2, 2, data)
    assert lower_pointwise(bracket) == pytest.approx(cost_sw(SwitchingModel(2, w), data))


def test_lower_pointwise_vanishes_on_huge_box():
    rng = np.random.default_rng(7)
    data = _random_instance(rng, n=2, d=1, N=6)
    box = BoxRegion(np.full(2, -1e4), np.full(2, 1e4))
    assert lower_pointwise(_box_bracket(box, 2, 1, data)) == 0.0


def test_lower_pointwise_validity_montecarlo():
    rng = np.random.default_rng(8)
    data = _random_instance(rng, n=2, d=2, N=10)
    lo = rng.uniform(-6, 2, size=4)
    box = BoxRegion(lo, lo + rng.uniform(0.5, 4, size=4))
    bound = lower_pointwise(_box_bracket(box, 2, 2, data))
    for w in sample_in_box(rng, box.lower, box.upper, 100):
        assert bound <= cost_sw(SwitchingModel(2, w), data) * (1 + 1e-9) + 1e-12


def test_constant_classification_degenerate_direct():
    data = Dataset([[1.0]], [1.0])
    lo = np.array([1.0, 3.0])
    box = BoxRegion(lo, lo)
    sets = constant_classification_sets(_box_bracket(box, 2, 1, data))
    assert sets.per_mode[0].tolist() == [0]
    assert sets.per_mode[1].size == 0
    assert sets.undecided.size == 0


def test_constant_classification_huge_box_all_undecided():
    rng = np.random.default_rng(9)
    data = _random_instance(rng, n=2, d=1, N=7)
    box = BoxRegion(np.full(2, -50.0), np.full(2, 50.0))
    sets = constant_classification_sets(_box_bracket(box, 2, 1, data))
    assert sets.undecided.size == 7


def test_constant_classification_membership_montecarlo():
    rng = np.random.default_rng(10)
    data = _random_instance(rng, n=2, d=2, N=12)
    lo = rng.uniform(-5, 3, size=4)
    box = BoxRegion(lo, lo + rng.uniform(0.2, 2.0, size=4))
    sets = constant_classification_sets(_box_bracket(box, 2, 2, data))
    partition = np.concatenate([sets.undecided, *sets.per_mode])
    assert sorted(partition.tolist()) == list(range(12))
    samples = sample_in_box(rng, box.lower, box.upper, 100)
    for j, idx in enumerate(sets.per_mode):
        for w in samples:
            labels = classify(SwitchingModel(2, w), data)
            assert np.all(labels[idx] == j + 1)


def _staged_bounds(box, data, n, d):
    bracket = _box_bracket(box, n, d, data)
    sets = constant_classification_sets(bracket)
    out = {}
    for staged in ({}, {0}, {1}, {0, 1}):
        out[frozenset(staged)] = lower_classification(box, sets, set(staged), data, bracket)
    return bracket, out


def test_lower_classification_dominates_pointwise_and_grows():
    rng = np.random.default_rng(11)
    for _ in range(25):
        data = _random_instance(rng, n=2, d=1, N=9)
        lo = rng.uniform(-6, 3, size=2)
        box = BoxRegion(lo, lo + rng.uniform(0.3, 3, size=2))
        bracket, bounds = _staged_bounds(box, data, 2, 1)
        base = lower_pointwise(bracket)
        assert bounds[frozenset()] >= base - 1e-12
        full = bounds[frozenset({0, 1})]
        for staged, value in bounds.items():
            assert value <= full + 1e-12 * (1 + abs(full))
        for w in sample_in_box(rng, box.lower, box.upper, 100):
            assert full <= cost_sw(SwitchingModel(2, w), data) * (1 + 1e-9) + 1e-12


def test_lower_classification_degenerate_box_closes_gap():
    rng = np.random.default_rng(12)
    data = _random_instance(rng, n=2, d=2, N=10)
    w = rng.uniform(-4, 4, size=4)
    box = BoxRegion(w, w)
    bracket = _box_bracket(box, 2, 2, data)
    sets = constant_classification_sets(bracket)
    bound = lower_classification(box, sets, {0, 1}, data, bracket)
    cost = cost_sw(SwitchingModel(2, w), data)
    assert bound == pytest.approx(cost, rel=1e-9, abs=1e-12)


# ----------------------------------------------------------------- heuristic


def test_klinreg_fixed_point_on_truth():
    rng = np.random.default_rng(13)
    theta = np.array([[3.0, 1.0], [-3.0, 2.0]])
    X = rng.uniform(-5, 5, size=(60, 2))
    labels = rng.integers(1, 3, size=60)
    data = Dataset(X, np.einsum("ij,ij->i", X, theta[labels - 1]), true_labels=labels)
    model, cost = klinreg(data, 2, SwitchingModel.from_modes(theta))
    assert cost == pytest.approx(0.0, abs=1e-18)
    assert np.allclose(model.modes, theta, atol=1e-9)


def test_klinreg_cost_nonincreasing():
    rng = np.random.default_rng(14)
    for _ in range(100):
        data = _random_instance(rng, n=2, d=2, N=30)
        trace: list = []
        klinreg(data, 2, SwitchingModel(2, rng.uniform(-5, 5, size=4)), trace=trace)
        diffs = np.diff(np.asarray(trace))
        assert np.all(diffs <= 1e-9 * (1 + np.abs(trace[:-1])))


def test_klinreg_survives_starved_mode():
    data = Dataset([[1.0], [2.0]], [1.0, 2.0])
    # Second mode is so far away it never wins a point.
    model, cost = klinreg(data, 2, SwitchingModel(2, np.array([1.0, 50.0])))
    assert cost == pytest.approx(0.0, abs=1e-20)
    assert model.modes[1, 0] == pytest.approx(50.0)


# -------------------------------------------------------------------- solver


def test_upper_sw_base_point_and_clamp():
    rng = np.random.default_rng(15)
    data = _random_instance(rng, n=2, d=1, N=10)
    box = BoxRegion(np.full(2, -10.0), np.full(2, 10.0))
    problem = SwitchingProblem(data, 2, box)
    val, point = problem.upper(box, refresh=False)
    assert val == pytest.approx(cost_sw(SwitchingModel(2, box.lower), data))
    val_r, point_r = problem.upper(box, refresh=True)
    assert val_r <= val + 1e-15
    assert box.contains(point_r)
    assert point_r[0] <= point_r[1] + 1e-15  # canonical ordering


def test_solve_switching_matches_exhaustive_oracle():
    rng = np.random.default_rng(16)
    for _ in range(3):
        data = _random_instance(rng, n=2, d=1, N=10)
        report = solve_switching(data, 2, tol=1e-3, seed=1, restarts=20)
        opt = exhaustive_switching_optimum(data.X, data.y, 2)
        assert report.upper <= opt * (1 + 1e-3) + 1e-12
        assert report.lower <= opt * (1 + 1e-9) + 1e-12


def test_solve_switching_warm_start_certifies():
    rng = np.random.default_rng(17)
    data = _random_instance(rng, n=2, d=2, N=50, sigma=0.05)
    report = solve_switching(data, 2, tol=1e-3, seed=2, restarts=30)
    assert report.terminated_by in ("gap_tolerance", "absolute_gap")
    assert report.relative_gap <= 1e-3 or report.upper - report.lower <= 1e-3
    model = SwitchingModel(2, report.best_point)
    canon = canonicalize(model)
    assert np.allclose(model.w, canon.w)
