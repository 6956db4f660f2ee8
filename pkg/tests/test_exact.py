import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from factorial_alloc import (
    AllocationWarning,
    ConditionNotMet,
    CostSpec,
    VarianceSpec,
    cost_shares,
    exact_block,
    exact_cost,
    exact_crd,
)

positive = st.floats(0.1, 10.0)


def test_crd_neyman_and_variance_proportional():
    vs = VarianceSpec([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_allclose(exact_crd(vs, "A").proportions, np.sqrt([1, 2, 3, 4]) / np.sqrt([1, 2, 3, 4]).sum())
    np.testing.assert_allclose(exact_crd(vs, "D").proportions, 0.25)
    np.testing.assert_allclose(exact_crd(vs, "E").proportions, [0.1, 0.2, 0.3, 0.4])


@pytest.mark.parametrize("criterion", "ADE")
def test_homoscedastic_is_balanced(criterion):
    p = exact_crd(VarianceSpec([2.5] * 8), criterion).proportions
    np.testing.assert_array_equal(p, np.full(8, 0.125))


def test_counts_scale_with_total():
    alloc = exact_crd(VarianceSpec([1.0] * 4), "A")
    np.testing.assert_array_equal(alloc.counts(1656), [414.0] * 4)
    blocked = exact_block(VarianceSpec([[1.0] * 4] * 2, block_sizes=[948, 708]), "E")
    np.testing.assert_array_equal(blocked.counts([948, 708]), [[237.0] * 4, [177.0] * 4])


def test_block_a_is_per_block_neyman():
    s2 = np.array([[1.0, 4.0, 9.0, 16.0], [16.0, 9.0, 4.0, 1.0]])
    p = exact_block(VarianceSpec(s2, block_sizes=[10, 30]), "A").proportions
    np.testing.assert_allclose(p, [[0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1]])


@pytest.mark.parametrize(
    "s2, criterion, used",
    [
        ([[4.0] * 4, [1.0] * 4], "D", ("WBH",)),
        ([[1.0, 2, 3, 4], [1.0, 2, 3, 4]], "D", ("BBH",)),
        ([[4.0] * 4, [1.0] * 4], "E", ("WBH",)),
    ],
)
def test_block_closed_forms_under_conditions(s2, criterion, used):
    alloc = exact_block(VarianceSpec(s2, block_sizes=[40, 20]), criterion)
    np.testing.assert_allclose(alloc.proportions, 0.25)
    assert alloc.conditions_used == used


@pytest.mark.parametrize(
    "s2, criterion",
    [
        ([[1.0, 2, 3, 4], [4.0, 3, 2, 1]], "D"),
        ([[1.0, 2, 3, 4], [1.0, 2, 3, 4]], "E"),
    ],
)
def test_block_without_condition_raises(s2, criterion):
    with pytest.raises(ConditionNotMet, match="greedy"):
        exact_block(VarianceSpec(s2, block_sizes=[40, 20]), criterion)


def test_block_tolerance_controls_detection():
    vs = VarianceSpec([[1.0, 1.0, 1.0, 1.0 + 1e-7]] * 2 + [[1.0, 1.0, 1.0, 1.5]], block_sizes=[8, 8, 8])
    with pytest.raises(ConditionNotMet):
        exact_block(vs, "E", tol=1e-9)
    wide = VarianceSpec([[1.0, 1.0, 1.0, 1.0 + 1e-7]] * 2, block_sizes=[8, 8])
    assert exact_block(wide, "E", tol=1e-6).conditions_used == ("WBH",)


# frozen values: budget share for each arm, computed by hand from the closed forms
@pytest.mark.parametrize(
    "s2, costs, criterion, expected",
    [
        ([1, 1, 1, 1], [0.1, 4, 4, 9], "A", [0.043, 0.273, 0.273, 0.410]),
        ([1, 1, 1, 1], [0.1, 4, 4, 9], "E", [0.006, 0.234, 0.234, 0.526]),
        ([1, 2, 3, 4], [0.1, 4, 4, 9], "A", [0.025, 0.224, 0.275, 0.476]),
        ([1, 2, 3, 4], [0.1, 4, 4, 9], "E", [0.002, 0.143, 0.214, 0.642]),
        ([1, 2, 3, 4], [0.1, 4, 4, 9], "D", [0.25] * 4),
    ],
)
def test_cost_shares(s2, costs, criterion, expected):
    pi = cost_shares(VarianceSpec(s2), costs, criterion)
    np.testing.assert_allclose(pi, expected, atol=1e-3)
    assert pi.sum() == pytest.approx(1.0)


def test_cost_floor_rule_never_overspends():
    res = exact_cost(VarianceSpec([1.0, 2, 2, 2]), CostSpec([500, 5000, 5000, 10000], 4.5e6), "E")
    np.testing.assert_array_equal(res.integer_counts, [111, 222, 222, 222])
    assert res.spent <= 4.5e6


def test_cost_floor_is_stable_at_exact_products():
    # C pi_j / C_j is mathematically 225 but lands a hair below in floating point
    res = exact_cost(VarianceSpec([1.0] * 4), CostSpec([500, 5000, 5000, 10000], 4.5e6), "D")
    np.testing.assert_array_equal(res.integer_counts, [2250, 225, 225, 112])


def test_cost_warns_on_thin_arms():
    with pytest.warns(AllocationWarning, match="fewer than 2"):
        res = exact_cost(VarianceSpec([1.0, 2, 3, 4]), CostSpec([0.1, 4, 4, 9], 100), "E")
    assert res.warnings


@given(st.lists(positive, min_size=4, max_size=4), st.sampled_from("ADE"), st.floats(1.0, 1e6))
def test_equal_costs_reduce_to_crd(s2, criterion, budget):
    vs = VarianceSpec(s2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AllocationWarning)
        res = exact_cost(vs, CostSpec([3.0] * 4, budget), criterion)
    np.testing.assert_allclose(res.budget_shares, exact_crd(vs, criterion).proportions, rtol=0, atol=1e-12)


@given(st.lists(positive, min_size=8, max_size=8), st.sampled_from("ADE"), st.integers(-20, 20))
def test_scale_invariance(s2, criterion, power):
    vs = VarianceSpec(s2)
    scaled = VarianceSpec(np.asarray(s2) * 2.0**power)
    np.testing.assert_allclose(exact_crd(scaled, criterion).proportions, exact_crd(vs, criterion).proportions, rtol=1e-12)


def test_zero_variance_warns():
    with pytest.warns(AllocationWarning):
        p = exact_crd(VarianceSpec([0.0, 1.0, 1.0, 1.0]), "A").proportions
    assert p[0] == 0.0
    with pytest.raises(ValueError):
        exact_crd(VarianceSpec([0.0] * 4), "A")
