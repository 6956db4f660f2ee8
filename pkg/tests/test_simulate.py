import numpy as np
import pytest

from factorial_alloc import (
    PotentialOutcomes,
    draw_assignment,
    enumeration_moments,
    exact_covariance,
    monte_carlo,
    population_effects,
)
from factorial_alloc.simulate import assignment_space_size, estimate_from_assignment, replicate_rng


def _po(seed, N, J=4, blocks=None):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(N, J)) * rng.uniform(0.5, 2, size=J) + rng.normal(size=J)
    return PotentialOutcomes(y, blocks)


def test_draw_respects_counts():
    po = _po(0, 12)
    a = draw_assignment(po, [3, 3, 3, 3], seed=5)
    np.testing.assert_array_equal(a.counts(4), [3, 3, 3, 3])
    b = draw_assignment(po, [3, 3, 3, 3], seed=5)
    np.testing.assert_array_equal(a.treatments, b.treatments)


def test_blocked_draw_stays_in_blocks():
    po = _po(1, 10, blocks=[0] * 4 + [1] * 6)
    alloc = np.array([[1, 1, 1, 1], [2, 2, 1, 1]])
    a = draw_assignment(po, alloc, seed=2, replicate=7)
    np.testing.assert_array_equal(a.counts(4, po.blocks), alloc)


def test_replicate_streams_are_addressable():
    a = replicate_rng(11, 3).random(4)
    b = replicate_rng(11, 3).random(4)
    c = replicate_rng(11, 4).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_allocation_validation():
    po = _po(0, 8)
    with pytest.raises(ValueError, match="sums to"):
        draw_assignment(po, [2, 2, 2, 1], seed=0)
    with pytest.raises(ValueError):
        exact_covariance(po, [2, 2, 4, 0])


def test_space_size():
    assert assignment_space_size([2, 2, 2, 2]) == 2520
    assert assignment_space_size([[1, 1], [2, 1]]) == 2 * 3


@pytest.mark.parametrize("seed", range(6))
def test_exact_matches_enumeration_crd(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(4, 9))
    alloc = np.ones(4, dtype=np.int64) + rng.multinomial(N - 4, np.ones(4) / 4)
    po = _po(seed, N)
    mean, cov = enumeration_moments(po, alloc)
    exact = exact_covariance(po, alloc)
    np.testing.assert_allclose(mean, exact.tau, atol=1e-10)
    np.testing.assert_allclose(cov, exact.exact_cov, atol=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_exact_matches_enumeration_blocked(seed):
    po = _po(seed, 9, J=2, blocks=[0] * 4 + [1] * 5)
    alloc = np.array([[2, 2], [3, 2]])
    mean, cov = enumeration_moments(po, alloc)
    exact = exact_covariance(po, alloc)
    np.testing.assert_allclose(mean, exact.tau, atol=1e-10)
    np.testing.assert_allclose(cov, exact.exact_cov, atol=1e-10)


def test_additive_outcomes_have_no_heterogeneity_term():
    base = np.random.default_rng(0).normal(size=(10, 1))
    po = PotentialOutcomes(base + np.array([0.0, 1.0, 2.0, 4.0]))
    report = exact_covariance(po, [3, 3, 2, 2])
    # unit-level means still vary, so only the effect block vanishes
    np.testing.assert_allclose(report.heterogeneity_term[1:, 1:], 0.0, atol=1e-12)
    assert report.heterogeneity_term[0, 0] > 0


def test_estimate_from_full_assignment_is_weighted():
    po = _po(3, 8, J=2, blocks=[0] * 4 + [1] * 4)
    t = np.array([1, 2, 1, 2, 1, 1, 2, 2])
    est = estimate_from_assignment(po, t)
    y = po.outcomes[np.arange(8), t - 1]
    diff = [y[1] + y[3] - y[0] - y[2], y[6] + y[7] - y[4] - y[5]]
    assert est[1] == pytest.approx(0.5 * diff[0] / 2 + 0.5 * diff[1] / 2)


def test_monte_carlo_is_reproducible_and_unbiased():
    po = _po(4, 40, J=8)
    alloc = [5] * 8
    a = monte_carlo(po, alloc, replicates=4000, seed=9)
    b = monte_carlo(po, alloc, replicates=4000, seed=9)
    np.testing.assert_array_equal(a.empirical_cov, b.empirical_cov)
    assert a.unbiased(4.0).all()
    np.testing.assert_allclose(a.tau, population_effects(po))
    assert a.heterogeneity_min_eigenvalue() >= -1e-9


def test_monte_carlo_blocked_covariance_close_to_exact():
    po = _po(5, 30, blocks=[0] * 12 + [1] * 18)
    alloc = np.array([[3, 3, 3, 3], [5, 4, 5, 4]])
    rep = monte_carlo(po, alloc, replicates=20000, seed=1)
    assert rep.unbiased(4.0).all()
    # sampling error of a variance estimate at R = 2e4 is about 1%
    np.testing.assert_allclose(np.diag(rep.empirical_cov), np.diag(rep.exact_cov), rtol=0.05)
