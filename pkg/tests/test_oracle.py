import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from factorial_alloc import (
    DesignSpec,
    OracleCapExceeded,
    VarianceSpec,
    count_compositions,
    criterion_value,
    enumerate_block,
    enumerate_crd,
    greedy_block,
)
from factorial_alloc.oracle import compositions, iter_compositions


def _brute(total, lower, upper):
    ranges = [range(lo, hi + 1) for lo, hi in zip(lower, upper)]
    return [c for c in itertools.product(*ranges) if sum(c) == total]


@given(
    st.integers(0, 25),
    st.lists(st.tuples(st.integers(0, 4), st.integers(0, 12)), min_size=1, max_size=4),
)
def test_composition_count_matches_brute_force(total, bounds):
    lower = [lo for lo, _ in bounds]
    upper = [lo + w for lo, w in bounds]
    brute = _brute(total, lower, upper)
    assert count_compositions(total, lower, upper) == len(brute)
    assert [tuple(r) for r in compositions(total, lower, upper)] == brute


def test_chunked_iteration_is_lexicographic():
    chunks = list(iter_compositions(30, [2] * 4, [30] * 4, chunk_rows=50))
    assert len(chunks) > 1
    rows = [tuple(r) for r in np.vstack(chunks)]
    assert rows == sorted(rows)
    assert len(rows) == count_compositions(30, [2] * 4, [30] * 4)


def test_stars_and_bars():
    # nonnegative compositions of 10 into 4 parts
    assert count_compositions(10, [0] * 4, [10] * 4) == 286


def test_crd_finds_every_tie():
    # four identical arms and 10 units: two arms get 3, two get 2
    opt = enumerate_crd(VarianceSpec([1.0] * 4), DesignSpec(2, 10, "A"))
    assert len(opt.optima) == 6
    assert all(sorted(o.counts.tolist()) == [2, 2, 3, 3] for o in opt.optima)


def test_crd_value_is_minimum():
    vs = VarianceSpec([0.5, 2.0, 3.0, 7.0])
    spec = DesignSpec(2, 24, "E")
    opt = enumerate_crd(vs, spec)
    values = [criterion_value(vs, c, "E") for c in compositions(24, spec.lower, spec.upper)]
    assert opt.value == pytest.approx(min(values))
    assert opt.enumerated == len(values)


def test_workers_give_identical_result():
    vs = VarianceSpec(np.linspace(0.5, 4, 8))
    spec = DesignSpec(3, 30, "D")
    a = enumerate_crd(vs, spec)
    b = enumerate_crd(vs, spec, workers=4)
    assert a.count_arrays() == b.count_arrays()


def test_cap():
    with pytest.raises(OracleCapExceeded) as info:
        enumerate_crd(VarianceSpec([1.0] * 8), DesignSpec(3, 60, "A"), cap=1000)
    assert info.value.size > 1000
    vs = VarianceSpec([[1.0] * 4] * 2, block_sizes=[40, 40])
    with pytest.raises(OracleCapExceeded):
        enumerate_block(vs, "E", cap=10)


TWO_BLOCK_E_OPTIMA = {
    4: [
        [[4, 8, 11, 17], [2, 3, 5, 10]],
        [[4, 7, 11, 18], [2, 4, 5, 9]],
        [[3, 8, 11, 18], [3, 3, 5, 9]],
        [[3, 7, 11, 19], [3, 4, 5, 8]],
    ],
    5: [
        [[6, 10, 11, 13], [13, 11, 10, 6]],
        [[6, 9, 12, 13], [13, 12, 9, 6]],
    ],
}


@pytest.mark.slow
@pytest.mark.parametrize("setting", [4, 5])
def test_two_block_e_optimal_sets(setting):
    s2 = [[1, 2, 3, 5]] * 2 if setting == 4 else [[1, 2, 3, 4], [4, 3, 2, 1]]
    sizes = [40, 20] if setting == 4 else [40, 40]
    vs = VarianceSpec(np.array(s2, float), block_sizes=sizes)
    opt = enumerate_block(vs, "E")
    assert sorted(opt.count_arrays()) == sorted(TWO_BLOCK_E_OPTIMA[setting])
    assert opt.contains(greedy_block(vs, "E").counts)


def test_block_d_small_against_brute_force():
    vs = VarianceSpec(np.array([[1.0, 3.0], [2.0, 0.5], [1.5, 1.5]]), block_sizes=[7, 6, 8])
    opt = enumerate_block(vs, "D", lower=1)
    rows = [compositions(int(m), [1, 1], [int(m)] * 2) for m in vs.block_sizes]
    values = [criterion_value(vs, np.stack(c), "D") for c in itertools.product(*rows)]
    assert opt.value == pytest.approx(min(values))
    assert opt.enumerated == len(values)


def test_block_a_product_of_per_block_optima():
    vs = VarianceSpec(np.array([[1.0, 1.0], [1.0, 4.0]]), block_sizes=[5, 6])
    opt = enumerate_block(vs, "A", lower=1)
    # block 1 ties between (2, 3) and (3, 2); block 2 is (2, 4)
    assert sorted(opt.count_arrays()) == [[[2, 3], [2, 4]], [[3, 2], [2, 4]]]


def test_single_block():
    vs = VarianceSpec(np.array([[1.0, 2.0, 3.0, 4.0]]), block_sizes=[20])
    crd = enumerate_crd(VarianceSpec([1.0, 2.0, 3.0, 4.0]), DesignSpec(2, 20, "E"))
    blk = enumerate_block(vs, "E")
    assert [c[0] for c in blk.count_arrays()] == crd.count_arrays()
