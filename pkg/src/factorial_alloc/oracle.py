"""Exhaustive search over bounded integer allocations.

Brute force on purpose: every feasible allocation is visited in lexicographic
order, so the returned optimal sets can certify the greedy routines.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterator, Optional

import numpy as np

from .factorial import Criterion, DesignSpec, InfeasibleError, VarianceSpec, criterion_value
from .greedy import IntegerAllocation

DEFAULT_CAP = 10**8
TIE_RTOL = 1e-12
_CHUNK_ROWS = 1 << 16


class OracleCapExceeded(RuntimeError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"state space has {size} allocations, above the cap of {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class OptimalSet:
    optima: list
    value: float
    enumerated: int

    def contains(self, counts) -> bool:
        counts = np.asarray(counts)
        return any(np.array_equal(opt.counts, counts) for opt in self.optima)

    def count_arrays(self) -> list:
        return [opt.counts.tolist() for opt in self.optima]


# ---------------------------------------------------------------------------
# Bounded compositions
# ---------------------------------------------------------------------------


def count_compositions(total: int, lower, upper) -> int:
    """Number of integer vectors with the given sum and bounds (inclusion-exclusion)."""
    lower = [int(x) for x in lower]
    upper = [int(x) for x in upper]
    J = len(lower)
    r = total - sum(lower)
    widths = [u - l + 1 for l, u in zip(lower, upper)]
    if r < 0 or any(w <= 0 for w in widths):
        return 0
    count = 0
    for size in range(J + 1):
        for subset in itertools.combinations(range(J), size):
            rest = r - sum(widths[j] for j in subset)
            if rest >= 0:
                count += (-1) ** size * comb(rest + J - 1, J - 1)
    return count


def _suffix_counts(total, lower, upper):
    """table[k][s]: number of ways parts k.. sum to s."""
    J = len(lower)
    table = np.zeros((J + 1, total + 1), dtype=object)
    table[J][0] = 1
    for k in range(J - 1, -1, -1):
        for s in range(total + 1):
            hi = min(int(upper[k]), s)
            table[k][s] = sum(table[k + 1][s - v] for v in range(int(lower[k]), hi + 1))
    return table


def iter_compositions(total: int, lower, upper, chunk_rows: int = _CHUNK_ROWS) -> Iterator[np.ndarray]:
    """Yield all bounded compositions as int arrays, lexicographically, in chunks."""
    lower = np.asarray(lower, dtype=np.int64)
    upper = np.minimum(np.asarray(upper, dtype=np.int64), total)
    J = len(lower)
    table = _suffix_counts(total, lower, upper)

    @lru_cache(maxsize=None)
    def block(k: int, s: int) -> np.ndarray:
        if k == J - 1:
            if lower[k] <= s <= upper[k]:
                return np.array([[s]], dtype=np.int64)
            return np.empty((0, 1), dtype=np.int64)
        parts = []
        for v in range(int(lower[k]), int(min(upper[k], s)) + 1):
            tail = block(k + 1, s - v)
            if len(tail):
                parts.append(np.hstack([np.full((len(tail), 1), v, dtype=np.int64), tail]))
        if not parts:
            return np.empty((0, J - k), dtype=np.int64)
        return np.vstack(parts)

    def walk(prefix: tuple, k: int, s: int):
        if table[k][s] == 0:
            return
        if k == J or table[k][s] <= chunk_rows:
            tail = block(k, s) if k < J else np.empty((1, 0), dtype=np.int64)
            head = np.broadcast_to(np.array(prefix, dtype=np.int64), (len(tail), len(prefix)))
            yield np.hstack([head, tail])
            return
        for v in range(int(lower[k]), int(min(upper[k], s)) + 1):
            yield from walk(prefix + (v,), k + 1, s - v)

    yield from walk((), 0, int(total))


def compositions(total: int, lower, upper) -> np.ndarray:
    chunks = list(iter_compositions(total, lower, upper))
    if not chunks:
        return np.empty((0, len(lower)), dtype=np.int64)
    return np.vstack(chunks)


# ---------------------------------------------------------------------------
# Tie collection
# ---------------------------------------------------------------------------


def _within(values: np.ndarray, best: float) -> np.ndarray:
    return values <= best + TIE_RTOL * max(1.0, abs(best))


class _Collector:
    """Keep every allocation whose value ties the running minimum."""

    def __init__(self):
        self.best = np.inf
        self.rows = []
        self.values = []

    def add(self, counts: np.ndarray, values: np.ndarray):
        if not len(values):
            return
        low = float(values.min())
        if low < self.best:
            self.best = low
        keep = _within(values, self.best)
        if keep.any():
            self.rows.append(counts[keep])
            self.values.append(values[keep])

    def result(self):
        if not self.rows:
            return np.empty((0,)), np.empty((0,))
        rows = np.concatenate(self.rows)
        values = np.concatenate(self.values)
        keep = _within(values, self.best)
        return rows[keep], values[keep]


def _values(terms: np.ndarray, criterion: Criterion, J: int) -> np.ndarray:
    """Criterion values from the per-treatment diagonal terms (last axis = J)."""
    if criterion is Criterion.A:
        return J * terms.sum(axis=-1)
    if criterion is Criterion.E:
        return J * terms.max(axis=-1)
    return J * np.log(J) + np.log(terms).sum(axis=-1)


# ---------------------------------------------------------------------------
# Completely randomized designs
# ---------------------------------------------------------------------------


def enumerate_crd(vs: VarianceSpec, spec: DesignSpec, cap: int = DEFAULT_CAP, workers: int = 1) -> OptimalSet:
    """All minimizers of the criterion over integer counts that sum to N within the bounds.

    With ``workers > 1`` contiguous lexicographic chunks are scored on a thread
    pool; merging in chunk order gives the same result as a sequential run.
    """
    if vs.is_block:
        raise ValueError("enumerate_crd needs CRD variances")
    criterion = spec.criterion
    s2 = vs.variances
    if criterion is Criterion.D and np.any(s2 == 0):
        raise ValueError("D criterion is undefined when a variance is zero")
    size = count_compositions(spec.N, spec.lower, spec.upper)
    if size > cap:
        raise OracleCapExceeded(size, cap)
    J = spec.J

    def score(chunk):
        with np.errstate(divide="ignore"):
            terms = np.where(chunk > 0, s2 / np.maximum(chunk, 1), np.where(s2 > 0, np.inf, 0.0))
        return chunk, _values(terms, criterion, J)

    collector = _Collector()
    chunks = iter_compositions(spec.N, spec.lower, spec.upper)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for counts, values in pool.map(score, chunks):
                collector.add(counts, values)
    else:
        for counts, values in map(score, chunks):
            collector.add(counts, values)
    rows, _ = collector.result()
    if not len(rows):
        raise InfeasibleError("no allocation satisfies the bounds")
    optima = [IntegerAllocation(r, criterion, _exact_value(vs, r, criterion)) for r in rows]
    return OptimalSet(optima, optima[0].criterion_value, size)


def _exact_value(vs, counts, criterion):
    return criterion_value(vs, counts, criterion) if np.all(counts > 0) else float("inf")


# ---------------------------------------------------------------------------
# Blocked designs
# ---------------------------------------------------------------------------


def _block_bounds(vs, lower, upper):
    H, J = vs.variances.shape
    m = vs.block_sizes
    lo = np.broadcast_to(np.asarray(2 if lower is None else lower, dtype=np.int64), (H, J))
    if upper is None:
        hi = np.repeat(m[:, None], J, axis=1)
    else:
        hi = np.broadcast_to(np.asarray(upper, dtype=np.int64), (H, J))
    return lo, hi


def enumerate_block(
    vs: VarianceSpec,
    criterion,
    lower=2,
    upper=None,
    cap: int = DEFAULT_CAP,
    chunk_rows: int = 256,
) -> OptimalSet:
    """All minimizers of the blocked criterion with every block filled exactly.

    A separates across blocks, so each block is searched on its own and the
    optimal set is the product of the per-block optimal sets.  D and E couple
    the blocks and are searched over the full product of per-block compositions.
    """
    criterion = Criterion.parse(criterion)
    if not vs.is_block:
        raise ValueError("enumerate_block needs block variances")
    s2 = vs.variances
    if criterion is Criterion.D and np.any(s2 == 0):
        raise ValueError("D criterion is undefined when a cell variance is zero")
    H, J = s2.shape
    m = vs.block_sizes
    lo, hi = _block_bounds(vs, lower, upper)
    sizes = [count_compositions(int(m[h]), lo[h], hi[h]) for h in range(H)]
    if criterion is Criterion.A:
        space = sum(sizes)
    else:
        space = int(np.prod([int(s) for s in sizes], dtype=object))
    if space > cap:
        raise OracleCapExceeded(space, cap)
    if any(s == 0 for s in sizes):
        raise InfeasibleError("some block cannot be filled within its cell bounds")
    comps = [compositions(int(m[h]), lo[h], hi[h]) for h in range(H)]
    weights = vs.block_weights
    with np.errstate(divide="ignore"):
        terms = [
            np.where(c > 0, weights[h] * s2[h] / np.maximum(c, 1), np.where(s2[h] > 0, np.inf, 0.0))
            for h, c in enumerate(comps)
        ]

    if criterion is Criterion.A:
        per_block = []
        for h in range(H):
            values = terms[h].sum(axis=1)
            per_block.append(comps[h][_within(values, float(values.min()))])
        rows = [np.stack(combo) for combo in itertools.product(*per_block)]
    else:
        rows = _search_coupled(comps, terms, criterion, J, chunk_rows)
    optima = [IntegerAllocation(r, criterion, _exact_value(vs, r, criterion)) for r in rows]
    best = min(o.criterion_value for o in optima)
    return OptimalSet(optima, best, space)


def _search_coupled(comps, terms, criterion, J, chunk_rows):
    H = len(comps)
    collector = _Collector()
    if H == 1:
        collector.add(comps[0][:, None, :], _values(terms[0], criterion, J))
        return list(collector.result()[0])
    outer = itertools.product(*(range(len(c)) for c in comps[:-2])) if H > 2 else [()]
    last, before = comps[-1], comps[-2]
    t_last, t_before = terms[-1], terms[-2]
    for idx in outer:
        base = np.zeros(J)
        for h, i in enumerate(idx):
            base = base + terms[h][i]
        head = [comps[h][i] for h, i in enumerate(idx)]
        for start in range(0, len(before), chunk_rows):
            stop = min(start + chunk_rows, len(before))
            # (rows of block H-1) x (rows of block H) x J
            agg = (base + t_before[start:stop])[:, None, :] + t_last[None, :, :]
            values = _values(agg, criterion, J).ravel()
            keep = _within(values, min(collector.best, float(values.min())))
            if not keep.any():
                continue
            a, b = np.divmod(np.flatnonzero(keep), len(last))
            counts = np.stack(
                [np.broadcast_to(hc, (len(a), J)) for hc in head]
                + [before[start + a], last[b]],
                axis=1,
            )
            collector.add(counts, values[keep])
    rows, _ = collector.result()
    return list(rows)
