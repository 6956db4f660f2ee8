"""Greedy integer allocation under bound constraints.

Every routine starts from the lower bounds and adds one unit at a time.  Ties are
broken by the smallest index; for blocked problems cells are ordered row-major,
i.e. by block first and treatment second.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exact import AllocationWarning
from .factorial import (
    Criterion,
    DesignSpec,
    InfeasibleError,
    VarianceSpec,
    criterion_value,
    sample_variances,
)


@dataclass(frozen=True)
class IntegerAllocation:
    counts: np.ndarray
    criterion: Criterion
    criterion_value: float
    iterations: int = 0
    saturated: tuple = field(default=())

    def __eq__(self, other):
        if not isinstance(other, IntegerAllocation):
            return NotImplemented
        return (
            self.criterion is other.criterion
            and np.array_equal(self.counts, other.counts)
            and self.criterion_value == other.criterion_value
        )

    __hash__ = None


def _first_min(values: np.ndarray, active: np.ndarray) -> int:
    masked = np.where(active, values, np.inf)
    return int(np.argmin(masked))


def _first_max(values: np.ndarray, active: np.ndarray) -> int:
    masked = np.where(active, values, -np.inf)
    return int(np.argmax(masked))


def _crd_increments(s2: np.ndarray, n: np.ndarray, criterion: Criterion) -> np.ndarray:
    # f(n+1) - f(n) in closed form so that arms in identical states tie exactly
    if criterion is Criterion.A:
        return -s2 / (n * (n + 1.0))
    return np.log(n / (n + 1.0))


def _check_variances(s2, criterion):
    if criterion is Criterion.D and np.any(s2 == 0):
        raise ValueError("D criterion is undefined when a variance is zero")
    if criterion is not Criterion.D and np.any(s2 == 0):
        warnings.warn(
            "zero-variance arms receive no units beyond their lower bound",
            AllocationWarning,
            stacklevel=3,
        )


def greedy_crd(vs: VarianceSpec, spec: DesignSpec) -> IntegerAllocation:
    """Dispatch to the separable (A, D) or E greedy for a completely randomized design."""
    if spec.criterion is Criterion.E:
        return greedy_crd_e(vs, spec)
    return greedy_crd_separable(vs, spec)


def greedy_crd_separable(vs: VarianceSpec, spec: DesignSpec) -> IntegerAllocation:
    """Marginal-gain greedy for a sum of per-arm terms; globally optimal for A and D."""
    criterion = spec.criterion
    if criterion is Criterion.E:
        raise ValueError("E-optimality is not separable; use greedy_crd_e")
    s2 = _crd_variances(vs, spec)
    _check_variances(s2, criterion)
    n = spec.lower.astype(np.int64).copy()
    upper = spec.upper
    active = np.ones(spec.J, dtype=bool)
    steps = 0
    while n.sum() != spec.N and active.any():
        delta = _crd_increments(s2, n.astype(float), criterion)
        j = _first_min(delta, active)
        if n[j] + 1 <= upper[j]:
            n[j] += 1
            steps += 1
        else:
            active[j] = False
    return _finish(vs, spec, n, steps)


def greedy_crd_e(vs: VarianceSpec, spec: DesignSpec) -> IntegerAllocation:
    """Give the next unit to the arm with the largest current variance-to-count ratio."""
    if spec.criterion is not Criterion.E:
        raise ValueError("greedy_crd_e needs criterion E")
    s2 = _crd_variances(vs, spec)
    _check_variances(s2, Criterion.E)
    n = spec.lower.astype(np.int64).copy()
    upper = spec.upper
    active = np.ones(spec.J, dtype=bool)
    steps = 0
    while n.sum() != spec.N and active.any():
        with np.errstate(divide="ignore"):
            f = np.where(n > 0, s2 / np.maximum(n, 1), np.inf)
        j = _first_max(f, active)
        if n[j] + 1 <= upper[j]:
            n[j] += 1
            steps += 1
        else:
            active[j] = False
    return _finish(vs, spec, n, steps)


def _crd_variances(vs, spec):
    if vs.is_block:
        raise ValueError("CRD greedy needs a vector of variances")
    if vs.J != spec.J:
        raise ValueError(f"variances describe {vs.J} treatments, design has {spec.J}")
    return vs.variances


def _finish(vs, spec, n, steps):
    assert steps <= spec.N - int(spec.lower.sum())
    if n.sum() != spec.N:
        raise InfeasibleError("greedy stopped before placing all units")
    value = criterion_value(vs, n, spec.criterion) if np.all(n > 0) else np.inf
    saturated = tuple(int(j) for j in np.flatnonzero(n == spec.upper))
    return IntegerAllocation(n, spec.criterion, value, steps, saturated)


# ---------------------------------------------------------------------------
# Blocked designs
# ---------------------------------------------------------------------------


def _block_bounds(vs: VarianceSpec, lower, upper):
    H, J = vs.variances.shape
    m = vs.block_sizes
    lo = np.broadcast_to(np.asarray(2 if lower is None else lower, dtype=np.int64), (H, J)).copy()
    if upper is None:
        hi = np.repeat(m[:, None], J, axis=1).astype(np.int64)
    else:
        hi = np.broadcast_to(np.asarray(upper, dtype=np.int64), (H, J)).copy()
    if np.any(lo < 0) or np.any(lo > hi):
        raise InfeasibleError("cell bounds must satisfy 0 <= lower <= upper")
    if np.any(lo.sum(axis=1) > m) or np.any(np.minimum(hi, m[:, None]).sum(axis=1) < m):
        raise InfeasibleError("some block cannot be filled within its cell bounds")
    return lo, hi


def greedy_block(vs: VarianceSpec, criterion, lower=2, upper=None) -> IntegerAllocation:
    """Greedy allocation of each block's units to the J treatments.

    A runs the separable greedy independently in every block.  D repeatedly
    picks the cell (h, j) whose extra unit lowers the log aggregate variance of its treatment the most.  E picks
    the treatment with the largest aggregate variance and gives it a unit in the
    block where that unit helps most.  Full blocks and cells at their upper bound
    drop out of the candidate set.
    """
    criterion = Criterion.parse(criterion)
    if not vs.is_block:
        raise ValueError("greedy_block needs an H x J matrix of block variances")
    lo, hi = _block_bounds(vs, lower, upper)
    if criterion is not Criterion.A and np.any(lo < 1):
        raise ValueError("D and E block greedy need a lower bound of at least 1 per cell")
    s2 = vs.variances
    if criterion is Criterion.D and np.any(s2 == 0):
        raise ValueError("D criterion is undefined when a cell variance is zero")
    if criterion is not Criterion.D and np.any(s2 == 0):
        warnings.warn("zero-variance cells receive no units beyond their lower bound", AllocationWarning, stacklevel=2)
    m = vs.block_sizes
    w = vs.block_weights[:, None] * s2
    if criterion is Criterion.A:
        n, steps = _block_a(w, m, lo, hi)
    elif criterion is Criterion.D:
        n, steps = _block_d(w, m, lo, hi)
    else:
        n, steps = _block_e(w, m, lo, hi)
    assert steps <= int(m.sum() - lo.sum())
    if np.any(n.sum(axis=1) != m):
        raise InfeasibleError("greedy stopped before filling every block")
    value = criterion_value(vs, n, criterion) if np.all(n > 0) else np.inf
    saturated = tuple((int(h), int(j)) for h, j in zip(*np.nonzero(n == hi)))
    return IntegerAllocation(n, criterion, value, steps, saturated)


def _block_a(w, m, lo, hi):
    n = lo.copy()
    steps = 0
    for h in range(len(m)):
        active = np.ones(n.shape[1], dtype=bool)
        while n[h].sum() != m[h] and active.any():
            k = n[h].astype(float)
            delta = -w[h] / (k * (k + 1.0))
            j = _first_min(delta, active)
            if n[h, j] + 1 <= hi[h, j]:
                n[h, j] += 1
                steps += 1
            else:
                active[j] = False
    return n, steps


def _aggregate(w, n):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(n > 0, w / np.maximum(n, 1), np.where(w > 0, np.inf, 0.0))
    return terms.sum(axis=0)


def _block_d(w, m, lo, hi):
    n = lo.copy()
    active = np.ones(n.shape, dtype=bool)
    total = int(m.sum())
    steps = 0
    H = n.shape[0]
    bump = np.eye(H, dtype=np.int64)[:, :, None]
    while n.sum() != total and active.any():
        # candidate[h] is the aggregate S2blk after adding one unit to every cell of block h;
        # delta is the literal difference of logs so exact ties resolve the same way
        # as the published tables
        candidate = (w[None, :, :] / (n[None, :, :] + bump)).sum(axis=1)
        delta = np.log(candidate) - np.log(_aggregate(w, n))[None, :]
        flat = _first_min(delta.ravel(), active.ravel())
        h, j = divmod(flat, n.shape[1])
        if n[h].sum() < m[h]:
            if n[h, j] < hi[h, j]:
                n[h, j] += 1
                steps += 1
            else:
                active[h, j] = False
        else:
            active[h, :] = False
    return n, steps


def _block_e(w, m, lo, hi):
    n = lo.copy()
    active = np.ones(n.shape, dtype=bool)
    total = int(m.sum())
    steps = 0
    while n.sum() != total and active.any():
        agg = _aggregate(w, n)
        j = _first_max(agg, active.any(axis=0))
        k = n[:, j].astype(float)
        delta = -w[:, j] / (k * (k + 1.0))
        h = _first_min(delta, active[:, j])
        if n[h].sum() < m[h]:
            if n[h, j] < hi[h, j]:
                n[h, j] += 1
                steps += 1
            else:
                active[h, j] = False
        else:
            active[h, :] = False
    return n, steps


def greedy_block_from_pilot(blocks, treatments, outcomes, K: int, block_sizes, criterion, lower=2, upper=None):
    """Estimate per-block sample variances from pilot data, then run :func:`greedy_block`.

    ``blocks`` labels are matched to ``block_sizes`` in sorted label order.
    """
    b = np.asarray(blocks)
    t = np.asarray(treatments)
    y = np.asarray(outcomes, dtype=float)
    labels = np.unique(b)
    if len(labels) != len(block_sizes):
        raise ValueError(f"pilot data has {len(labels)} blocks but {len(block_sizes)} sizes were given")
    rows = [sample_variances(t[b == lab], y[b == lab], K).variances for lab in labels]
    vs = VarianceSpec(np.vstack(rows), block_sizes=np.asarray(block_sizes))
    return greedy_block(vs, criterion, lower=lower, upper=upper)
