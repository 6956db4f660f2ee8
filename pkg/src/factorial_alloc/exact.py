"""Closed-form (continuous) optimal allocations."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .factorial import Criterion, VarianceSpec, check_conditions


class ConditionNotMet(ValueError):
    """No closed form exists for this block problem; use the greedy allocator."""


class AllocationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ExactAllocation:
    """Optimal proportions per arm (vector) or per cell (one row per block)."""

    proportions: np.ndarray
    criterion: Criterion
    conditions_used: tuple = ()

    def counts(self, total) -> np.ndarray:
        """Fractional unit counts: proportions times the total, or times each block size."""
        total = np.asarray(total, dtype=float)
        if self.proportions.ndim == 2:
            return self.proportions * total[:, None]
        return self.proportions * total


@dataclass(frozen=True)
class CostSpec:
    costs: np.ndarray
    budget: float

    def __post_init__(self):
        c = np.array(self.costs, dtype=float)
        if c.ndim != 1 or np.any(~np.isfinite(c)) or np.any(c <= 0):
            raise ValueError("per-unit costs must be a vector of positive numbers")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "budget", float(self.budget))


@dataclass(frozen=True)
class CostAllocation:
    budget_shares: np.ndarray
    integer_counts: np.ndarray
    spent: float
    criterion: Criterion
    warnings: tuple = field(default=())


def _normalize(weights: np.ndarray, what: str) -> np.ndarray:
    total = weights.sum(axis=-1, keepdims=True)
    if np.any(total == 0):
        raise ValueError(f"all {what} are zero; the optimal direction is undefined")
    return weights / total


def _warn_zero(weights, criterion):
    if np.any(weights == 0):
        warnings.warn(
            f"{criterion.value}-optimal allocation gives zero share to zero-variance arms",
            AllocationWarning,
            stacklevel=3,
        )


def exact_crd(vs: VarianceSpec, criterion) -> ExactAllocation:
    """Neyman (A), balanced (D) or variance-proportional (E) allocation."""
    criterion = Criterion.parse(criterion)
    if vs.is_block:
        raise ValueError("exact_crd needs a vector of CRD variances; use exact_block")
    s2 = vs.variances
    if criterion is Criterion.D:
        p = np.full(vs.J, 1.0 / vs.J)
    elif criterion is Criterion.A:
        p = _normalize(np.sqrt(s2), "variances")
        _warn_zero(s2, criterion)
    else:
        p = _normalize(s2, "variances")
        _warn_zero(s2, criterion)
    return ExactAllocation(p, criterion)


def exact_block(vs: VarianceSpec, criterion, tol: float = 1e-9) -> ExactAllocation:
    """Closed-form blocked allocation.

    A is Neyman allocation within each block and always available.  D needs
    within- or between-block homoscedasticity, E needs within-block
    homoscedasticity; otherwise :class:`ConditionNotMet` is raised.
    """
    criterion = Criterion.parse(criterion)
    if not vs.is_block:
        raise ValueError("exact_block needs an H x J matrix of block variances")
    s2 = vs.variances
    if criterion is Criterion.A:
        p = _normalize(np.sqrt(s2), "variances in a block")
        _warn_zero(s2, criterion)
        return ExactAllocation(p, criterion)
    report = check_conditions(vs, tol=tol)
    if criterion is Criterion.D:
        if report.WBH:
            used = ("WBH",)
        elif report.BBH:
            used = ("BBH",)
        else:
            raise ConditionNotMet(
                "D-optimal block allocation has no closed form unless the variances are "
                "within- or between-block homoscedastic; use the greedy allocator"
            )
    else:
        if not report.WBH:
            raise ConditionNotMet(
                "E-optimal block allocation has no closed form unless the variances are "
                "within-block homoscedastic; use the greedy allocator"
            )
        used = ("WBH",)
    p = np.full(s2.shape, 1.0 / vs.J)
    return ExactAllocation(p, criterion, used)


def cost_shares(vs: VarianceSpec, costs, criterion) -> np.ndarray:
    """Share of the budget spent on each arm for the three criteria."""
    criterion = Criterion.parse(criterion)
    c = np.asarray(costs, dtype=float)
    if c.shape != (vs.J,):
        raise ValueError(f"need {vs.J} per-unit costs")
    s2 = vs.variances
    if criterion is Criterion.D:
        return np.full(vs.J, 1.0 / vs.J)
    if criterion is Criterion.A:
        w = np.sqrt(s2) * np.sqrt(c)
    else:
        w = s2 * c
    _warn_zero(w, criterion)
    return _normalize(w, "variances")


def exact_cost(vs: VarianceSpec, cost: CostSpec, criterion) -> CostAllocation:
    """Budget-constrained optimum with floor-rule integer counts.

    Counts are floor(budget * share / unit cost), which never overspends; counts below two are reported in
    ``warnings`` since they leave no degrees of freedom for a variance estimate.
    """
    criterion = Criterion.parse(criterion)
    if vs.is_block:
        raise ValueError("cost allocation is defined for completely randomized designs")
    pi = cost_shares(vs, cost.costs, criterion)
    counts = np.floor(cost.budget * pi / cost.costs + 1e-9).astype(np.int64)
    spent = float(counts @ cost.costs)
    notes = []
    low = np.flatnonzero(counts < 2)
    if low.size:
        msg = f"arms {[int(j) + 1 for j in low]} get fewer than 2 units under the floor rule"
        warnings.warn(msg, AllocationWarning, stacklevel=2)
        notes.append(msg)
    return CostAllocation(pi, counts, spent, criterion, tuple(notes))
