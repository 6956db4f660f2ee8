"""Contrast machinery for 2^K factorial designs.

Treatment combinations are numbered lexicographically: the bit pattern
``z_1 z_2 ... z_K`` of combination ``j`` is the binary representation of
``j - 1`` with factor 1 as the most significant bit.  Indices are 1-based at
the API boundary (``treatment_index``) and 0-based for array positions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_FACTORS = 16


class Criterion(str, enum.Enum):
    A = "A"
    D = "D"
    E = "E"

    @classmethod
    def parse(cls, value) -> "Criterion":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown optimality criterion {value!r}; expected A, D or E") from None


def _n_factors(J: int) -> int:
    K = int(J).bit_length() - 1
    if J < 2 or 2**K != J:
        raise ValueError(f"number of treatments must be a power of two >= 2, got {J}")
    return K


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignSpec:
    """Problem statement for an integer allocation.

    ``lower`` and ``upper`` default to 2 units per arm and ``N`` units per arm.
    """

    K: int
    N: int
    criterion: Criterion = Criterion.A
    lower: Optional[Sequence[int]] = None
    upper: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.K < 1 or self.K > MAX_FACTORS:
            raise ValueError(f"K must be in 1..{MAX_FACTORS}")
        if self.N < 1:
            raise ValueError("N must be positive")
        object.__setattr__(self, "criterion", Criterion.parse(self.criterion))
        J = self.J
        lower = np.full(J, 2, dtype=np.int64) if self.lower is None else _int_vector(self.lower, J, "lower")
        upper = np.full(J, self.N, dtype=np.int64) if self.upper is None else _int_vector(self.upper, J, "upper")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if np.any(lower < 0) or np.any(lower > upper) or np.any(upper > self.N):
            raise InfeasibleError("bounds must satisfy 0 <= lower <= upper <= N")
        if lower.sum() > self.N or upper.sum() < self.N:
            raise InfeasibleError(
                f"no allocation of N={self.N} fits the bounds "
                f"(sum lower={int(lower.sum())}, sum upper={int(upper.sum())})"
            )

    @property
    def J(self) -> int:
        return 2**self.K


@dataclass(frozen=True)
class VarianceSpec:
    """Per-treatment finite-population variances.

    ``variances`` is a length-J vector for a completely randomized design, or an
    H x J matrix (one row per block) together with ``block_sizes``.
    """

    variances: np.ndarray
    block_sizes: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.array(self.variances, dtype=float)
        if v.ndim not in (1, 2):
            raise ValueError("variances must be a vector or an H x J matrix")
        _n_factors(v.shape[-1])
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("variances must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)
        if v.ndim == 2:
            if self.block_sizes is None:
                raise ValueError("block variances need block_sizes")
            m = np.array(self.block_sizes, dtype=np.int64)
            if m.shape != (v.shape[0],) or np.any(m < 1):
                raise ValueError("block_sizes must hold one positive size per block row")
            m.setflags(write=False)
            object.__setattr__(self, "block_sizes", m)
        elif self.block_sizes is not None:
            raise ValueError("block_sizes given for a vector of CRD variances")

    @property
    def is_block(self) -> bool:
        return self.variances.ndim == 2

    @property
    def J(self) -> int:
        return self.variances.shape[-1]

    @property
    def K(self) -> int:
        return _n_factors(self.J)

    @property
    def H(self) -> int:
        return self.variances.shape[0] if self.is_block else 1

    @property
    def N(self) -> Optional[int]:
        return int(self.block_sizes.sum()) if self.is_block else None

    @property
    def block_weights(self) -> np.ndarray:
        """Squared share of the units held by each block."""
        m = self.block_sizes.astype(float)
        return (m / m.sum()) ** 2


@dataclass(frozen=True)
class PotentialOutcomes:
    """N x J matrix of potential outcomes with optional 0-based block labels."""

    outcomes: np.ndarray
    blocks: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.array(self.outcomes, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise ValueError("potential outcomes must be a non-empty N x J matrix")
        _n_factors(y.shape[1])
        y.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        if self.blocks is not None:
            b = np.array(self.blocks)
            if b.shape != (y.shape[0],):
                raise ValueError("need exactly one block label per unit")
            _, codes = np.unique(b, return_inverse=True)
            codes = codes.astype(np.int64)
            codes.setflags(write=False)
            object.__setattr__(self, "blocks", codes)

    @property
    def N(self) -> int:
        return self.outcomes.shape[0]

    @property
    def J(self) -> int:
        return self.outcomes.shape[1]

    @property
    def K(self) -> int:
        return _n_factors(self.J)

    @property
    def H(self) -> int:
        return 1 if self.blocks is None else int(self.blocks.max()) + 1

    @property
    def block_sizes(self) -> Optional[np.ndarray]:
        return None if self.blocks is None else np.bincount(self.blocks)

    def block(self, h: int) -> "PotentialOutcomes":
        return PotentialOutcomes(self.outcomes[self.blocks == h])


class InfeasibleError(ValueError):
    """The bound or capacity constraints admit no allocation."""


def _int_vector(x, J, name):
    a = np.array(x)
    if a.ndim == 0:
        a = np.full(J, a)
    if a.shape != (J,):
        raise ValueError(f"{name} must have length {J}")
    if not np.all(a == np.round(a)):
        raise ValueError(f"{name} must be integers")
    return a.astype(np.int64)


# ---------------------------------------------------------------------------
# Indexing and contrasts
# ---------------------------------------------------------------------------


def treatment_index(z: Sequence[int]) -> int:
    """1-based index of the treatment combination with factor levels ``z``."""
    j = 0
    for bit in z:
        if bit not in (0, 1):
            raise ValueError(f"factor levels must be 0 or 1, got {bit!r}")
        j = 2 * j + int(bit)
    return j + 1


def treatment_bits(j: int, K: int) -> tuple:
    """Inverse of :func:`treatment_index`."""
    if not 1 <= j <= 2**K:
        raise ValueError(f"treatment index {j} out of range 1..{2**K}")
    return tuple((j - 1) >> (K - 1 - k) & 1 for k in range(K))


def treatment_label(j: int, K: int) -> str:
    return "".join(str(b) for b in treatment_bits(j, K))


def build_contrast_matrix(K: int) -> np.ndarray:
    """J x J matrix of +/-1 contrast coefficients.

    Column ``s`` corresponds to the factor subset whose bitmask is ``s`` (factor 1
    is the most significant bit), so column 0 is the grand mean, the main effect of
    factor k sits at column ``2**(K-k)``, and interaction columns are elementwise
    products of their main-effect columns.  Row ``j-1`` is the coefficient pattern
    of treatment combination ``j``.
    """
    if not isinstance(K, (int, np.integer)) or not 1 <= K <= MAX_FACTORS:
        raise ValueError(f"K must be an integer in 1..{MAX_FACTORS}")
    J = 2**K
    rows = np.arange(J)[:, None]
    subsets = np.arange(J)[None, :]
    # a factor at level 0 inside the subset flips the sign once
    zeros_in_subset = np.bitwise_and(~rows, subsets)
    parity = np.zeros((J, J), dtype=np.int64)
    for k in range(K):
        parity ^= (zeros_in_subset >> k) & 1
    return (1 - 2 * parity).astype(np.int64)


def effect_names(K: int) -> list:
    """Labels of the L columns: ``mean``, ``F1``, ``F2``, ``F1:F2``, ..."""
    names = []
    for s in range(2**K):
        factors = [f"F{k + 1}" for k in range(K) if s >> (K - 1 - k) & 1]
        names.append(":".join(factors) if factors else "mean")
    return names


def _effects_from_means(means: np.ndarray, K: int) -> np.ndarray:
    L = build_contrast_matrix(K)
    return L.T @ means / 2 ** (K - 1)


def population_effects(po: PotentialOutcomes) -> np.ndarray:
    """Effects of the column means, scaled by 2^-(K-1); element 0 is twice the grand mean."""
    if not isinstance(po, PotentialOutcomes):
        po = PotentialOutcomes(po)
    return _effects_from_means(po.outcomes.mean(axis=0), po.K)


def unit_effects(po: PotentialOutcomes) -> np.ndarray:
    """N x J matrix of unit-level effect vectors tau_i."""
    if not isinstance(po, PotentialOutcomes):
        po = PotentialOutcomes(po)
    L = build_contrast_matrix(po.K)
    return po.outcomes @ L / 2 ** (po.K - 1)


def means_from_effects(tau: np.ndarray) -> np.ndarray:
    """Invert the effect transform: Ybar = L tau / 2."""
    tau = np.asarray(tau, dtype=float)
    L = build_contrast_matrix(_n_factors(tau.shape[-1]))
    return L @ tau / 2


def _group_observations(treatments, outcomes, J):
    t = np.asarray(treatments, dtype=np.int64)
    y = np.asarray(outcomes, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("treatments and outcomes must be equal-length vectors")
    if np.any(t < 1) or np.any(t > J):
        raise ValueError(f"treatment codes must lie in 1..{J}")
    return t - 1, y


def estimate_effects(treatments: Sequence[int], outcomes: Sequence[float], K: int) -> np.ndarray:
    """Unbiased effect estimate from observed (1-based treatment, outcome) pairs."""
    J = 2**K
    t, y = _group_observations(treatments, outcomes, J)
    counts = np.bincount(t, minlength=J)
    if np.any(counts == 0):
        empty = [j + 1 for j in np.flatnonzero(counts == 0)]
        raise ValueError(f"treatment groups {empty} have no observations")
    means = np.bincount(t, weights=y, minlength=J) / counts
    return _effects_from_means(means, K)


def finite_population_variances(po: PotentialOutcomes) -> VarianceSpec:
    """Column variances with divisor n - 1, computed per block when blocks are present."""
    if not isinstance(po, PotentialOutcomes):
        po = PotentialOutcomes(po)
    if po.blocks is None:
        if po.N < 2:
            raise ValueError("finite-population variances need N >= 2")
        return VarianceSpec(po.outcomes.var(axis=0, ddof=1))
    sizes = po.block_sizes
    if np.any(sizes < 2):
        raise ValueError("every block needs at least 2 units")
    rows = [po.outcomes[po.blocks == h].var(axis=0, ddof=1) for h in range(po.H)]
    return VarianceSpec(np.vstack(rows), block_sizes=sizes)


def sample_variances(treatments: Sequence[int], outcomes: Sequence[float], K: int) -> VarianceSpec:
    """Per-group sample variances with divisor (group size - 1)."""
    J = 2**K
    t, y = _group_observations(treatments, outcomes, J)
    counts = np.bincount(t, minlength=J)
    if np.any(counts < 2):
        short = [j + 1 for j in np.flatnonzero(counts < 2)]
        raise ValueError(f"treatment groups {short} have fewer than 2 observations")
    out = np.empty(J)
    for j in range(J):
        out[j] = y[t == j].var(ddof=1)
    return VarianceSpec(out)


def group_variances(data, mode: str = "sample", K: Optional[int] = None) -> VarianceSpec:
    """Dispatch between finite-population and observed-sample variances.

    ``mode="finite-population"`` takes a :class:`PotentialOutcomes` (or matrix);
    ``mode="sample"`` takes a ``(treatments, outcomes)`` pair and ``K``.
    """
    if mode == "finite-population":
        return finite_population_variances(data)
    if mode == "sample":
        if K is None:
            raise ValueError("sample mode needs K")
        treatments, outcomes = data
        return sample_variances(treatments, outcomes, K)
    raise ValueError(f"unknown variance mode {mode!r}")


# ---------------------------------------------------------------------------
# Criterion matrices
# ---------------------------------------------------------------------------


def _cell_counts(vs: VarianceSpec, alloc) -> np.ndarray:
    n = np.asarray(alloc, dtype=float)
    if n.shape != vs.variances.shape:
        raise ValueError(f"allocation shape {n.shape} does not match variances {vs.variances.shape}")
    if np.any(n <= 0):
        raise ValueError("every treatment (cell) needs a positive count")
    return n


def diagonal_terms(vs: VarianceSpec, alloc) -> np.ndarray:
    """Variance over count per arm; for blocks, the block-weight sum of the per-cell ratios."""
    n = _cell_counts(vs, alloc)
    if not vs.is_block:
        return vs.variances / n
    return (vs.block_weights[:, None] * vs.variances / n).sum(axis=0)


def criterion_matrix(vs: VarianceSpec, alloc) -> np.ndarray:
    """Contrast-weighted matrix with :func:`diagonal_terms` on its diagonal before the contrast rotation."""
    L = build_contrast_matrix(vs.K).astype(float)
    return L.T @ (diagonal_terms(vs, alloc)[:, None] * L)


def eigenvalues(vs: VarianceSpec, alloc) -> np.ndarray:
    """Closed-form spectrum J * d_j of the criterion matrix (unsorted)."""
    return vs.J * diagonal_terms(vs, alloc)


def criterion_value(vs: VarianceSpec, alloc, criterion) -> float:
    """A: trace; D: log-determinant; E: largest eigenvalue."""
    criterion = Criterion.parse(criterion)
    d = diagonal_terms(vs, alloc)
    J = vs.J
    # correctly rounded sums, so allocations that tie mathematically tie in floating point
    if criterion is Criterion.A:
        return J * math.fsum(d)
    if criterion is Criterion.E:
        return float(J * d.max())
    if np.any(d == 0):
        raise ValueError("D criterion is undefined when a variance is zero")
    if not vs.is_block:
        # log variances and log counts summed separately: permuting counts between arms then leaves the value unchanged
        return J * math.log(J) + math.fsum(np.log(vs.variances)) - math.fsum(np.log(_cell_counts(vs, alloc)))
    return J * math.log(J) + math.fsum(np.log(d))


# ---------------------------------------------------------------------------
# Structural conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    """Which structural conditions hold; ``None`` means not decidable from the input."""

    homoscedastic: bool
    strictly_additive: Optional[bool] = None
    within_block_homoscedastic: Optional[bool] = None
    between_block_homoscedastic: Optional[bool] = None
    tol: float = 1e-9

    @property
    def WBH(self):
        return self.within_block_homoscedastic

    @property
    def BBH(self):
        return self.between_block_homoscedastic

    def holding(self) -> list:
        names = {
            "homoscedastic": self.homoscedastic,
            "strictly_additive": self.strictly_additive,
            "WBH": self.within_block_homoscedastic,
            "BBH": self.between_block_homoscedastic,
        }
        return [k for k, v in names.items() if v]


def _all_equal(values: np.ndarray, tol: float, axis=None) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    hi = values.max(axis=axis)
    lo = values.min(axis=axis)
    scale = np.maximum(np.abs(hi), np.abs(lo))
    return hi - lo <= tol * scale


def check_conditions(data, tol: float = 1e-9) -> ConditionReport:
    """Test homoscedasticity, strict additivity and the two block conditions.

    ``data`` may be a :class:`PotentialOutcomes` (all applicable flags decided) or
    a :class:`VarianceSpec` (strict additivity left undecided).
    """
    if isinstance(data, PotentialOutcomes):
        po = data
        vs = finite_population_variances(po) if po.N >= 2 else None
        diffs = po.outcomes - po.outcomes[:, :1]
        scale = np.abs(po.outcomes).max()
        additive = bool(np.all(diffs.max(axis=0) - diffs.min(axis=0) <= tol * scale))
        if vs is None:
            return ConditionReport(True, additive, tol=tol)
        pooled = finite_population_variances(PotentialOutcomes(po.outcomes)).variances
        homo = bool(_all_equal(pooled, tol))
        wbh = bbh = None
        if vs.is_block:
            wbh = bool(np.all(_all_equal(vs.variances, tol, axis=1)))
            bbh = bool(np.all(_all_equal(vs.variances, tol, axis=0)))
        return ConditionReport(homo, additive, wbh, bbh, tol)
    vs = data if isinstance(data, VarianceSpec) else VarianceSpec(data)
    if vs.is_block:
        wbh = bool(np.all(_all_equal(vs.variances, tol, axis=1)))
        bbh = bool(np.all(_all_equal(vs.variances, tol, axis=0)))
        return ConditionReport(bool(_all_equal(vs.variances, tol)), None, wbh, bbh, tol)
    return ConditionReport(bool(_all_equal(vs.variances, tol)), None, tol=tol)
