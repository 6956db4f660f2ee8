"""Randomization distribution of the factorial effect estimator.

Exact finite-population covariances, complete enumeration of small
assignment spaces, and seeded Monte Carlo over complete and blocked
randomizations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .factorial import (
    PotentialOutcomes,
    build_contrast_matrix,
    finite_population_variances,
    population_effects,
    unit_effects,
)

RNG_ALGORITHM = f"Philox4x64-10 (numpy {np.__version__}); replicate r uses key=seed, counter=(0, r, 0, 0)"
ENUMERATION_LIMIT = 10**6


@dataclass(frozen=True)
class Assignment:
    """1-based treatment label for every unit."""

    treatments: np.ndarray

    def counts(self, J: int, blocks: Optional[np.ndarray] = None) -> np.ndarray:
        t = self.treatments - 1
        if blocks is None:
            return np.bincount(t, minlength=J)
        H = int(blocks.max()) + 1
        return np.bincount(blocks * J + t, minlength=H * J).reshape(H, J)


@dataclass(frozen=True)
class CovarianceReport:
    tau: np.ndarray
    exact_first_term: np.ndarray
    heterogeneity_term: np.ndarray
    exact_cov: np.ndarray
    empirical_mean: Optional[np.ndarray] = None
    empirical_cov: Optional[np.ndarray] = None
    replicates: int = 0
    seed: Optional[int] = None
    rng: str = RNG_ALGORITHM

    @property
    def standard_errors(self) -> Optional[np.ndarray]:
        if self.empirical_cov is None:
            return None
        return np.sqrt(np.diag(self.empirical_cov) / self.replicates)

    def unbiased(self, k: float = 4.0) -> Optional[np.ndarray]:
        """Componentwise |mean - tau| <= k * SE, with a rounding floor for degenerate components."""
        if self.empirical_mean is None:
            return None
        floor = 1e-12 * np.maximum(1.0, np.abs(self.tau))
        return np.abs(self.empirical_mean - self.tau) <= k * self.standard_errors + floor

    def heterogeneity_min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.heterogeneity_term).min())


def _as_po(po) -> PotentialOutcomes:
    return po if isinstance(po, PotentialOutcomes) else PotentialOutcomes(po)


def _check_alloc(po: PotentialOutcomes, alloc) -> np.ndarray:
    a = np.asarray(alloc)
    if not np.all(a == np.round(a)) or np.any(a < 0):
        raise ValueError("allocation counts must be nonnegative integers")
    a = a.astype(np.int64)
    if po.blocks is None:
        if a.shape != (po.J,):
            raise ValueError(f"CRD allocation needs {po.J} counts")
        if a.sum() != po.N:
            raise ValueError(f"allocation sums to {a.sum()} but the population has {po.N} units")
    else:
        if a.shape != (po.H, po.J):
            raise ValueError(f"blocked allocation needs shape {(po.H, po.J)}")
        sizes = po.block_sizes
        if np.any(a.sum(axis=1) != sizes):
            raise ValueError(f"allocation row sums {a.sum(axis=1).tolist()} differ from block sizes {sizes.tolist()}")
    return a


def _labels(counts: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(1, len(counts) + 1), counts)


def _draw(rng: np.random.Generator, po: PotentialOutcomes, alloc: np.ndarray) -> np.ndarray:
    t = np.empty(po.N, dtype=np.int64)
    if po.blocks is None:
        t[rng.permutation(po.N)] = _labels(alloc)
        return t
    for h in range(po.H):
        units = np.flatnonzero(po.blocks == h)
        t[units[rng.permutation(len(units))]] = _labels(alloc[h])
    return t


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate, addressable without drawing earlier ones."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, int(replicate), 0, 0]))


def draw_assignment(po, alloc, seed: int, replicate: int = 0) -> Assignment:
    """Uniform random assignment with fixed group (cell) sizes; blocks drawn independently."""
    po = _as_po(po)
    alloc = _check_alloc(po, alloc)
    return Assignment(_draw(replicate_rng(seed, replicate), po, alloc))


def estimate_from_assignment(po, treatments: np.ndarray) -> np.ndarray:
    """Effect estimate implied by observing each unit under its assigned treatment; blocked estimates are weighted by block share."""
    po = _as_po(po)
    t = np.asarray(treatments, dtype=np.int64)
    observed = po.outcomes[np.arange(po.N), t - 1]
    L = build_contrast_matrix(po.K)
    scale = 2 ** (po.K - 1)
    if po.blocks is None:
        means = _group_means(t, observed, po.J)
        return L.T @ means / scale
    est = np.zeros(po.J)
    for h in range(po.H):
        mask = po.blocks == h
        means = _group_means(t[mask], observed[mask], po.J)
        est += mask.sum() / po.N * (L.T @ means / scale)
    return est


def _group_means(t, y, J):
    counts = np.bincount(t - 1, minlength=J)
    if np.any(counts == 0):
        raise ValueError("every treatment needs at least one unit")
    return np.bincount(t - 1, weights=y, minlength=J) / counts


def _crd_terms(po: PotentialOutcomes, alloc: np.ndarray):
    if po.N < 2:
        raise ValueError("need at least 2 units")
    if np.any(alloc < 1):
        raise ValueError("every treatment needs at least one unit")
    K = po.K
    L = build_contrast_matrix(K).astype(float)
    s2 = finite_population_variances(po).variances
    first = L.T @ ((s2 / alloc)[:, None] * L) / 2 ** (2 * (K - 1))
    dev = unit_effects(po) - population_effects(po)
    hetero = dev.T @ dev / (po.N * (po.N - 1))
    return first, hetero


def exact_covariance(po, alloc) -> CovarianceReport:
    """Both terms of the finite-population covariance of the effect estimator."""
    po = _as_po(po)
    alloc = _check_alloc(po, alloc)
    if po.blocks is None:
        first, hetero = _crd_terms(po, alloc)
    else:
        first = np.zeros((po.J, po.J))
        hetero = np.zeros((po.J, po.J))
        for h in range(po.H):
            sub = po.block(h)
            w = (sub.N / po.N) ** 2
            f, g = _crd_terms(sub, alloc[h])
            first += w * f
            hetero += w * g
    return CovarianceReport(population_effects(po), first, hetero, first - hetero)


def _multiset_assignments(counts: np.ndarray) -> np.ndarray:
    """Every distinct labelling of len = sum(counts) units with the given group sizes."""
    n = int(counts.sum())
    out = []

    def fill(labels, free, j):
        if j == len(counts) - 1:
            labels = labels.copy()
            labels[list(free)] = j + 1
            out.append(labels)
            return
        for chosen in itertools.combinations(free, int(counts[j])):
            nxt = labels.copy()
            nxt[list(chosen)] = j + 1
            rest = tuple(i for i in free if i not in chosen)
            fill(nxt, rest, j + 1)

    fill(np.zeros(n, dtype=np.int64), tuple(range(n)), 0)
    return np.array(out)


def assignment_space_size(alloc) -> int:
    a = np.atleast_2d(np.asarray(alloc, dtype=np.int64))
    size = 1
    for row in a:
        size *= math.factorial(int(row.sum())) // math.prod(math.factorial(int(c)) for c in row)
    return size


def enumeration_moments(po, alloc, limit: int = ENUMERATION_LIMIT):
    """Mean and covariance of the estimator over the complete assignment space."""
    po = _as_po(po)
    alloc = _check_alloc(po, alloc)
    size = assignment_space_size(alloc)
    if size > limit:
        raise ValueError(f"assignment space has {size} members, above the limit {limit}")
    if po.blocks is None:
        spaces = [(np.arange(po.N), _multiset_assignments(alloc))]
    else:
        spaces = [(np.flatnonzero(po.blocks == h), _multiset_assignments(alloc[h])) for h in range(po.H)]
    estimates = []
    t = np.empty(po.N, dtype=np.int64)
    for combo in itertools.product(*(labels for _, labels in spaces)):
        for (units, _), lab in zip(spaces, combo):
            t[units] = lab
        estimates.append(estimate_from_assignment(po, t))
    est = np.array(estimates)
    mean = est.mean(axis=0)
    dev = est - mean
    return mean, dev.T @ dev / len(est)


def monte_carlo(po, alloc, replicates: int, seed: int) -> CovarianceReport:
    """Seeded Monte Carlo of the randomization distribution.

    Replicate ``r`` draws from its own counter-addressed stream, so the estimates
    do not depend on evaluation order; aggregation uses compensated sums.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    po = _as_po(po)
    alloc = _check_alloc(po, alloc)
    exact = exact_covariance(po, alloc)
    if np.any(alloc < 1):
        raise ValueError("every treatment needs at least one unit")
    J = po.J
    y = po.outcomes
    rows = np.arange(po.N)
    if po.blocks is None:
        cell = np.zeros(po.N, dtype=np.int64)
        weights = np.ones(1)
        sizes = alloc.reshape(1, J)
    else:
        cell = po.blocks * J
        weights = po.block_sizes / po.N
        sizes = alloc
    inv = (weights[:, None] / sizes).ravel()
    means = np.empty((replicates, J))
    for r in range(replicates):
        t = _draw(replicate_rng(seed, r), po, alloc) - 1
        sums = np.bincount(cell + t, weights=y[rows, t], minlength=sizes.size)
        # block-share weighted cell means, summed over blocks
        means[r] = (sums * inv).reshape(-1, J).sum(axis=0)
    L = build_contrast_matrix(po.K)
    est = means @ L / 2 ** (po.K - 1)
    mean = np.array([math.fsum(col) for col in est.T]) / replicates
    dev = est - mean
    cov = dev.T @ dev / max(replicates - 1, 1)
    return CovarianceReport(
        exact.tau,
        exact.exact_first_term,
        exact.heterogeneity_term,
        exact.exact_cov,
        empirical_mean=mean,
        empirical_cov=cov,
        replicates=replicates,
        seed=seed,
    )
