"""Optimal unit allocation for 2^K factorial experiments.

Closed-form A/D/E-optimal proportions, greedy integer allocations, an
exhaustive oracle for certifying them, and a randomization simulator for the
effect estimator under complete and blocked randomization.
"""
from .exact import (
    AllocationWarning,
    ConditionNotMet,
    CostAllocation,
    CostSpec,
    ExactAllocation,
    cost_shares,
    exact_block,
    exact_cost,
    exact_crd,
)
from .factorial import (
    ConditionReport,
    Criterion,
    DesignSpec,
    InfeasibleError,
    PotentialOutcomes,
    VarianceSpec,
    build_contrast_matrix,
    check_conditions,
    criterion_matrix,
    criterion_value,
    diagonal_terms,
    effect_names,
    eigenvalues,
    estimate_effects,
    finite_population_variances,
    group_variances,
    means_from_effects,
    population_effects,
    sample_variances,
    treatment_bits,
    treatment_index,
    treatment_label,
    unit_effects,
)
from .greedy import IntegerAllocation, greedy_block, greedy_block_from_pilot, greedy_crd
from .oracle import OptimalSet, OracleCapExceeded, count_compositions, enumerate_block, enumerate_crd
from .simulate import (
    Assignment,
    CovarianceReport,
    draw_assignment,
    enumeration_moments,
    exact_covariance,
    monte_carlo,
)

__version__ = "0.1.0"
