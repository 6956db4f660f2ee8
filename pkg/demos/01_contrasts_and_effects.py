# %% [markdown]
# # Treatment combinations, contrasts and effects
#
# A 2^K factorial experiment has J = 2^K treatment combinations.  Each one is
# indexed by reading its factor levels as a binary number, factor 1 first.

# %%
import numpy as np

from factorial_alloc import (
    PotentialOutcomes,
    build_contrast_matrix,
    effect_names,
    estimate_effects,
    population_effects,
    treatment_index,
    treatment_label,
)

K = 3
for j in range(1, 2**K + 1):
    print(j, treatment_label(j, K))
print("index of 011:", treatment_index([0, 1, 1]))

# %% [markdown]
# The contrast matrix has one +/-1 column per factorial effect.  Its columns are
# orthogonal with squared norm J, and interactions are products of main effects.

# %%
L = build_contrast_matrix(K)
print(effect_names(K))
print(L)
assert np.array_equal(L.T @ L, 2**K * np.eye(2**K, dtype=int))

# %% [markdown]
# Population effects come from the column means of the potential-outcome
# table.  Here factor 1 adds 2 units, factor 3 adds 1, and there is no
# interaction.

# %%
rng = np.random.default_rng(0)
bits = np.array([[int(c) for c in treatment_label(j, K)] for j in range(1, 9)])
baseline = rng.normal(10, 1, size=(50, 1))
po = PotentialOutcomes(baseline + bits @ np.array([2.0, 0.0, 1.0]))
for name, value in zip(effect_names(K), population_effects(po)):
    print(f"{name:>9s} {round(value, 3) + 0.0: .3f}")

# %% [markdown]
# From an experiment we only see one outcome per unit.  The effect estimate
# replaces the column means with observed group means.

# %%
t = np.tile(np.arange(1, 9), 50 // 8 + 1)[:50]
y = po.outcomes[np.arange(50), t - 1]
print(np.round(estimate_effects(t, y, K), 3))
