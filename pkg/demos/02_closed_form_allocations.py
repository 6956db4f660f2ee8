# %% [markdown]
# # Closed-form optimal allocations
#
# Given the variance of the potential outcomes under each treatment, the
# A-optimal design is Neyman allocation, the D-optimal design is balanced, and
# the E-optimal design is proportional to the variances.  The example follows
# an education experiment with 1656 freshmen and four arms.

# %%
import numpy as np

from factorial_alloc import (
    ConditionNotMet,
    CostSpec,
    VarianceSpec,
    exact_block,
    exact_cost,
    exact_crd,
)

equal = VarianceSpec([1.0, 1.0, 1.0, 1.0])
for criterion in "ADE":
    print(criterion, exact_crd(equal, criterion).counts(1656))

# %% [markdown]
# With unequal variances the three criteria disagree.

# %%
unequal = VarianceSpec([1.0, 2.0, 3.0, 4.0])
for criterion in "ADE":
    print(criterion, np.round(exact_crd(unequal, criterion).proportions, 3))

# %% [markdown]
# Blocking by sex (948 women, 708 men).  A is Neyman allocation inside each
# block.  D and E have closed forms only when the variances are constant
# within blocks, or for D also when they are constant across blocks.

# %%
blocks = VarianceSpec([[1.0] * 4, [1.0] * 4], block_sizes=[948, 708])
print(exact_block(blocks, "E").counts([948, 708]))

mixed = VarianceSpec([[1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0]], block_sizes=[40, 20])
try:
    exact_block(mixed, "D")
except ConditionNotMet as exc:
    print("no closed form:", exc)

# %% [markdown]
# Under a budget instead of a fixed sample size the optimum spreads the budget
# rather than the units.  Controls cost $500, single programs $5000 and the
# combined program $10000.  The budget is $4.5 million.

# %%
cost = CostSpec([500, 5000, 5000, 10000], 4.5e6)
for criterion in "ADE":
    res = exact_cost(VarianceSpec([1.0, 2.0, 2.0, 2.0]), cost, criterion)
    print(criterion, np.round(res.budget_shares, 3), res.integer_counts, f"spent {res.spent:,.0f}")
