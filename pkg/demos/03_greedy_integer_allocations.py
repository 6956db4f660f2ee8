# %% [markdown]
# # Integer allocations by greedy search
#
# Closed forms give proportions.  Real designs need integers, bounds and, for
# blocked D and E, an answer when no closed form exists.  The greedy routine
# starts at the lower bounds and adds one unit at a time where it helps most.
#
# The variances below come from an audit study with 192 lawyers in a 2^3
# design, run as two replicates.

# %%
import numpy as np

from factorial_alloc import DesignSpec, VarianceSpec, greedy_block, greedy_crd, treatment_label

pooled = VarianceSpec([0.21, 0.20, 0.18, 0.20, 0.23, 0.21, 0.27, 0.21])
print("      " + " ".join(treatment_label(j, 3) for j in range(1, 9)))
for criterion in "ADE":
    res = greedy_crd(pooled, DesignSpec(3, 192, criterion))
    print(criterion, "   ", "  ".join(f"{n:2d}" for n in res.counts))

# %% [markdown]
# Treating the two replicates as blocks of 96 gives a blocked problem where
# neither homogeneity condition holds, so greedy is the only route for D and E.

# %%
blocks = VarianceSpec(
    [[0.15, 0.15, 0.15, 0.20, 0.27, 0.15, 0.27, 0.27], [0.27, 0.24, 0.20, 0.20, 0.20, 0.27, 0.27, 0.15]],
    block_sizes=[96, 96],
)
for criterion in "ADE":
    res = greedy_block(blocks, criterion)
    print(criterion, res.counts.tolist(), f"value {res.criterion_value:.4f}")

# %% [markdown]
# Bounds cap or guarantee arm sizes.  Here arm 111 is limited to 15 units.

# %%
upper = [192] * 7 + [15]
res = greedy_crd(pooled, DesignSpec(3, 192, "E", upper=upper))
print(res.counts, "saturated arms:", [treatment_label(j + 1, 3) for j in res.saturated])
