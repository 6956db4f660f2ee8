# %% [markdown]
# # Certifying greedy answers by exhaustive search
#
# The oracle enumerates every feasible integer allocation and returns all
# allocations that attain the optimum.  It is slow on purpose.  Its job is to
# check the greedy routine on problems small enough to enumerate.

# %%
import time

import numpy as np

from factorial_alloc import DesignSpec, VarianceSpec, count_compositions, enumerate_block, enumerate_crd, greedy_block, greedy_crd

vs = VarianceSpec([1.0, 2.0, 3.0, 5.0])
spec = DesignSpec(2, 30, "E")
opt = enumerate_crd(vs, spec)
print(f"{opt.enumerated} allocations, {len(opt.optima)} optimal:", opt.count_arrays())
print("greedy:", greedy_crd(vs, spec).counts, "optimal:", opt.contains(greedy_crd(vs, spec).counts))

# %% [markdown]
# Two blocks of 40 and 20 units with variances (1, 2, 3, 5) in both.  The
# E-optimal design is not unique.

# %%
blocks = VarianceSpec([[1.0, 2.0, 3.0, 5.0]] * 2, block_sizes=[40, 20])
print("search space:", count_compositions(40, [2] * 4, [40] * 4) * count_compositions(20, [2] * 4, [20] * 4))
start = time.perf_counter()
opt = enumerate_block(blocks, "E")
print(f"{len(opt.optima)} optimal allocations in {time.perf_counter() - start:.1f}s")
for counts in opt.count_arrays():
    print("  ", counts)
g = greedy_block(blocks, "E")
print("greedy picks", g.counts.tolist(), "which is optimal:", opt.contains(g.counts))

# %% [markdown]
# A quick randomized check: greedy matches the oracle on every draw.

# %%
rng = np.random.default_rng(1)
agree = 0
for _ in range(100):
    vs = VarianceSpec(rng.uniform(0.1, 10, size=4))
    spec = DesignSpec(2, int(rng.integers(8, 30)), rng.choice(list("ADE")))
    agree += enumerate_crd(vs, spec).contains(greedy_crd(vs, spec).counts)
print(f"greedy optimal in {agree}/100 random problems")
