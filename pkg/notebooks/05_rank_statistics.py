# %% [markdown]
# # Rank agreement
#
# Kendall tau-b in O(n log n) with tie corrections, checked against the
# quadratic definition, plus Spearman rho.

# %%
import numpy as np

from tfnas.stats import kendall_tau, kendall_tau_bruteforce, spearman_rho

print(kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]), spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]))

rng = np.random.default_rng(0)
x, y = rng.integers(0, 4, size=200), rng.integers(0, 4, size=200)
print(kendall_tau(x, y), kendall_tau_bruteforce(x, y))

# %%
# loss-like scores are flipped before ranking
metric = rng.normal(size=50)
loss = -metric + rng.normal(scale=0.3, size=50)
print("tau vs -loss", kendall_tau(metric, -loss))
