# %% [markdown]
# # VCG auctions with unit demand
#
# Agents each want at most one object. The efficient assignment maximizes
# total value, and every winner pays the value the others lose because of it.

# %%
import numpy as np

from redistribution import clarke_payments, efficient_assignment

# three agents, two distinct objects (rows are agents, columns objects)
values = np.array([
    [0.9, 0.4],
    [0.7, 0.6],
    [0.2, 0.5],
])
print("assignment:", efficient_assignment(values))
outcome = clarke_payments(values)
print("payments:", outcome.payments, "total:", outcome.total)

# %% [markdown]
# With identical objects every winner pays the first losing bid, so the
# surplus is `p * v_(p+1)`.

# %%
bids = np.array([0.8, 0.3, 0.6, 0.1])
identical = np.repeat(bids[:, None], 2, axis=1)
print("heterogeneous solver on identical objects:", clarke_payments(identical).total)
print("p * v_(p+1):", 2 * np.sort(bids)[::-1][2])
