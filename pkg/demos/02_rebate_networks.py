# %% [markdown]
# # Rebate functions
#
# A rebate for agent i only looks at the other agents' bids, sorted. The
# same function is applied to every agent, so a lone agent cannot change
# its own rebate by misreporting.

# %%
from redistribution import BatchSpec, build_net, prepare_batch
from redistribution.evaluation import dsic_spot_check
from redistribution.profiles import sample_values

batch = prepare_batch(BatchSpec(count=5, n=4, p=2, setting="heterogeneous", seed=1))
print("inputs per agent:", batch.inputs.shape)   # (profiles, agents, features)

net = build_net("nonlinear", n=4, p=2, setting="heterogeneous", seed=0)
rebates, _ = net.forward(batch.inputs)
print(rebates.round(4))

# %% [markdown]
# Re-bid each agent at random and measure the largest change in its own rebate.

# %%
values = sample_values(BatchSpec(200, 4, 2, "heterogeneous", seed=2))
print("max own-rebate change:", dsic_spot_check(net, values, 2, "heterogeneous", perturbations=5))
