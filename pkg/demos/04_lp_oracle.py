# %% [markdown]
# # The best linear rebate as a linear program
#
# On a fixed sample of profiles the linear rebate's coefficients enter every
# constraint linearly, so the best linear mechanism is an LP. The dense
# simplex solver works on the dual, which stays small however many
# profiles are sampled.

# %%
from redistribution import BatchSpec, build_oe_lp, build_ow_lp, prepare_batch, simplex_solve

for n, p in [(3, 1), (4, 2), (5, 1)]:
    batch = prepare_batch(BatchSpec(20_000, n, p, seed=0))
    result = simplex_solve(build_ow_lp(batch))
    print(f"n={n} p={p}: worst-case share {result.value:.4f} after {result.iterations} pivots")

# %%
batch = prepare_batch(BatchSpec(20_000, 3, 1, seed=0))
result = simplex_solve(build_oe_lp(batch))
print("expected share, n=3:", result.value / batch.totals.mean())
print(result.as_dict()["solution"])
