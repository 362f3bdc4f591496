# %% [markdown]
# # Worst-case redistribution with a linear rebate
#
# Train the best guaranteed share of the surplus for three agents and one
# item. The best linear mechanism returns a third of the surplus in every
# profile. Takes about ten seconds.

# %%
from redistribution import TrainConfig, evaluate, prepare_batch, train
from redistribution.batch import TEST_STREAM

config = TrainConfig(
    n=3, p=1, objective="OW", architecture="linear",
    rho=1e4, lr=1e-3, lr_final=1e-5, grad_clip=1.0, k_update="exact",
)
net, k, report = train(config)
print("epochs:", report.epochs_run, "k on the training batch:", round(k, 4))
print("weights:", net.w.round(4), "bias:", round(float(net.b), 5))

# %%
test = prepare_batch(config.batch_spec(TEST_STREAM))
print(evaluate(net, test))
