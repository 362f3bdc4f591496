import numpy as np
import pytest

from redistribution.batch import prepare_batch
from redistribution.errors import ConfigurationError, TrainingError
from redistribution.profiles import BatchSpec
from redistribution.rebate_net import build_net, dumps_checkpoint
from redistribution.training import (
    OE, OW, AdamState, TrainConfig, adam_step, best_k, clip_by_norm, oe_loss, ow_loss, train,
)


def test_oe_loss_example():
    loss, grad, penalty = oe_loss([[0.2, 0.3]], np.array([0.4]), 1000.0)
    assert loss == pytest.approx(4.5)
    assert penalty == pytest.approx(5.0)
    np.testing.assert_allclose(grad, [[99.0, 99.0]])


def test_oe_loss_feasible_sample():
    loss, _, penalty = oe_loss([[0.1, 0.1]], np.array([0.4]), 1000.0)
    assert penalty == 0.0
    assert loss == pytest.approx(-0.2)


def test_oe_loss_averages_reward_and_sums_penalty():
    one = oe_loss([[0.2, 0.3]], np.array([0.4]), 1000.0)
    two = oe_loss([[0.2, 0.3], [0.2, 0.3]], np.array([0.4, 0.4]), 1000.0)
    assert two[2] == pytest.approx(2 * one[2])
    assert two[0] - two[2] == pytest.approx(one[0] - one[2])


def test_ow_loss_examples():
    # every constraint slack
    loss, *_ = ow_loss([[0.05, 0.15]], np.array([0.5]), 0.3, 1000.0)
    assert loss == pytest.approx(-0.3)
    # worst-case constraint violated by 0.05
    loss, *_ = ow_loss([[0.1, 0.1]], np.array([0.5]), 0.5, 1000.0)
    assert loss == pytest.approx(-0.5 + 500 * 0.0025)
    # one negative rebate
    loss, _, _, penalty = ow_loss([[-0.1, 0.2, 0.3]], np.array([1.0]), 0.0, 1000.0)
    assert penalty == pytest.approx(500 * 0.01)


def test_ow_ir_selectors_differ_with_two_negatives():
    r, t = [[-0.1, -0.2, 0.5]], np.array([1.0])
    _, _, _, only_min = ow_loss(r, t, 0.0, 1000.0, "min")
    _, _, _, every = ow_loss(r, t, 0.0, 1000.0, "all")
    assert only_min == pytest.approx(500 * 0.04)
    assert every == pytest.approx(500 * 0.05)
    with pytest.raises(ConfigurationError):
        ow_loss(r, t, 0.0, 1000.0, "max")


def test_adam_first_step_moves_by_lr():
    params = {"a": np.array([1.0, -2.0, 3.0])}
    out = adam_step(AdamState.like(params), params, {"a": np.array([0.5, -4.0, 1e-3])}, 1e-2)
    np.testing.assert_allclose(out["a"] - params["a"], [-1e-2, 1e-2, -1e-2], atol=1e-6)


def test_adam_zero_gradient_is_still():
    params = {"a": np.array([1.0, 2.0])}
    state = AdamState.like(params)
    for _ in range(5):
        params = adam_step(state, params, {"a": np.zeros(2)}, 0.1)
    np.testing.assert_array_equal(params["a"], [1.0, 2.0])


def test_adam_two_steps_bounded():
    start = {"a": np.array([0.0])}
    state = AdamState.like(start)
    p = adam_step(state, start, {"a": np.array([3.0])}, 0.01)
    p = adam_step(state, p, {"a": np.array([3.0])}, 0.01)
    assert abs(p["a"][0]) <= 2 * 0.01 + 1e-9


def test_adam_shape_mismatch():
    params = {"a": np.zeros(2)}
    with pytest.raises(ConfigurationError):
        adam_step(AdamState.like(params), params, {"a": np.zeros(3)}, 0.1)


def _full_loss(net, batch, objective, k, rho):
    r, cache = net.forward(batch.inputs)
    if objective == OE:
        loss, g, _ = oe_loss(r, batch.totals, rho)
        gk = 0.0
    else:
        loss, g, gk, _ = ow_loss(r, batch.totals, k, rho)
    return loss, net.backward(cache, g), gk


@pytest.mark.parametrize("objective", [OE, OW])
@pytest.mark.parametrize("arch", ["linear", "nonlinear"])
def test_loss_gradients_match_finite_differences(objective, arch):
    rng = np.random.default_rng(11)
    step = 1e-6
    for trial in range(25):
        n = int(rng.integers(3, 6))
        batch = prepare_batch(BatchSpec(count=8, n=n, p=1, seed=trial))
        net = build_net(arch, n, 1, h=4, seed=trial)
        k = float(rng.uniform(0.2, 0.8))
        rho = 10.0
        _, grads, gk = _full_loss(net, batch, objective, k, rho)
        params = {name: np.array(v, dtype=np.float64) for name, v in net.params().items()}
        for name, value in params.items():
            flat = value.reshape(-1)
            for idx in range(flat.size):
                saved = flat[idx]
                flat[idx] = saved + step
                net.set_params(params)
                up = _full_loss(net, batch, objective, k, rho)[0]
                flat[idx] = saved - step
                net.set_params(params)
                down = _full_loss(net, batch, objective, k, rho)[0]
                flat[idx] = saved
                net.set_params(params)
                fd = (up - down) / (2 * step)
                an = float(np.asarray(grads[name]).reshape(-1)[idx])
                assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-6), (name, idx, fd, an)
        if objective == OW:
            fd = (_full_loss(net, batch, objective, k + step, rho)[0]
                  - _full_loss(net, batch, objective, k - step, rho)[0]) / (2 * step)
            assert abs(fd - gk) <= 1e-4 * max(abs(fd), abs(gk), 1e-6)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(n=3, p=3).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(lr=0.0).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(objective="OX").validate()
    assert TrainConfig(n=3, p=1).batch_size == 2048
    assert TrainConfig(n=4, p=2).batch_size == 8192


def test_lr_schedule_endpoints():
    cfg = TrainConfig(lr=1e-3, lr_final=1e-5, epochs=101)
    assert cfg.lr_at(1) == 1e-3
    assert cfg.lr_at(101) == pytest.approx(1e-5)
    assert cfg.lr_at(51) == pytest.approx(1e-4)


def test_training_is_deterministic():
    cfg = dict(n=3, p=1, objective=OW, architecture="nonlinear", hidden=8, epochs=150, batch_size=64, seed=5)
    a, ka, _ = train(TrainConfig(**cfg))
    b, kb, _ = train(TrainConfig(**cfg))
    assert ka == kb
    for name, value in a.params().items():
        assert np.array_equal(value, b.params()[name])


def test_zero_rho_diverges_with_checkpoint():
    with pytest.raises(TrainingError) as info:
        train(TrainConfig(n=3, p=1, rho=0.0, lr=0.05, epochs=5000, batch_size=32, log_every=10))
    assert info.value.checkpoint is not None
    assert info.value.epoch > 1
    dumps_checkpoint(info.value.checkpoint)


def test_log_and_checkpoint_files(tmp_path):
    cfg = TrainConfig(n=3, p=1, objective=OW, epochs=50, batch_size=32, log_every=10, checkpoint_every=20)
    train(cfg, log_path=tmp_path / "run.log", checkpoint_path=tmp_path / "c.json")
    lines = (tmp_path / "run.log").read_text().splitlines()
    assert len(lines) == 6
    assert '"k"' in lines[0]
    assert (tmp_path / "c.json").exists()


def test_plateau_stops_early():
    cfg = TrainConfig(n=3, p=1, epochs=5000, batch_size=32, plateau_window=50, plateau_tol=1e-2)
    _, _, report = train(cfg)
    assert report.stopped_early
    assert report.epochs_run < 5000


def test_k_warmup_holds_k_at_zero():
    cfg = TrainConfig(n=3, p=1, objective=OW, epochs=30, batch_size=32, k_warmup=30)
    _, k, _ = train(cfg)
    assert k == 0.0


def test_loss_trends_down():
    for objective in (OE, OW):
        cfg = TrainConfig(n=3, p=1, objective=objective, epochs=10000, log_every=100, plateau_window=10**9)
        _, _, report = train(cfg)
        losses = report.losses()
        assert losses[-5:].mean() < losses[1]


def test_best_k_minimizes_ow_loss_in_k():
    rng = np.random.default_rng(5)
    totals = rng.random(300) + 0.01
    R = totals * rng.normal(0.3, 0.2, 300)
    r = np.column_stack([R / 2, R / 2])
    k = best_k(R, totals, 50.0)
    assert ow_loss(r, totals, k, 50.0)[2] == pytest.approx(0.0, abs=1e-9)
    here = ow_loss(r, totals, k, 50.0)[0]
    for step in (1e-3, -1e-3, 0.1, -0.1):
        assert ow_loss(r, totals, k + step, 50.0)[0] > here


def test_best_k_single_sample():
    # -k + rho/2 (k t - R)^2 is minimized at k = R/t + 1/(rho t^2)
    assert best_k([0.1], [0.5], 100.0) == pytest.approx(0.2 + 1 / 25.0)


def test_best_k_needs_positive_rho():
    with pytest.raises(ConfigurationError):
        best_k([0.1], [0.5], 0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(objective=OW, rho=0.0, k_update="exact").validate()


def test_clip_by_norm():
    g = {"w": np.array([3.0, 0.0]), "b": np.array(4.0)}
    out = clip_by_norm(g, 1.0)
    np.testing.assert_allclose(out["w"], [0.6, 0.0])
    assert float(out["b"]) == pytest.approx(0.8)
    assert clip_by_norm(g, 10.0) is g


def test_exact_k_tracks_worst_ratio():
    cfg = TrainConfig(n=3, p=1, objective=OW, epochs=300, k_update="exact", grad_clip=1.0, lr=1e-3,
                      lr_final=1e-7)
    net, k, _ = train(cfg)
    batch = prepare_batch(cfg.batch_spec())
    R = net.forward(batch.inputs)[0].sum(axis=1)
    # k is solved against the rebates from before the last (tiny) step
    assert k == pytest.approx(best_k(R, batch.totals, cfg.rho), abs=1e-3)
