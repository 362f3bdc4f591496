import json

import numpy as np
import pytest

from redistribution.errors import ConfigurationError
from redistribution.profiles import HETEROGENEOUS, ValuationProfile, canonical_order, rebate_inputs
from redistribution.rebate_net import (
    LinearRebateNet,
    NonlinearRebateNet,
    build_net,
    checkpoint_dict,
    default_hidden,
    dumps_checkpoint,
    forward_linear,
    forward_nonlinear,
    load_checkpoint,
    net_from_checkpoint,
    save_checkpoint,
    xavier_init,
    xavier_scale,
)

CANON = canonical_order(ValuationProfile([0.9, 0.5, 0.2], 1))


def test_xavier_scales():
    assert xavier_scale(4, "plain") == 0.5
    assert xavier_scale(2, "relu") == 1.0
    with pytest.raises(ConfigurationError):
        xavier_scale(0)


def test_xavier_preserves_unit_variance():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((100_000, 9))
    w = xavier_init((9, 100_000), "plain", rng)
    out = np.einsum("ij,ji->i", x, w)
    assert abs(out.var() - 1.0) < 0.05


def test_linear_examples():
    np.testing.assert_allclose(forward_linear(LinearRebateNet(w=[0.0, 0.0], b=0.1), CANON), [0.1] * 3)
    np.testing.assert_allclose(forward_linear(LinearRebateNet(w=[1.0, 0.0]), CANON), [0.5, 0.9, 0.9])
    moved = canonical_order(ValuationProfile([0.95, 0.5, 0.2], 1))
    assert forward_linear(LinearRebateNet(w=[1.0, 0.0]), moved)[0] == 0.5


def test_linear_rejects_wrong_width():
    with pytest.raises(ConfigurationError):
        LinearRebateNet(w=[1.0, 0.0, 0.0]).forward(np.zeros((1, 3, 2)))


def test_nonlinear_examples():
    net = NonlinearRebateNet(W1=np.zeros((2, 4)), b1=-np.ones(4), w2=[1.0, 2.0, 3.0, 4.0], b2=0.2)
    np.testing.assert_allclose(forward_nonlinear(net, CANON), [0.2] * 3)
    net = NonlinearRebateNet(W1=[[1.0], [0.0]], b1=[0.0], w2=[1.0], b2=0.0)
    np.testing.assert_allclose(forward_nonlinear(net, CANON), [0.5, 0.9, 0.9])


def test_zero_hidden_weights_give_constant():
    net = NonlinearRebateNet(W1=np.zeros((3, 5)), b1=np.zeros(5), w2=np.ones(5), b2=0.37)
    r = net.forward(np.random.default_rng(0).random((10, 4, 3)))[0]
    assert np.all(r == 0.37)


def test_identical_rows_get_identical_rebates():
    rng = np.random.default_rng(1)
    net = build_net("nonlinear", 4, 2, HETEROGENEOUS, seed=3)
    values = rng.random((4, 2))
    values[2] = values[0]
    canon = canonical_order(ValuationProfile(values, 2, HETEROGENEOUS))
    r = forward_nonlinear(net, canon)
    assert r[canon.rank_of(0)] == r[canon.rank_of(2)]


def test_inconsistent_shapes():
    with pytest.raises(ConfigurationError):
        NonlinearRebateNet(W1=np.zeros((2, 3)), b1=np.zeros(2), w2=np.zeros(3))


def test_default_hidden_width():
    assert default_hidden(3, 1) == 100
    assert default_hidden(5, 2) == 1000
    assert build_net("nonlinear", 4, 2).h == 100


def test_zero_upstream_gives_zero_gradients():
    net = build_net("nonlinear", 4, 1, seed=0)
    X = np.random.default_rng(0).random((5, 4, 3))
    _, cache = net.forward(X)
    for g in net.backward(cache, np.zeros((5, 4))).values():
        assert not np.any(g)


def test_linear_bias_gradient_is_sum_of_upstream():
    net = LinearRebateNet(w=[0.3, -0.2], b=0.1)
    X = rebate_inputs(CANON)[None]
    g = np.array([[0.5, -1.0, 2.0]])
    assert net.backward(net.forward(X)[1], g)["b"] == pytest.approx(1.5)


def _fd_check(net, X, G, step=1e-6):
    def objective():
        return float(np.sum(G * net.forward(X)[0]))

    grads = net.backward(net.forward(X)[1], G)
    params = {k: np.array(v, dtype=np.float64) for k, v in net.params().items()}
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + step
            net.set_params(params)
            up = objective()
            flat[idx] = saved - step
            net.set_params(params)
            down = objective()
            flat[idx] = saved
            net.set_params(params)
            fd = (up - down) / (2 * step)
            an = np.asarray(grads[name]).reshape(-1)[idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    return worst


def _away_from_kinks(net, X, margin=1e-4):
    z = X @ net.W1 + net.b1
    return np.min(np.abs(z)) > margin


@pytest.mark.parametrize("arch", ["linear", "nonlinear"])
def test_backward_matches_finite_differences(arch):
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 100:
        n = int(rng.integers(2, 6))
        net = build_net(arch, n, 1, h=int(rng.integers(1, 6)), seed=int(rng.integers(2**31)))
        if arch == "nonlinear":
            net.b1 = rng.normal(size=net.h) * 0.1
            net.b2 = float(rng.normal())
        X = rng.random((3, n, n - 1))
        if arch == "nonlinear" and not _away_from_kinks(net, X):
            continue
        assert _fd_check(net, X, rng.normal(size=(3, n))) < 1e-5
        checked += 1


def _doc(net, **kw):
    return checkpoint_dict(net, 3, 1, objective="OE", seed=4, epoch=10, **kw)


@pytest.mark.parametrize("arch", ["linear", "nonlinear"])
def test_checkpoint_round_trip_is_bit_exact(tmp_path, arch):
    net = build_net(arch, 3, 1, seed=11)
    path = tmp_path / "c.json"
    save_checkpoint(path, _doc(net, k=0.1234567890123456789))
    doc, again = load_checkpoint(path)
    for name, value in net.params().items():
        assert np.array_equal(np.asarray(value), np.asarray(again.params()[name]))
    assert doc["k"] == 0.1234567890123456789
    assert dumps_checkpoint(_doc(again, k=doc["k"])) == path.read_text()


def test_checkpoint_has_required_fields():
    doc = json.loads(dumps_checkpoint(_doc(build_net("nonlinear", 3, 1, seed=0))))
    for key in ("architecture", "n", "p", "h", "W1", "b1", "w2", "b2", "k", "seed", "epoch"):
        assert key in doc


def test_corrupted_checkpoint(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"architecture": "linear", "n": 3')
    with pytest.raises(ConfigurationError, match="line 1"):
        load_checkpoint(path)


def test_checkpoint_width_mismatch():
    doc = json.loads(dumps_checkpoint(_doc(build_net("linear", 3, 1, seed=0))))
    doc["n"] = 5
    with pytest.raises(ConfigurationError):
        net_from_checkpoint(doc)
