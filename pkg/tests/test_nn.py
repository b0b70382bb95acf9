import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostqc import nn
from ghostqc.nn import NetConfig, Network


def small_net(front=False, side=8, F=5):
    return Network(NetConfig(F, side, front=front, stem_channels=2, down_channels=(3, 4)))


def fd_check(f, x, grad, h=1e-5, samples=12, rng=None):
    """Max relative error between ``grad`` and central differences of ``f`` at ``x``."""
    rng = rng or np.random.default_rng(0)
    flat = x.reshape(-1)
    idx = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
    worst = 0.0
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        num = (fp - fm) / (2 * h)
        g = grad.reshape(-1)[i]
        worst = max(worst, abs(num - g) / max(1e-6, abs(num) + abs(g)))
    return worst


# -- activations ------------------------------------------------------------------


def test_leaky_relu_values():
    assert nn.leaky_relu(-1.0) == pytest.approx(-0.2)
    assert nn.leaky_relu(2.0) == 2.0
    assert nn.leaky_relu_grad(0.0) == 1.0
    assert nn.leaky_relu_grad(-3.0) == pytest.approx(0.2)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3))
def test_leaky_relu_derivative_fd(x):
    h = 1e-6
    num = (nn.leaky_relu(x + h) - nn.leaky_relu(x - h)) / (2 * h)
    assert abs(num - nn.leaky_relu_grad(x)) < 1e-8


@settings(max_examples=50, deadline=None)
@given(st.floats(-700, 700))
def test_sigmoid_stable_and_bounded(x):
    s = nn.sigmoid(np.array([x]))[0]
    assert 0.0 <= s <= 1.0
    g = nn.sigmoid_grad(np.array([x]))[0]
    assert 0.0 <= g <= 0.25


def test_sigmoid_grad_matches_fd():
    x = np.linspace(-8, 8, 33)
    h = 1e-6
    num = (nn.sigmoid(x + h) - nn.sigmoid(x - h)) / (2 * h)
    np.testing.assert_allclose(nn.sigmoid_grad(x), num, atol=1e-9)


def test_sigmoid_grad_positive_when_saturated():
    assert nn.sigmoid_grad(np.array([60.0]))[0] > 0
    assert nn.sigmoid(np.array([60.0]))[0] == 1.0


# -- geometry -----------------------------------------------------------------------


@pytest.mark.parametrize("F", [64, 128, 256])
def test_output_shape_full_size(F):
    net = Network(NetConfig(F))
    params = net.init(0)
    img, _ = net.forward(params, np.random.default_rng(F).normal(size=F))
    assert img.shape == (64, 64)
    assert img.min() >= 0 and img.max() <= 1


def test_full_size_bottleneck():
    cfg = NetConfig(64)
    assert cfg.depth == 4
    assert cfg.bottleneck == (32, 4)
    assert cfg.channels == [8, 16, 32, 32, 32]


def test_projection_count_and_trunk():
    for M in (64, 128, 256):
        net = Network(NetConfig(M))
        assert net.param_count("proj") == 4096 * M + 4096
        # informational: reference figure for the trunk is 67,041
        assert net.trunk_param_count() > 0


@pytest.mark.parametrize("M,expected", [(64, 4_160), (128, 16_512), (256, 65_792),
                                        (512, 262_656), (1024, 1_049_600)])
def test_substitute_layer_count(M, expected):
    net = Network(NetConfig(M, front=True))
    assert net.param_count("front") == M * M + M == expected


def test_rejects_bad_side():
    with pytest.raises(ValueError):
        NetConfig(4, side=24)


def test_feature_length_mismatch():
    net = small_net()
    with pytest.raises(ValueError):
        net.forward(net.init(0), np.zeros(4))


def test_zero_everything_gives_half():
    net = small_net()
    img, _ = net.forward(net.zeros(), np.zeros(5))
    np.testing.assert_array_equal(img, 0.5)


# -- backward -------------------------------------------------------------------------


@pytest.mark.parametrize("front", [False, True])
def test_forward_backward_matches_fd(front):
    rng = np.random.default_rng(1)
    net = small_net(front)
    params = net.init(2)
    for k in params:
        params[k] = params[k] + 0.1 * rng.normal(size=params[k].shape)
    x = rng.normal(size=5)
    target = rng.uniform(size=(8, 8))

    def f():
        img, _ = net.forward(params, x)
        return 0.5 * np.sum((img - target) ** 2)

    img, cache = net.forward(params, x)
    gx, grads = net.backward(params, cache, img - target)
    assert fd_check(f, x, gx) < 1e-4
    for name in params:
        assert fd_check(f, params[name], grads[name], rng=rng) < 1e-4, name


def test_zero_output_grad_gives_zero_grads():
    net = small_net()
    params = net.init(0)
    _, cache = net.forward(params, np.ones(5))
    gx, grads = net.backward(params, cache, np.zeros((8, 8)))
    assert not gx.any()
    assert all(not g.any() for g in grads.values())


def test_linear_layers_adjoint():
    # positive weights and inputs keep the leaky units in their identity branch,
    # so the two dense layers are linear and the feature grad is W_f^T W_p^T g
    rng = np.random.default_rng(0)
    net = small_net(front=True)
    p = net.init(1)
    p["front.w"] = rng.uniform(0.1, 1, p["front.w"].shape)
    p["proj.w"] = rng.uniform(0.1, 1, p["proj.w"].shape)
    x = rng.uniform(0.1, 1, 5)
    img, cache = net.forward(p, x)
    gx, grads = net.backward(p, cache, rng.normal(size=img.shape))
    g_proj = grads["proj.b"]
    np.testing.assert_allclose(gx, p["front.w"].T @ (p["proj.w"].T @ g_proj), rtol=1e-12)
    np.testing.assert_allclose(grads["proj.w"], np.outer(g_proj, p["front.w"] @ x), rtol=1e-12)


def test_backward_requires_cache():
    net = small_net()
    with pytest.raises(ValueError):
        net.backward(net.init(0), {}, np.zeros((8, 8)))
    _, cache = net.forward(net.init(0), np.ones(5))
    with pytest.raises(ValueError):
        net.backward(net.init(0), cache, np.zeros((4, 4)))


def test_forward_deterministic():
    net = small_net()
    p = net.init(3)
    a, _ = net.forward(p, np.arange(5.0))
    b, _ = net.forward(p, np.arange(5.0))
    np.testing.assert_array_equal(a, b)


# -- initialization ----------------------------------------------------------------


def test_init_reproducible_and_xavier():
    net = Network(NetConfig(64, 32))
    a, b = net.init(7), net.init(7)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    w = a["proj.w"]
    expected = 2.0 / (64 + 1024)
    assert w.var() == pytest.approx(expected, rel=0.05)
    assert not a["proj.b"].any()


def test_quantum_angle_variance():
    rng = np.random.default_rng(0)
    draws = nn.init_quantum_angles(rng, 10_000, width=16, scale=0.1)
    assert draws.var(ddof=1) == pytest.approx(0.01 * 16, rel=0.05)
    assert not nn.init_quantum_angles(rng, 10, 16, 0.0).any()


# -- Adam -------------------------------------------------------------------------------


def test_adam_defaults():
    s = nn.adam_init({"a": np.zeros(2)})
    assert (s.lr, s.beta1, s.beta2, s.eps, s.step) == (0.05, 0.9, 0.999, 1e-8, 0)


def test_adam_zero_grad_no_change():
    p = {"a": np.array([1.0, -2.0])}
    new, s = nn.adam_step(nn.adam_init(p), p, {"a": np.zeros(2)})
    np.testing.assert_array_equal(new["a"], p["a"])
    assert s.step == 1


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
def test_adam_first_step_magnitude(g, sign):
    p = {"a": np.zeros(3)}
    new, _ = nn.adam_step(nn.adam_init(p, lr=0.05), p, {"a": np.full(3, sign * g)})
    # bias correction makes the first step alpha * g / (|g| + eps)
    np.testing.assert_allclose(new["a"], -sign * 0.05 * g / (g + 1e-8), rtol=1e-12)


def test_adam_overrides_and_scale():
    p = {"a": np.zeros(1), "b": np.zeros(1)}
    s = nn.adam_init(p, lr=0.05, lr_overrides={"b": 0.001})
    new, _ = nn.adam_step(s, p, {"a": np.ones(1), "b": np.ones(1)}, scale=0.5)
    assert new["a"][0] == pytest.approx(-0.025)
    assert new["b"][0] == pytest.approx(-0.0005)


def test_adam_shape_mismatch():
    p = {"a": np.zeros(2)}
    with pytest.raises(ValueError):
        nn.adam_step(nn.adam_init(p), p, {"a": np.zeros(3)})


def test_adam_deterministic_and_pure():
    rng = np.random.default_rng(0)
    p = {"a": rng.normal(size=4)}
    g = {"a": rng.normal(size=4)}
    before = p["a"].copy()
    s1, s2 = nn.adam_init(p), nn.adam_init(p)
    r1, r2 = p, p
    for _ in range(5):
        r1, s1 = nn.adam_step(s1, r1, g)
        r2, s2 = nn.adam_step(s2, r2, g)
    np.testing.assert_array_equal(r1["a"], r2["a"])
    np.testing.assert_array_equal(p["a"], before)


# -- checkpoints --------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    net = small_net(front=True)
    params = net.init(5)
    path = tmp_path / "ck.bin"
    nn.save_checkpoint(path, params, {"note": "x"})
    loaded, head = nn.load_checkpoint(path)
    assert head["note"] == "x"
    assert list(loaded) == list(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"nope")
    with pytest.raises(ValueError):
        nn.load_checkpoint(path)
