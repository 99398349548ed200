import numpy as np
import pytest

from contrawr.errors import ShapeError
from contrawr.nn import autodiff as ad
from contrawr.nn.autodiff import Tensor
from contrawr.nn.gradcheck import check_parameter, finite_difference_check
from contrawr.nn.layers import ContraWRNet, Encoder, EncoderConfig, Projector, encode, project
from contrawr.nn.optim import AdamState, adam_step

SMALL = EncoderConfig(in_shape=(4, 17, 9), widths=(3, 4, 5, 6), pool=(2, 1))


def small_input(rng, batch=3, dtype=np.float64):
    return rng.standard_normal((batch,) + SMALL.in_shape).astype(dtype)


def test_encoder_output_shape_default():
    enc = Encoder(EncoderConfig())
    x = np.random.default_rng(0).standard_normal((2, 4, 129, 43)).astype(np.float32)
    h = encode(enc, x, "eval")
    assert h.shape == (2, 128) == (2, enc.latent_dim)


@pytest.mark.parametrize("batch", [1, 2, 5])
def test_encoder_batch_sizes(batch, rng):
    enc = Encoder(SMALL)
    assert encode(enc, small_input(rng, batch), "eval").shape == (batch, SMALL.latent_dim)


def test_identical_rows_in_eval(rng):
    enc = Encoder(SMALL)
    x = np.repeat(small_input(rng, 1), 4, axis=0)
    h = encode(enc, x, "eval").data
    assert np.all(h == h[0])


def test_eval_is_pure_and_train_updates_stats(rng):
    enc = Encoder(SMALL)
    x = small_input(rng)
    before = {k: v.copy() for k, v in enc.named_buffers().items()}
    a = encode(enc, x, "eval").data
    b = encode(enc, x, "eval").data
    assert np.array_equal(a, b)
    assert all(np.array_equal(before[k], v) for k, v in enc.named_buffers().items())
    encode(enc, x, "train")
    assert any(not np.array_equal(before[k], v) for k, v in enc.named_buffers().items())


def test_zero_weight_network_is_constant(rng):
    enc = Encoder(SMALL)
    c = 0.7
    for name, p in enc.named_parameters().items():
        if name.endswith("weight"):
            p.data[...] = 0
        elif name.endswith("beta"):
            p.data[...] = c
    expected = np.float32(c)  # ELU(c) = c for c > 0
    h = encode(enc, small_input(rng, 2, np.float32), "eval").data
    np.testing.assert_allclose(h, expected, rtol=1e-6)
    c = -0.4
    for name, p in enc.named_parameters().items():
        if name.endswith("beta"):
            p.data[...] = c
    # stem: ELU(c); each block: ELU(c + 0) since the zero shortcut contributes nothing
    h = encode(enc, small_input(rng, 2, np.float32), "eval").data
    np.testing.assert_allclose(h, np.expm1(c), rtol=1e-6)


def test_shape_mismatch_names_layer(rng):
    enc = Encoder(SMALL)
    with pytest.raises(ShapeError, match="stem"):
        encode(enc, rng.standard_normal((2, 4, 17, 10)), "eval")
    with pytest.raises(ShapeError, match="projector.fc1"):
        Projector(6, 4)(Tensor(rng.standard_normal((2, 5))))


def test_projector_unit_norm_and_width(rng):
    proj = Projector(128, 128)
    z = project(proj, rng.standard_normal((6, 128))).data
    assert z.shape == (6, 128)
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-6)


def test_projector_scale_invariance(rng):
    proj = Projector(4, 4).astype(np.float64)
    proj.fc1.weight.data = np.eye(4)
    proj.fc2.weight.data = np.eye(4)
    h = np.abs(rng.standard_normal((3, 4)))
    np.testing.assert_allclose(project(proj, h).data, project(proj, 2 * h).data, atol=1e-15)


def test_projector_zero_input_maps_to_basis():
    proj = Projector(4, 3)
    for p in proj.parameters():
        p.data[...] = 0
    z = project(proj, np.zeros((2, 4))).data
    assert np.array_equal(z, np.tile([1.0, 0.0, 0.0], (2, 1)))


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_composed_network_gradients(mode, rng):
    net = ContraWRNet(SMALL, proj_dim=5, seed=3).astype(np.float64)
    net.train(mode == "train")
    if mode == "eval":
        # non-trivial running statistics
        for name, b in net.named_buffers().items():
            b[...] = rng.uniform(0.5, 1.5, b.shape) if name.endswith("var") else rng.normal(0, 0.3, b.shape)
    x = Tensor(small_input(rng, 4))
    target = rng.standard_normal((4, 5))
    loss = lambda: (net(x) * Tensor(target)).sum()
    for name, p in net.named_parameters().items():
        idx = rng.choice(p.data.size, size=min(6, p.data.size), replace=False)
        err, _, _ = check_parameter(loss, p, indices=idx)
        assert err < 1e-4, name


def test_input_gradient_through_encoder(rng):
    enc = Encoder(SMALL, seed=5).astype(np.float64).eval()
    proj = rng.standard_normal((2, SMALL.latent_dim))
    x = small_input(rng, 2)
    idx = rng.choice(x.size, 25, replace=False)
    err, _, _ = finite_difference_check(lambda t: (enc(t) * Tensor(proj)).sum(), x, indices=idx)
    assert err < 1e-4


def test_state_dict_round_trip(rng):
    a = ContraWRNet(SMALL, 5, seed=1)
    b = ContraWRNet(SMALL, 5, seed=2)
    b.load_state_dict(a.state_dict())
    x = small_input(rng, 2, np.float32)
    assert np.array_equal(a.eval()(Tensor(x)).data, b.eval()(Tensor(x)).data)


def test_adam_zero_gradient_fixed_point(rng):
    p = {"w": Tensor(rng.standard_normal(5).astype(np.float32), requires_grad=True)}
    before = p["w"].data.copy()
    st = AdamState()
    for _ in range(3):
        adam_step(p, {"w": np.zeros(5, np.float32)}, st, lr=1e-2, weight_decay=0.0)
    assert np.array_equal(p["w"].data, before)
    assert st.step == 3


def test_adam_first_step(rng):
    w0 = rng.standard_normal(6)
    g = rng.standard_normal(6)
    p = {"w": Tensor(w0.copy(), requires_grad=True)}
    adam_step(p, {"w": g}, AdamState(), lr=1e-3, weight_decay=0.0, eps=1e-8)
    # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    np.testing.assert_allclose(p["w"].data, w0 - 1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_weight_decay_enters_gradient():
    p = {"w": Tensor(np.array([2.0]), requires_grad=True)}
    st = AdamState()
    adam_step(p, {"w": np.array([0.0])}, st, lr=0.1, weight_decay=0.5)
    np.testing.assert_allclose(p["w"].data, [2.0 - 0.1])
    np.testing.assert_allclose(st.m["w"], [0.1 * 1.0])


def test_adam_defaults():
    import inspect

    sig = inspect.signature(adam_step)
    assert sig.parameters["lr"].default == 2e-4
    assert sig.parameters["weight_decay"].default == 1e-4


def test_adam_deterministic(rng):
    g = rng.standard_normal(4)
    outs = []
    for _ in range(2):
        p = {"w": Tensor(np.ones(4), requires_grad=True)}
        st = AdamState()
        for _ in range(5):
            adam_step(p, {"w": g}, st)
        outs.append(p["w"].data)
    assert np.array_equal(*outs)
