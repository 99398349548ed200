import numpy as np
import pytest

from contrawr.errors import ContractError, ShapeError
from contrawr.nn import autodiff as ad
from contrawr.nn.autodiff import Tensor
from contrawr.nn.gradcheck import finite_difference_check

TOL = 1e-4


def test_sum_gradient_is_ones(rng):
    theta = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    theta.sum().backward()
    assert np.array_equal(theta.grad, np.ones((3, 4)))


def test_half_squared_norm_gradient(rng):
    theta = Tensor(rng.standard_normal(7), requires_grad=True)
    ((theta * theta).sum() * 0.5).backward()
    np.testing.assert_allclose(theta.grad, theta.data)


def test_backward_needs_scalar(rng):
    theta = Tensor(rng.standard_normal(3), requires_grad=True)
    with pytest.raises(ContractError):
        (theta * 2).backward()


def test_gradients_accumulate_over_shared_nodes():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = x * x
    (y + y * x).backward()
    np.testing.assert_allclose(x.grad, 2 * 3 + 3 * 9)


def test_graph_released_unless_retained():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = (x * x).sum()
    y.backward(retain_graph=True)
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * 2 * x.data)
    assert y.is_leaf


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = (x * 2).sum()
    assert not y.requires_grad


@pytest.mark.parametrize(
    "fn,shape",
    [
        (lambda t: (ad.exp(t) * ad.log(t * t + 1.0)).sum(), (5,)),
        (lambda t: (ad.sqrt(t * t + 2.0) / (t + 3.0)).sum(), (2, 3)),
        (lambda t: ad.logsumexp(t * 3.0, axis=1).sum(), (4, 6)),
        (lambda t: (ad.softmax(t, axis=-1) * Tensor(np.arange(6.0))).sum(), (3, 6)),
        (lambda t: (ad.matmul(t, t.T) * Tensor(np.arange(16.0).reshape(4, 4))).sum(), (4, 3)),
        (lambda t: (ad.concatenate([t, t * t], axis=0) ** 3).sum(), (2, 2)),
        (lambda t: (ad.elu(t) ** 2).sum(), (10,)),
        (lambda t: (ad.relu(t) ** 2).sum(), (10,)),
    ],
)
def test_elementwise_and_reduction_gradients(fn, shape, rng):
    x = rng.uniform(0.2, 1.5, size=shape) * rng.choice([-1, 1], size=shape)
    err, _, _ = finite_difference_check(fn, x)
    assert err < TOL


def test_linear_gradient(rng):
    W = rng.standard_normal((3, 5))
    b = rng.standard_normal(3)
    x = rng.standard_normal((4, 5))
    f_x = lambda t: (ad.linear(t, Tensor(W), Tensor(b)) ** 2).sum()
    f_w = lambda t: (ad.linear(Tensor(x), t, Tensor(b)) ** 2).sum()
    f_b = lambda t: (ad.linear(Tensor(x), Tensor(W), t) ** 2).sum()
    for f, p in ((f_x, x), (f_w, W), (f_b, b)):
        assert finite_difference_check(f, p)[0] < TOL


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_gradient(stride, padding, rng):
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    proj = rng.standard_normal(ad.conv2d(Tensor(x), Tensor(w), stride, padding).shape)
    f_x = lambda t: (ad.conv2d(t, Tensor(w), stride, padding) * Tensor(proj)).sum()
    f_w = lambda t: (ad.conv2d(Tensor(x), t, stride, padding) * Tensor(proj)).sum()
    assert finite_difference_check(f_x, x)[0] < TOL
    assert finite_difference_check(f_w, w)[0] < TOL


def test_conv_matches_direct_loop(rng):
    x = rng.standard_normal((1, 2, 6, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    out = ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for o in range(3):
        for i in range(out.shape[2]):
            for j in range(out.shape[3]):
                ref[0, o, i, j] = (xp[0, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3] * w[o]).sum()
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv_shape_error_names_layer():
    with pytest.raises(ShapeError, match="block1.conv1"):
        ad.conv2d(Tensor(np.zeros((1, 2, 5, 5))), Tensor(np.zeros((3, 4, 3, 3))), name="block1.conv1")


@pytest.mark.parametrize("training", [True, False])
def test_batchnorm_gradient(training, rng):
    x = rng.standard_normal((3, 2, 4, 3)) * 2 + 1
    gamma = rng.uniform(0.5, 1.5, 2)
    beta = rng.standard_normal(2)
    proj = rng.standard_normal(x.shape)

    def bn(xx, gg, bb):
        rm, rv = np.array([0.3, -0.2]), np.array([1.5, 0.7])
        return (ad.batch_norm(xx, gg, bb, rm, rv, training) * Tensor(proj)).sum()

    assert finite_difference_check(lambda t: bn(t, Tensor(gamma), Tensor(beta)), x)[0] < TOL
    assert finite_difference_check(lambda t: bn(Tensor(x), t, Tensor(beta)), gamma)[0] < TOL
    assert finite_difference_check(lambda t: bn(Tensor(x), Tensor(gamma), t), beta)[0] < TOL


def test_batchnorm_running_stats(rng):
    x = rng.standard_normal((4, 2, 3, 3)) + 5
    rm, rv = np.zeros(2), np.ones(2)
    ad.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, training=True)
    n = 4 * 9
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * n / (n - 1))
    before = (rm.copy(), rv.copy())
    out = ad.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, training=False)
    assert np.array_equal(rm, before[0]) and np.array_equal(rv, before[1])
    np.testing.assert_allclose(out.data, (x - rm[None, :, None, None]) / np.sqrt(rv[None, :, None, None] + 1e-5))


def test_l2_normalize_gradient_and_zero_row(rng):
    x = rng.standard_normal((3, 5))
    proj = rng.standard_normal((3, 5))
    assert finite_difference_check(lambda t: (ad.l2_normalize(t) * Tensor(proj)).sum(), x)[0] < TOL
    z = ad.l2_normalize(Tensor(np.zeros((2, 4)), requires_grad=True))
    assert np.array_equal(z.data, np.tile([1.0, 0, 0, 0], (2, 1)))


def test_adaptive_pool_gradient(rng):
    x = rng.standard_normal((2, 3, 9, 3))
    proj = rng.standard_normal((2, 3, 2, 1))
    out = ad.adaptive_avg_pool2d(Tensor(x), (2, 1))
    np.testing.assert_allclose(out.data[:, :, 0, 0], x[:, :, 0:5].mean(axis=(2, 3)))
    np.testing.assert_allclose(out.data[:, :, 1, 0], x[:, :, 4:9].mean(axis=(2, 3)))
    assert finite_difference_check(lambda t: (ad.adaptive_avg_pool2d(t, (2, 1)) * Tensor(proj)).sum(), x)[0] < TOL


def test_elu_kink_one_sided():
    assert float(ad.elu(Tensor(np.array(0.0)))) == 0.0
    h = 1e-7
    for side in (1, -1):
        x = Tensor(np.array(side * 1e-12), requires_grad=True)
        ad.elu(x).backward()
        one_sided = (float(ad.elu(Tensor(np.array(side * (1e-12 + h))))) - float(ad.elu(Tensor(np.array(side * 1e-12))))) / (side * h)
        assert abs(x.grad - one_sided) < 1e-6
    # continuity at 0
    assert abs(float(ad.elu(Tensor(np.array(-1e-9))))) < 1e-8


def test_float32_is_preserved(rng):
    x = Tensor(rng.standard_normal((2, 3)).astype(np.float32), requires_grad=True)
    y = ad.elu(ad.linear(x, Tensor(np.ones((4, 3), np.float32)))).sum() * 0.5
    y.backward()
    assert y.dtype == np.float32 and x.grad.dtype == np.float32
