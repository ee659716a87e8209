import numpy as np
import pytest

from tgl import ad
from tgl.ad import Tensor, backward, gradcheck
from tgl.errors import ShapeError


def leaf(shape, seed=0, positive=False):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0.5, 2.0, shape) if positive else rng.standard_normal(shape)
    return Tensor(data, requires_grad=True)


def test_product_rule():
    x = Tensor(3.0, requires_grad=True)
    y = Tensor(4.0, requires_grad=True)
    g = backward(x * y)
    assert g[x] == 4.0 and g[y] == 3.0


def test_fan_out_accumulates():
    x = Tensor(2.0, requires_grad=True)
    g = backward(x * x + x)
    assert g[x] == pytest.approx(5.0)


def test_broadcast_gradient_shape():
    a = leaf((3, 4))
    b = leaf((4,), 1)
    g = backward(ad.sum(a + b))
    assert g[b].shape == (4,)
    np.testing.assert_allclose(g[b], 3.0)


def test_scalar_loss_required():
    with pytest.raises(ShapeError):
        backward(leaf((2,)) * 2)


def test_untracked_loss():
    with pytest.raises(ValueError):
        backward(Tensor(1.0) * 2)


def test_grad_stored_on_leaf():
    x = leaf((2,))
    backward(ad.sum(ad.square(x)))
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_untracked_leaf_gets_no_grad():
    x = leaf((2,))
    c = Tensor(np.ones(2))
    g = backward(ad.sum(x * c))
    assert c not in g


UNARY = {
    "exp": ad.exp, "tanh": ad.tanh, "sigmoid": ad.sigmoid, "softplus": ad.softplus,
    "leaky_relu": ad.leaky_relu, "square": ad.square,
    "softmax": lambda a: ad.softmax(a) * np.arange(1.0, 5.0),
    "log_softmax": lambda a: ad.log_softmax(a) * np.arange(1.0, 5.0),
    "amax": lambda a: ad.amax(a, axis=1),
    "mean": lambda a: ad.mean(a, axis=0),
    "transpose": lambda a: ad.transpose(a) @ np.ones((3, 2)),
    "reshape": lambda a: ad.reshape(a, (2, 6)) * np.arange(12.0).reshape(2, 6),
    "getitem": lambda a: a[1:, ::2],
    "pad": lambda a: ad.pad(a, ((1, 0), (0, 2))) * 3.0,
    "power3": lambda a: ad.power(a, 3),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradcheck(name):
    x = leaf((3, 4), seed=hash(name) % 100)
    f = UNARY[name]
    assert gradcheck(lambda: ad.sum(ad.square(f(x))), [x]) < 1e-6


def test_positive_domain_ops():
    x = leaf((3, 4), positive=True)
    for f in (ad.log, ad.sqrt, lambda a: 1.0 / a):
        assert gradcheck(lambda: ad.sum(f(x)), [x]) < 1e-6


def test_relu_and_clip_away_from_kinks():
    x = Tensor(np.array([-1.3, -0.2, 0.4, 2.2]), requires_grad=True)
    assert gradcheck(lambda: ad.sum(ad.relu(x) * x), [x]) < 1e-6
    assert gradcheck(lambda: ad.sum(ad.square(ad.clip(x, -1.0, 1.0))), [x]) < 1e-6


def test_binary_gradchecks():
    a, b = leaf((3, 4), 2), leaf((4, 5), 3)
    c = leaf((3, 4), 4, positive=True)
    assert gradcheck(lambda: ad.sum(ad.tanh(a @ b)), [a, b]) < 1e-6
    assert gradcheck(lambda: ad.sum(a / c - c * a), [a, c]) < 1e-6
    assert gradcheck(lambda: ad.sum(ad.where(a.data > 0, a, c)), [a, c]) < 1e-6


def test_batched_matmul_gradcheck():
    a, b = leaf((2, 3, 4), 5), leaf((4, 2), 6)
    assert gradcheck(lambda: ad.sum(ad.square(a @ b)), [a, b]) < 1e-6
    v = leaf((4,), 7)
    assert gradcheck(lambda: ad.sum(ad.square(a @ v)), [a, v]) < 1e-6


def test_concat_stack_gradcheck():
    a, b = leaf((2, 3), 8), leaf((2, 1), 9)
    assert gradcheck(lambda: ad.sum(ad.square(ad.concat([a, b], axis=1))), [a, b]) < 1e-6
    c = leaf((2, 3), 10)
    assert gradcheck(lambda: ad.sum(ad.stack([a, c]) * np.arange(12.0).reshape(2, 2, 3)), [a, c]) < 1e-6


def test_softplus_stable_for_large_inputs():
    x = Tensor(np.array([-800.0, 800.0]), requires_grad=True)
    y = ad.softplus(x)
    assert np.all(np.isfinite(y.data)) and y.data[1] == pytest.approx(800.0)
    g = backward(ad.sum(y))[x]
    np.testing.assert_allclose(g, [0.0, 1.0])


def test_log_softmax_stable():
    x = Tensor(np.array([[1000.0, 0.0]]))
    out = ad.log_softmax(x).data
    assert np.all(np.isfinite(out)) and out[0, 0] == pytest.approx(0.0)


def test_gradcheck_catches_wrong_gradient():
    x = leaf((3,))

    def bogus(a):
        return ad._result(a.data ** 2, (a,), lambda g: (g * 3.0 * a.data,))

    assert gradcheck(lambda: ad.sum(bogus(x)), [x]) > 0.1
