import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from stpark import autodiff as ad
from stpark.autodiff import Tensor, finite_diff_check


def leaf(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


def test_matmul_values():
    a = Tensor([[1.0, 0.0], [0.0, 1.0]])
    b = Tensor([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal((a @ b).data, [[3, 4], [5, 6]])
    np.testing.assert_array_equal((Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad_is_ones_times_bt():
    rng = np.random.default_rng(0)
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
    (a @ b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T, rtol=1e-12)
    err = finite_diff_check(lambda: (a @ b).sum(), [a, b])
    assert err < 1e-6


def test_batched_matmul_broadcast_grad():
    rng = np.random.default_rng(1)
    a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4, 5)))
    w = rng.normal(size=(2, 3, 5))
    assert finite_diff_check(lambda: ((a @ b) * w).sum(), [a, b]) < 1e-6


def test_elementwise_examples():
    np.testing.assert_array_equal(ad.elementwise("add", [1.0, 2.0], [0.0, 0.0]).data, [1, 2])
    np.testing.assert_array_equal(ad.elementwise("mul", [2.0, 3.0], [4.0, 5.0]).data, [8, 15])
    assert ad.elementwise("gelu", Tensor(0.0)).item() == 0.0
    with pytest.raises(ad.ShapeError):
        ad.add(Tensor(np.ones(3)), Tensor(np.ones(2)))


@pytest.mark.parametrize("kind", ["gelu", "relu", "exp", "abs"])
def test_unary_grads(kind):
    x = leaf(np.array([-1.3, -0.4, 0.25, 0.9, 2.0]))
    w = np.array([0.3, -1.0, 2.0, 0.5, 1.5])
    assert finite_diff_check(lambda: (ad.elementwise(kind, x) * w).sum(), [x]) < 1e-6


def test_div_and_broadcast_grads():
    rng = np.random.default_rng(2)
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.uniform(1, 2, size=(1, 4)))
    assert finite_diff_check(lambda: ((a / b) - a * b + (b - a)).sum(), [a, b]) < 1e-6


def test_concat_split_examples():
    out = ad.concat([Tensor([[1.0], [2.0]]), Tensor([[3.0], [4.0]])], axis=1)
    np.testing.assert_array_equal(out.data, [[1, 3], [2, 4]])
    parts = ad.split(Tensor(np.arange(6.0).reshape(2, 3)), [2, 1], axis=1)
    assert [p.shape for p in parts] == [(2, 2), (2, 1)]
    with pytest.raises(ad.ShapeError):
        ad.split(Tensor(np.ones((2, 3))), [2, 2], axis=1)
    with pytest.raises(ad.ShapeError):
        ad.concat([Tensor(np.ones((2, 1))), Tensor(np.ones((3, 1)))], axis=1)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(1, 4), min_size=1, max_size=4),
    st.integers(1, 3),
    st.integers(0, 2**31 - 1),
)
def test_split_concat_roundtrip_bitwise(sizes, rows, seed):
    rng = np.random.default_rng(seed)
    xs = [Tensor(rng.normal(size=(rows, s))) for s in sizes]
    joined = ad.concat(xs, axis=1)
    back = ad.split(joined, sizes, axis=1)
    for x, y in zip(xs, back):
        assert np.array_equal(x.data, y.data)
    again = ad.concat(back, axis=1)
    assert np.array_equal(again.data, joined.data)


def test_concat_split_grads():
    rng = np.random.default_rng(3)
    a, b = leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(2, 2)))
    w = rng.normal(size=(2, 5))

    def f():
        left, right = ad.split(ad.concat([a, b], axis=1) * w, [1, 4], axis=1)
        return (left * 2.0).sum() + (right * right).sum()

    assert finite_diff_check(f, [a, b]) < 1e-6


def test_softmax_examples():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5], atol=1e-15)
    np.testing.assert_array_equal(ad.softmax(Tensor([0.0, -np.inf])).data, [1.0, 0.0])
    np.testing.assert_allclose(ad.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5], atol=1e-15)
    with pytest.raises(ValueError):
        ad.softmax(Tensor([-np.inf, -np.inf]))


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_is_distribution(x):
    p = ad.softmax(Tensor(x), axis=-1).data
    assert (p >= 0).all()
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)


def test_softmax_masked_grad_exactly_zero():
    x = leaf(np.array([[0.3, 0.1, -0.2], [1.0, 2.0, 0.5]]))
    mask = np.array([[False, True, True], [False, False, True]])
    w = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]])
    ad.softmax(ad.masked_fill(x, mask, -np.inf), axis=-1).__mul__(w).sum().backward()
    assert np.all(x.grad[mask] == 0.0)
    assert finite_diff_check(lambda: (ad.softmax(ad.masked_fill(x, mask, -np.inf)) * w).sum(), [x]) < 1e-6


def test_layer_norm_examples():
    np.testing.assert_array_equal(ad.layer_norm(Tensor([5.0, 5.0, 5.0])).data, [0, 0, 0])
    # (x - mu) / sqrt(var + eps) with mu = 0, var = 1
    expected = np.array([1.0, -1.0]) / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(ad.layer_norm(Tensor([1.0, -1.0])).data, expected, rtol=1e-15)
    with pytest.raises(ad.ShapeError):
        ad.layer_norm(Tensor(np.ones((2, 0))))


def test_layer_norm_moments_and_grad():
    rng = np.random.default_rng(4)
    x = leaf(rng.normal(size=(4, 6)) * 3 + 1)
    y = ad.layer_norm(x).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-9)
    var = x.data.var(axis=-1)
    np.testing.assert_allclose(y.var(axis=-1), var / (var + 1e-5), atol=1e-9)
    g, b = leaf(rng.normal(size=6)), leaf(rng.normal(size=6))
    w = rng.normal(size=(4, 6))
    assert finite_diff_check(lambda: (ad.layer_norm(x, g, b) * w).sum(), [x, g, b]) < 1e-6


def test_backward_examples():
    x = leaf([1.0, 1.0, 1.0])
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [1, 1, 1])
    x = leaf([1.0, 2.0])
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2, 4])
    with pytest.raises(ad.ShapeError):
        (x * 2.0).backward()


def test_leaf_used_twice_accumulates():
    x = leaf([3.0])
    (x + x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0])
    y = leaf([2.0])
    z = y * 3.0
    (z * z + z).sum().backward()
    np.testing.assert_allclose(y.grad, [2 * 9 * 2.0 + 3.0])


def test_mlp_composite_grad():
    rng = np.random.default_rng(5)
    w1, b1 = leaf(rng.normal(size=(3, 8)) * 0.5), leaf(np.zeros(8))
    w2, b2 = leaf(rng.normal(size=(8, 2)) * 0.5), leaf(np.zeros(2))
    x = rng.normal(size=(5, 3))
    y = rng.normal(size=(5, 2))

    def loss():
        h = ad.gelu(x @ w1 + b1)
        d = h @ w2 + b2 - y
        return (d * d).mean()

    assert finite_diff_check(loss, [w1, b1, w2, b2]) < 1e-4


def test_finite_diff_check_polynomial():
    w = leaf([3.0])
    loss = lambda: (w * w).sum()
    loss().backward()
    assert w.grad[0] == 6.0
    assert finite_diff_check(loss, [w]) < 1e-9


def test_finite_diff_check_rejects_nonfinite():
    w = leaf([1.0])
    with pytest.raises(ad.NonFiniteError):
        finite_diff_check(lambda: Tensor(np.nan), [w])


def test_nan_is_an_error():
    with np.errstate(invalid="ignore"), pytest.raises(ad.NonFiniteError):
        ad.mul(Tensor([np.inf]), 0.0)


def test_no_grad_builds_no_graph():
    w = leaf([1.0, 2.0])
    with ad.no_grad():
        out = (w * w).sum()
    assert not out.requires_grad
    assert out._parents == ()


def test_linear_along_axis_grad():
    rng = np.random.default_rng(6)
    m = rng.normal(size=(4, 3))
    x = leaf(rng.normal(size=(2, 3, 5)))
    w = rng.normal(size=(2, 4, 5))
    assert finite_diff_check(lambda: (ad.linear_along_axis(x, m, 1) * w).sum(), [x]) < 1e-6


def test_embedding_lookup_and_scatter_grad():
    table = leaf(np.arange(6.0).reshape(3, 2))
    out = ad.embedding(table, [2, 0, 2])
    np.testing.assert_array_equal(out.data, [[4, 5], [0, 1], [4, 5]])
    out.sum().backward()
    np.testing.assert_array_equal(table.grad, [[1, 1], [0, 0], [2, 2]])
    with pytest.raises(IndexError):
        ad.embedding(table, [3])
