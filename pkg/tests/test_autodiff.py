import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cncforge import autodiff as ad


def numeric_grad(f, x, eps=1e-6):
    """Central finite differences of scalar f at x (flat loop oracle)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_grad(build, x, rtol=1e-6, atol=1e-8):
    """build(Var) -> scalar Var; compares backward() against central FD."""
    v = ad.Var(np.array(x, dtype=np.float64))
    out = build(v)
    out.backward()
    num = numeric_grad(lambda a: float(ad.value_of(build(ad.Var(a)))), np.array(x))
    np.testing.assert_allclose(v.grad, num, rtol=rtol, atol=atol)


def test_add_mul_chain():
    check_grad(lambda v: ((v * 3.0 + 1.5) * v).sum(), [0.2, -0.7, 1.1])


def test_div_and_pow():
    check_grad(lambda v: (v ** 3 / (v * v + 1.0)).sum(), [0.5, -1.2, 2.0])


def test_rsub_rdiv():
    check_grad(lambda v: (2.0 - v).sum() + (1.0 / v).sum(), [0.5, 1.5, -2.0])


def test_unary_functions():
    x = [0.3, -0.9, 1.7, -2.2]
    check_grad(lambda v: ad.tanh(v).sum(), x)
    check_grad(lambda v: ad.exp(v * 0.5).sum(), x)
    check_grad(lambda v: ad.sin(v).sum(), x)
    check_grad(lambda v: ad.cos(v).sum(), x)
    check_grad(lambda v: ad.sqrt(v * v + 1.0).sum(), x)
    check_grad(lambda v: ad.square(v).sum(), x)


def test_maximum_routes_to_first_on_tie():
    a = ad.Var(np.array([1.0, 2.0]))
    b = ad.Var(np.array([1.0, 5.0]))
    out = ad.maximum(a, b).sum()
    out.backward()
    np.testing.assert_array_equal(a.grad, [1.0, 0.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def test_minimum_routes_to_first_on_tie():
    a = ad.Var(np.array([1.0, 2.0]))
    b = ad.Var(np.array([1.0, -5.0]))
    out = ad.minimum(a, b).sum()
    out.backward()
    np.testing.assert_array_equal(a.grad, [1.0, 0.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def test_maximum_minimum_grad():
    rng = np.random.default_rng(0)
    x = rng.normal(size=6)
    y = rng.normal(size=6)
    check_grad(lambda v: ad.maximum(v, y).sum() + ad.minimum(v * 2.0, y).sum(), x)


def test_reduction_min_max_first_index():
    x = ad.Var(np.array([[2.0, 1.0, 1.0], [0.5, 3.0, 0.5]]))
    out = ad.amin(x, axis=1).sum()
    out.backward()
    np.testing.assert_array_equal(x.grad, [[0, 1, 0], [1, 0, 0]])


def test_reduction_grad_against_fd():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 5))
    check_grad(lambda v: ad.amin(v, axis=1).sum(), x)
    check_grad(lambda v: ad.amax(v, axis=0).sum(), x)
    check_grad(lambda v: ad.amin(v), x)


def test_sum_mean_axes():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 4))
    check_grad(lambda v: ad.sum_(v, axis=0).sum(), x)
    check_grad(lambda v: ad.mean(v, axis=1).sum(), x)
    check_grad(lambda v: ad.mean(v) * 7.0, x)


def test_cumsum():
    check_grad(lambda v: (ad.cumsum(v) * np.array([1.0, -2.0, 3.0])).sum(),
               [0.1, 0.2, 0.3])


def test_take_duplicate_indices_accumulate():
    x = ad.Var(np.array([1.0, 2.0, 3.0]))
    out = ad.take(x, np.array([0, 0, 2])).sum()
    out.backward()
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])


def test_take_scalar_index_and_getitem():
    x = ad.Var(np.array([4.0, 5.0, 6.0]))
    out = x[1] * 3.0
    out.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 3.0, 0.0])


def test_repeat_interleave():
    x = ad.Var(np.array([1.0, 2.0]))
    out = (ad.repeat_interleave(x, 3) * np.arange(6.0)).sum()
    out.backward()
    np.testing.assert_array_equal(x.grad, [0 + 1 + 2, 3 + 4 + 5])


def test_concatenate():
    a = ad.Var(np.array([1.0, 2.0]))
    b = ad.Var(np.array([3.0]))
    out = (ad.concatenate([a, b]) * np.array([1.0, 10.0, 100.0])).sum()
    out.backward()
    np.testing.assert_array_equal(a.grad, [1.0, 10.0])
    np.testing.assert_array_equal(b.grad, [100.0])


def test_reshape_roundtrip():
    rng = np.random.default_rng(3)
    x = rng.normal(size=6)
    check_grad(lambda v: (v.reshape(2, 3) * np.ones((2, 3))).sum() ** 2, x)


def test_broadcasting_unbroadcast():
    a = ad.Var(np.array([[1.0], [2.0]]))      # (2, 1)
    b = ad.Var(np.array([10.0, 20.0, 30.0]))  # (3,)
    out = (a * b).sum()
    out.backward()
    np.testing.assert_array_equal(a.grad, [[60.0], [60.0]])
    np.testing.assert_array_equal(b.grad, [3.0, 3.0, 3.0])


def test_diamond_graph_accumulates():
    # d(x*x + x*x)/dx = 4x, shared node used twice
    x = ad.Var(np.array(3.0))
    y = x * x
    out = y + y
    out.backward()
    assert float(x.grad) == pytest.approx(12.0)


def test_softmax_grad_and_value():
    logits = np.array([0.3, -1.2, 0.7, 0.1])
    s = ad.softmax(logits)
    np.testing.assert_allclose(np.sum(s), 1.0, atol=1e-15)
    check_grad(lambda v: (ad.softmax(v) * np.array([1.0, 2.0, 3.0, 4.0])).sum(),
               logits)


def test_untaped_fallbacks_match_numpy():
    x = np.linspace(-1, 1, 7)
    np.testing.assert_array_equal(ad.tanh(x), np.tanh(x))
    np.testing.assert_array_equal(ad.maximum(x, 0.0), np.maximum(x, 0.0))
    np.testing.assert_array_equal(ad.amin(x), np.min(x))
    assert not ad.is_var(x)


def test_ndarray_left_operand_dispatches_to_var():
    x = ad.Var(np.array([1.0, 2.0]))
    out = (np.array([3.0, 4.0]) - x).sum()
    assert isinstance(out, ad.Var)
    out.backward()
    np.testing.assert_array_equal(x.grad, [-1.0, -1.0])


def test_backward_requires_scalar():
    x = ad.Var(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        (x * 2).backward()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=8))
def test_tanh_odd_symmetry(xs):
    x = np.array(xs)
    np.testing.assert_allclose(ad.tanh(-x), -ad.tanh(x), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2 ** 31 - 1))
def test_random_composite_gradcheck(rows, cols, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(rows, cols)) * 2.0

    def build(v):
        a = ad.tanh(v) * 0.5 + ad.square(v) * 0.1
        b = ad.maximum(a, v * 0.3)
        return ad.mean(ad.amin(b, axis=1)) + ad.sum_(b) * 0.01

    # keep away from max/min ties for clean FD comparison
    if np.min(np.abs(np.tanh(x) * 0.5 + 0.1 * x * x - 0.3 * x)) < 1e-3:
        return
    check_grad(build, x, rtol=1e-5, atol=1e-7)
