import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlconformer import numerics as nx
from mlconformer.numerics import Tensor


def rand(rng, *shape):
    return Tensor(rng.uniform(-1, 1, size=shape), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- matmul ----------------------------------------------------------------------


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ Tensor(np.eye(2))).data, a.data)


def test_matmul_hand_value():
    assert (Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error():
    with pytest.raises(nx.ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_matmul_gradcheck(rng):
    a, b = rand(rng, 3, 4), rand(rng, 4, 2)
    w = Tensor(rng.normal(size=(3, 2)))
    report = nx.grad_check(lambda a, b: ((a @ b) * w).sum(), [a, b], step=1e-5, tol=1e-6)
    assert report.passed, report


def test_batched_matmul_weight_gradcheck(rng):
    x, w = rand(rng, 2, 3, 4), rand(rng, 4, 5)
    c = Tensor(rng.normal(size=(2, 3, 5)))
    assert nx.grad_check(lambda x, w: ((x @ w) * c).sum(), [x, w], tol=1e-6).passed


# -- softmax ------------------------------------------------------------------------


def test_softmax_symmetric():
    np.testing.assert_allclose(nx.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_stable_for_large_inputs():
    y = nx.softmax(Tensor([1000.0, 0.0])).data
    assert np.isfinite(y).all()
    assert y[0] == pytest.approx(1.0) and y[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_gradcheck(rng):
    x = rand(rng, 3, 5)
    w = Tensor(rng.normal(size=(3, 5)))
    assert nx.grad_check(lambda x: (nx.softmax(x, axis=-1) * w).sum(), x, tol=1e-6).passed


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-700, 700)), st.sampled_from([0, 1, -1]))
def test_softmax_sums_to_one(x, axis):
    y = nx.softmax(Tensor(x), axis=axis).data
    assert np.all(np.abs(y.sum(axis=axis) - 1.0) < 1e-12)
    assert np.all(y >= 0) and np.all(y <= 1)


def test_log_softmax_matches_log_of_softmax(rng):
    x = Tensor(rng.normal(size=(4, 7)))
    np.testing.assert_allclose(nx.log_softmax(x).data, np.log(nx.softmax(x).data), atol=1e-12)


def test_log_softmax_gradcheck(rng):
    x = rand(rng, 2, 3, 4)
    w = Tensor(rng.normal(size=(2, 3, 4)))
    assert nx.grad_check(lambda x: (nx.log_softmax(x) * w).sum(), x, tol=1e-6).passed


# -- layer norm -----------------------------------------------------------------------


def test_layer_norm_constant_vector_is_zero():
    y = nx.layer_norm(Tensor([3.0, 3.0, 3.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=1e-5)
    np.testing.assert_array_equal(y.data, 0.0)


def test_layer_norm_hand_value():
    y = nx.layer_norm(Tensor([1.0, 3.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-15)
    np.testing.assert_allclose(y.data, [-1.0, 1.0], atol=1e-12)


def test_layer_norm_moments(rng):
    x = Tensor(rng.normal(3, 5, size=(6, 16)))
    y = nx.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-12).data
    assert np.abs(y.mean(axis=-1)).max() < 1e-9
    assert np.abs(y.var(axis=-1) - 1).max() < 1e-9


def test_layer_norm_gradcheck(rng):
    x, g, b = rand(rng, 2, 3, 6), rand(rng, 6), rand(rng, 6)
    w = Tensor(rng.normal(size=(2, 3, 6)))
    assert nx.grad_check(lambda x, g, b: (nx.layer_norm(x, g, b, 1e-5) * w).sum(), [x, g, b], tol=1e-6).passed


def test_layer_norm_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        nx.layer_norm(Tensor([1.0, 2.0]), Tensor([1.0, 1.0]), Tensor([0.0, 0.0]), eps=0.0)


# -- conv1d ----------------------------------------------------------------------------


def test_conv1d_identity_kernel(rng):
    x = Tensor(rng.normal(size=(4, 3)))
    w = Tensor(np.eye(3)[None])  # K=1
    np.testing.assert_array_equal(nx.conv1d(x, w).data, x.data)


def test_conv1d_length_formula():
    x = Tensor(np.ones((10, 2)))
    w = Tensor(np.ones((3, 2, 4)))
    assert nx.conv1d(x, w, stride=2, padding=1).shape == (5, 4)


def test_conv1d_too_short():
    with pytest.raises(nx.ShapeError):
        nx.conv1d(Tensor(np.ones((2, 1))), Tensor(np.ones((5, 1, 1))))


def _conv_reference(x, w, b, stride, padding, groups):
    B, T, C = x.shape
    K, cg_in, C_out = w.shape
    cg_out = C_out // groups
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0)))
    T_out = (T + 2 * padding - K) // stride + 1
    out = np.zeros((B, T_out, C_out))
    for bi in range(B):
        for t in range(T_out):
            for o in range(C_out):
                grp = o // cg_out
                acc = b[o]
                for k in range(K):
                    for c in range(cg_in):
                        acc += xp[bi, t * stride + k, grp * cg_in + c] * w[k, c, o]
                out[bi, t, o] = acc
    return out


@pytest.mark.parametrize(
    "C_in,C_out,K,stride,padding,groups",
    [(3, 4, 3, 1, 1, 1), (2, 5, 3, 2, 1, 1), (4, 4, 5, 1, 2, 4), (4, 6, 3, 1, 0, 2)],
)
def test_conv1d_matches_loops_and_gradcheck(rng, C_in, C_out, K, stride, padding, groups):
    x = rand(rng, 2, 7, C_in)
    w = rand(rng, K, C_in // groups, C_out)
    b = rand(rng, C_out)
    out = nx.conv1d(x, w, b, stride=stride, padding=padding, groups=groups)
    np.testing.assert_allclose(out.data, _conv_reference(x.data, w.data, b.data, stride, padding, groups), atol=1e-12)
    proj = Tensor(rng.normal(size=out.shape))
    report = nx.grad_check(
        lambda x, w, b: (nx.conv1d(x, w, b, stride=stride, padding=padding, groups=groups) * proj).sum(),
        [x, w, b],
        tol=1e-6,
    )
    assert report.passed, report


# -- elementwise suite ----------------------------------------------------------------------


def test_swish_zero():
    assert nx.swish(Tensor(0.0)).item() == 0.0


def test_dropout_zero_rate_identity(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    np.testing.assert_array_equal(nx.dropout(x, 0.0, nx.make_rng(5)).data, x.data)


def test_dropout_eval_identity(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    assert nx.dropout(x, 0.5, nx.make_rng(5), training=False) is x


def test_dropout_seed_deterministic_and_scaled():
    x = Tensor(np.ones((50, 40)))
    a = nx.dropout(x, 0.25, nx.make_rng(9, "drop")).data
    b = nx.dropout(x, 0.25, nx.make_rng(9, "drop")).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 1.0 / 0.75}


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_dropout_bad_rate(rate):
    with pytest.raises(ValueError):
        nx.dropout(Tensor([1.0]), rate, nx.make_rng(0))


def test_glu_direct_formula(rng):
    x = rng.normal(size=(5, 8))
    a, b = x[:, :4], x[:, 4:]
    np.testing.assert_allclose(nx.glu(Tensor(x)).data, a / (1 + np.exp(-b)), atol=1e-14)


@pytest.mark.parametrize(
    "fn",
    [
        nx.sigmoid,
        nx.swish,
        nx.tanh,
        nx.exp,
        lambda t: nx.glu(t, axis=-1),
        lambda t: nx.log(t * t + 1.0),
        lambda t: t.mean(axis=0),
        lambda t: t.transpose(1, 0),
        lambda t: nx.concat([t, t * 2.0], axis=1),
        lambda t: t[1:, ::2],
        lambda t: t / (t * t + 2.0),
        lambda t: t.reshape(-1) - 1.0,
    ],
)
def test_elementwise_gradcheck(rng, fn):
    x = rand(rng, 3, 4)
    out_shape = fn(Tensor(x.data)).shape
    w = Tensor(rng.normal(size=out_shape))
    report = nx.grad_check(lambda x: (fn(x) * w).sum(), x, tol=1e-4)
    assert report.passed, report


def test_dropout_gradcheck():
    x = Tensor(np.random.default_rng(3).uniform(-1, 1, (4, 5)), requires_grad=True)
    report = nx.grad_check(lambda x: (nx.dropout(x, 0.3, nx.make_rng(11)) * x).sum(), x)
    assert report.passed


# -- backward ------------------------------------------------------------------------------


def test_backward_sum_gives_ones(rng):
    x = rand(rng, 2, 3, 4)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_dot_product(rng):
    x, y = rand(rng, 5), rand(rng, 5)
    (x * y).sum().backward()
    np.testing.assert_array_equal(x.grad, y.data)
    np.testing.assert_array_equal(y.grad, x.data)


def test_backward_requires_scalar(rng):
    with pytest.raises(nx.ContractError):
        (rand(rng, 3) * 2.0).backward()


def test_unreachable_leaf_keeps_zero_grad(rng):
    x, unused = rand(rng, 3), rand(rng, 3)
    (x * x).sum().backward()
    np.testing.assert_array_equal(unused.grad, 0.0)


def test_shared_subexpression_accumulates(rng):
    x = rand(rng, 4)
    y = x * 3.0
    (y * y + y).sum().backward()
    np.testing.assert_allclose(x.grad, 18 * x.data + 3)


def test_mlp_gradcheck(rng):
    x = Tensor(rng.uniform(-1, 1, (6, 5)))
    w1, b1 = rand(rng, 5, 8), rand(rng, 8)
    w2, b2 = rand(rng, 8, 7), rand(rng, 7)
    w3, b3 = rand(rng, 7, 3), rand(rng, 3)
    targets = rng.integers(0, 3, size=6)
    onehot = Tensor(np.eye(3)[targets])

    def loss(w1, b1, w2, b2, w3, b3):
        h = nx.tanh(x @ w1 + b1)
        h = nx.swish(h @ w2 + b2)
        return -(nx.log_softmax(h @ w3 + b3) * onehot).sum() / 6.0

    report = nx.grad_check(loss, [w1, b1, w2, b2, w3, b3], tol=1e-5)
    assert report.passed, report


def test_no_grad_records_nothing(rng):
    x = rand(rng, 3)
    with nx.no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad and y.is_leaf


def test_non_finite_forward_is_an_error():
    with pytest.raises(nx.NonFiniteError, match="log"):
        nx.log(Tensor([0.0, 1.0]))


# -- grad_check harness ----------------------------------------------------------------------


def test_grad_check_linear_is_exact(rng):
    x = rand(rng, 4, 3)
    w = Tensor(rng.normal(size=(4, 3)))
    report = nx.grad_check(lambda x: (x * w).sum(), x)
    assert report.max_rel_error < 1e-9


def test_grad_check_softmax_cross_entropy(rng):
    x = rand(rng, 4, 6)
    onehot = Tensor(np.eye(6)[[0, 3, 5, 1]])
    report = nx.grad_check(lambda x: -(nx.log_softmax(x) * onehot).sum(), x, step=1e-5, tol=1e-6)
    assert report.passed


def test_grad_check_flags_wrong_backward(rng):
    def bad_square(t):
        return nx.ops.custom(t.data**2, (t,), lambda g: (g * 3.0 * t.data,), "bad_square")

    report = nx.grad_check(lambda x: bad_square(x).sum(), rand(rng, 5))
    assert not report.passed


# -- random streams --------------------------------------------------------------------


def test_make_rng_keys_are_independent_of_order():
    a = nx.make_rng(7, "utt1").random(4)
    nx.make_rng(7, "utt2").random(100)
    b = nx.make_rng(7, "utt1").random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, nx.make_rng(7, "utt2").random(4))
