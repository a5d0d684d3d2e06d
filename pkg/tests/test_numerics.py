"""Tensor engine: op semantics, gradient rules vs finite differences, tape
behavior, and the seeded random stream."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptpose import numerics as nm
from promptpose.errors import ContractError, NumericError, ShapeError
from promptpose.numerics import Rng, Tensor

from oracles import finite_diff_grad, max_rel_err


def t64(arr, grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad,
                  dtype=np.float64)


def rand64(rng, shape):
    return rng.uniform(-2.0, 2.0, shape).astype(np.float64)


# -- matmul --------------------------------------------------------------------

def test_matmul_identity():
    eye = Tensor(np.eye(2))
    out = nm.matmul(eye, Tensor(np.eye(2)))
    np.testing.assert_array_equal(out.data, np.eye(2, dtype=np.float32))


def test_matmul_hand_case():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    np.testing.assert_allclose(nm.matmul(a, b).data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        nm.matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 2))))
    assert "(3, 4)" in str(err.value) and "(3, 2)" in str(err.value)


def test_matmul_gradients_match_finite_differences():
    gen = np.random.default_rng(0)
    a = t64(rand64(gen, (3, 4)))
    b = t64(rand64(gen, (4, 2)))
    w = rand64(gen, (3, 2))

    def run():
        return float(np.sum((a.data @ b.data) * w))

    loss = nm.tsum(nm.mul(nm.matmul(a, b), Tensor(w, dtype=np.float64)))
    nm.backward(loss)
    assert max_rel_err(a.grad, finite_diff_grad(run, a.data)) < 1e-4
    assert max_rel_err(b.grad, finite_diff_grad(run, b.data)) < 1e-4


# -- softmax -------------------------------------------------------------------

def test_softmax_uniform():
    out = nm.softmax(Tensor([0.0, 0.0, 0.0]), axis=-1)
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-7)


def test_softmax_saturation_is_stable():
    out = nm.softmax(Tensor([1000.0, 0.0, 0.0]), axis=-1)
    np.testing.assert_allclose(out.data, [1.0, 0.0, 0.0], atol=1e-12)


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        nm.softmax(Tensor([np.nan, 0.0]), axis=-1)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
@settings(max_examples=60, deadline=None)
def test_softmax_sums_to_one(values):
    out = nm.softmax(Tensor(np.array(values, dtype=np.float64), dtype=np.float64))
    assert abs(out.data.sum() - 1.0) < 1e-9


def test_softmax_cross_entropy_gradient_matches_fd():
    gen = np.random.default_rng(1)
    x = t64(rand64(gen, (5,)))
    target = 2

    def loss_fn():
        e = np.exp(x.data - x.data.max())
        p = e / e.sum()
        return float(-np.log(p[target]))

    p = nm.softmax(x, axis=-1)
    # -log p[target] via ops: slice + ... use cross-entropy op directly below;
    # here check softmax backward through an arbitrary functional
    loss = nm.neg(nm.tsum(nm.mul(nm.slice_axis(p, 0, target, target + 1), 1.0)))
    # d(-p2)/dx vs finite differences of -p2
    def f2():
        e = np.exp(x.data - x.data.max())
        return float(-(e / e.sum())[target])
    nm.backward(loss)
    assert max_rel_err(x.grad, finite_diff_grad(f2, x.data)) < 1e-4


# -- backward contract -----------------------------------------------------------

def test_backward_sum_gives_ones():
    w = t64([1.0, 2.0, 3.0])
    nm.backward(nm.tsum(w))
    np.testing.assert_array_equal(w.grad, np.ones(3))


def test_backward_half_square_gives_identity():
    w = t64([1.0, -2.0, 3.0])
    nm.backward(nm.mul(nm.tsum(nm.mul(w, w)), 0.5))
    np.testing.assert_allclose(w.grad, w.data, rtol=1e-12)


def test_backward_requires_scalar():
    w = t64([[1.0, 2.0]])
    with pytest.raises(ContractError):
        nm.backward(nm.mul(w, 2.0))


def test_backward_clears_tape_and_accumulates_leaf_grads():
    w = t64([1.0, 2.0])
    loss = nm.tsum(w)
    nm.backward(loss)
    assert loss._parents == () and loss._backward is None
    nm.backward(nm.tsum(w))
    np.testing.assert_array_equal(w.grad, 2 * np.ones(2))  # accumulated


# -- per-op finite-difference sweep ----------------------------------------------

def _op_cases():
    gen = np.random.default_rng(7)

    def case(name, build, *shapes):
        tensors = [t64(rand64(gen, s)) for s in shapes]
        return name, build, tensors

    kpt_b = rand64(gen, (2, 3))
    emb_ids = np.array([0, 2, 1, 2])
    gather_b = np.array([0, 1])
    gather_p = np.array([2, 0])
    mask = np.where(np.tril(np.ones((4, 4))) > 0, 0.0, -np.inf)[None, None]
    cos = np.cos(rand64(gen, (4, 6)))
    sin = np.sin(rand64(gen, (4, 6)))

    return [
        case("add", lambda t: nm.add(t[0], t[1]), (3, 4), (3, 4)),
        case("add_broadcast", lambda t: nm.add(t[0], t[1]), (3, 4), (4,)),
        case("add_scalar", lambda t: nm.add(t[0], 1.5), (3, 4)),
        case("sub", lambda t: nm.sub(t[0], t[1]), (3, 4), (3, 4)),
        case("neg", lambda t: nm.neg(t[0]), (3, 4)),
        case("mul", lambda t: nm.mul(t[0], t[1]), (3, 4), (3, 4)),
        case("mul_broadcast", lambda t: nm.mul(t[0], t[1]), (3, 4), (4,)),
        case("mul_scalar", lambda t: nm.mul(t[0], 0.7), (3, 4)),
        case("matmul", lambda t: nm.matmul(t[0], t[1]), (3, 4), (4, 2)),
        case("matmul_batched", lambda t: nm.matmul(t[0], t[1]), (2, 3, 4), (4, 2)),
        case("swapaxes", lambda t: nm.swapaxes(t[0], 0, 1), (3, 4)),
        case("reshape", lambda t: nm.reshape(t[0], (4, 3)), (3, 4)),
        case("concat", lambda t: nm.concat([t[0], t[1]], axis=1), (3, 2), (3, 3)),
        case("stack", lambda t: nm.stack([t[0], t[1]], axis=0), (3, 2), (3, 2)),
        case("slice", lambda t: nm.slice_axis(t[0], 1, 1, 3), (3, 4)),
        case("gather_rows", lambda t: nm.gather_rows(t[0], gather_b, gather_p), (2, 4, 3)),
        case("embedding", lambda t: nm.embedding(t[0], emb_ids), (3, 5)),
        case("softmax", lambda t: nm.softmax(t[0], axis=-1), (3, 4)),
        case("layer_norm", lambda t: nm.layer_norm(t[0], t[1], t[2]), (3, 4), (4,), (4,)),
        case("gelu", lambda t: nm.gelu(t[0]), (3, 4)),
        case("sigmoid", lambda t: nm.sigmoid(t[0]), (3, 4)),
        case("sin", lambda t: nm.sin(t[0]), (3, 4)),
        case("cos", lambda t: nm.cos(t[0]), (3, 4)),
        case("sum", lambda t: nm.tsum(t[0], axis=1), (3, 4)),
        case("sum_all", lambda t: nm.tsum(t[0]), (3, 4)),
        case("mean", lambda t: nm.tmean(t[0], axis=0), (3, 4)),
        case("cross_entropy", lambda t: nm.cross_entropy_with_logits(t[0], emb_ids[:3]),
             (3, 5)),
        case("l1_distance", lambda t: nm.l1_distance(t[0], Tensor(kpt_b, dtype=np.float64)),
             (2, 3)),
        case("linear", lambda t: nm.linear(t[0], t[1], t[2]), (3, 4), (5, 4), (5,)),
        case("scaled_attention",
             lambda t: nm.scaled_attention(t[0], t[1], t[2], 0.5, mask=mask),
             (2, 2, 4, 3), (2, 2, 4, 3), (2, 2, 4, 3)),
        case("rope", lambda t: nm.rope(t[0], Tensor(cos, dtype=np.float64),
                                       Tensor(sin, dtype=np.float64)), (2, 2, 4, 6)),
    ]


@pytest.mark.parametrize("name,build,tensors", _op_cases(),
                         ids=[c[0] for c in _op_cases()])
def test_op_gradient_matches_finite_differences(name, build, tensors):
    gen = np.random.default_rng(hash(name) % (2 ** 32))
    with nm.precision(np.float64):
        out = build(tensors)
        w = gen.uniform(-1.0, 1.0, out.shape)
        nm.backward(nm.tsum(nm.mul(out, Tensor(w, dtype=np.float64))))
    for t in tensors:
        def run(t=t):
            with nm.no_grad():
                return float(np.sum(build(tensors).data * w))
        fd = finite_diff_grad(run, t.data)
        assert max_rel_err(t.grad, fd) < 1e-4, f"{name} gradient mismatch"


# -- determinism / rng ------------------------------------------------------------

def test_rng_streams_are_reproducible():
    a = Rng(123).normal((4, 4))
    b = Rng(123).normal((4, 4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, Rng(124).normal((4, 4)))


def test_rng_children_are_order_free():
    root = Rng(5)
    c1 = root.child(3, 7).normal((3,))
    root2 = Rng(5)
    _ = root2.normal((10,))  # consuming the parent does not move child streams
    c2 = root2.child(3, 7).normal((3,))
    np.testing.assert_array_equal(c1, c2)


def test_rng_golden_values_pin_the_algorithm():
    # PCG64 bitstream under a fixed seed; guards against silent generator swaps
    got = Rng(42).uniform(0.0, 1.0, (3,))
    np.testing.assert_allclose(
        got, [0.7739560485559633, 0.4388784397520523, 0.8585979199113825], rtol=1e-15)


def test_default_dtype_context():
    assert nm.get_default_dtype() == np.float32
    with nm.precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_no_grad_suppresses_tape():
    w = t64([1.0, 2.0])
    with nm.no_grad():
        out = nm.tsum(nm.mul(w, w))
    assert out._backward is None and not out.requires_grad
