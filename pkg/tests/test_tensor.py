"""Autograd engine: arithmetic, contractions, custom gradients, backward pass."""

import numpy as np
import pytest

import has8.tensor as tt
from has8.errors import GradError, ShapeError
from has8.tensor import Tensor, backward, custom_grad
from has8.verify import finite_diff


def test_add_values():
    out = tt.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    assert out.data.tolist() == [4.0, 6.0]


def test_relu_inactive_value_and_grad():
    x = Tensor(-0.5, requires_grad=True)
    y = tt.relu(x)
    assert y.data == 0.0
    backward(y)
    assert x.grad == 0.0


def test_sigmoid_at_zero():
    x = Tensor(0.0, requires_grad=True)
    y = tt.sigmoid(x)
    assert y.data == 0.5
    backward(y)
    assert x.grad == pytest.approx(0.25, abs=1e-15)


def test_broadcast_mismatch_reports_both_shapes():
    with pytest.raises(ShapeError) as e:
        tt.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    assert "(2, 3)" in str(e.value) and "(4, 5)" in str(e.value)


def test_broadcast_add_unbroadcasts_gradient():
    x = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones(4), requires_grad=True)
    backward(tt.tsum(tt.add(x, b)))
    assert x.grad.shape == (3, 4)
    assert b.grad.tolist() == [3.0] * 4


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = tt.matmul(Tensor(np.eye(2)), a)
    assert np.array_equal(out.data, a.data)


def test_matmul_small_values():
    out = tt.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_against_triple_loop_oracle():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    got = tt.matmul(Tensor(a), Tensor(b)).data
    want = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                want[i, j] += a[i, k] * b[k, j]
    assert np.array_equal(got, want) or np.abs(got - want).max() < 1e-14


def test_matmul_inner_mismatch():
    with pytest.raises(ShapeError):
        tt.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def _conv_oracle(x, w, b, stride, pad):
    bs, c, h, wid = x.shape
    f, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((bs, f, ho, wo))
    for n in range(bs):
        for fo in range(f):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += xp[n, ci, i * stride + ki, j * stride + kj] * w[fo, ci, ki, kj]
                    out[n, fo, i, j] = acc + (b[fo] if b is not None else 0.0)
    return out


def test_conv2d_all_ones_sums_kernel():
    x = Tensor(np.ones((1, 1, 3, 3)))
    w = Tensor(np.ones((1, 1, 3, 3)))
    out = tt.conv2d(x, w)
    assert out.data.reshape(-1).tolist() == [9.0]


def test_conv2d_impulse_reproduces_kernel():
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.0
    rng = np.random.default_rng(0)
    w = rng.normal(size=(1, 1, 3, 3))
    out = tt.conv2d(Tensor(x), Tensor(w), pad=1).data
    # cross-correlation at an impulse reflects the kernel around the impulse
    assert np.allclose(out[0, 0, 1:4, 1:4], w[0, 0, ::-1, ::-1], atol=1e-15)


def test_conv2d_against_six_loop_oracle():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    got = tt.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=1, pad=1).data
    want = _conv_oracle(x, w, b, 1, 1)
    assert np.abs(got - want).max() <= 1e-12


def test_conv2d_strided_against_oracle():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 2, 2))
    got = tt.conv2d(Tensor(x), Tensor(w), stride=2, pad=0).data
    want = _conv_oracle(x, w, None, 2, 0)
    assert np.abs(got - want).max() <= 1e-12


def test_conv2d_rejects_non_integer_output():
    with pytest.raises(ShapeError):
        tt.conv2d(Tensor(np.zeros((1, 1, 8, 8))), Tensor(np.zeros((1, 1, 3, 3))), stride=2, pad=1)


def test_custom_grad_straight_through_round():
    op = custom_grad(lambda x: (np.round(x), None), lambda saved, g: g, name="round_st")
    x = Tensor(0.4, requires_grad=True)
    y = op(x)
    assert y.data == 0.0
    backward(y)
    assert x.grad == 1.0


def test_custom_grad_heaviside_arctan_at_threshold():
    alpha = 2.0

    def fwd(x):
        return (x >= 0).astype(np.float64), x

    def bwd(saved, g):
        return g * alpha / (2.0 * (1.0 + (np.pi / 2 * alpha * saved) ** 2))

    op = custom_grad(fwd, bwd, name="heaviside")
    x = Tensor(0.0, requires_grad=True)  # exactly at threshold
    backward(op(x))
    assert x.grad == pytest.approx(1.0, abs=1e-15)


def test_custom_grad_chained_matches_hand_chain_rule():
    # y = 3 * f(x) + x with f forward x^2 but substitute backward rule 5
    op = custom_grad(lambda x: (x * x, None), lambda saved, g: 5.0 * g, name="sub5")
    x = Tensor(2.0, requires_grad=True)
    y = 3.0 * op(x) + x
    backward(y)
    # dy/dx = 3 * 5 + 1 by hand
    assert x.grad == pytest.approx(16.0, abs=1e-15)


def test_custom_grad_shape_mismatch_rejected_at_backward():
    op = custom_grad(lambda x: (x, None), lambda saved, g: np.zeros(3), name="badshape")
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    y = tt.tsum(op(x))
    with pytest.raises(GradError):
        backward(y)


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    backward(x * x)
    assert x.grad == 6.0


def test_backward_accumulates_reused_tensor():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    w = Tensor(np.array([3.0, 4.0]))
    loss = tt.tsum(w * x) + tt.tsum(w * x)
    backward(loss)
    assert x.grad.tolist() == [6.0, 8.0]


def test_backward_rejects_non_scalar():
    x = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(GradError):
        backward(x * x)


def test_backward_rejects_consumed_tape():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    backward(y)
    with pytest.raises(GradError):
        backward(y)


def test_backward_visits_each_node_once_diamond():
    x = Tensor(2.0, requires_grad=True)
    a = x * 3.0  # node 1
    b = a + 1.0  # node 2
    c = a * 2.0  # node 3
    loss = b * c  # node 4 (a reused by two children)
    visits = backward(loss)
    assert visits == 4
    # d/dx of (3x+1)(6x) = 36x + 6 at x=2
    assert x.grad == pytest.approx(78.0, abs=1e-12)


def test_gradient_accumulation_split_batch():
    rng = np.random.default_rng(3)
    w = Tensor(rng.normal(size=(6, 2)), requires_grad=True)
    x = rng.normal(size=(8, 6))

    def loss_of(batch):
        return tt.tsum(tt.matmul(Tensor(batch), w) * Tensor(batch[:, :2]))

    backward(loss_of(x))
    whole = w.grad.copy()
    w.grad = None
    backward(loss_of(x[:4]))
    backward(loss_of(x[4:]))
    assert np.abs(w.grad - whole).max() <= 1e-10


def test_smooth_ops_match_finite_differences():
    rng = np.random.default_rng(7)
    r = Tensor(rng.normal(size=(3, 4)))

    cases = {
        "mul": lambda x: tt.tsum(x * x * r),
        "tanh": lambda x: tt.tsum(tt.tanh(x) * r),
        "sigmoid": lambda x: tt.tsum(tt.sigmoid(x) * r),
        "exp": lambda x: tt.tsum(tt.exp(x) * r),
    }
    for name, make_loss in cases.items():
        x0 = rng.normal(size=(3, 4)) * 0.7
        x = Tensor(x0.copy(), requires_grad=True)
        backward(make_loss(x))
        want = finite_diff(lambda a: float(make_loss(Tensor(a)).data), x0)
        rel = np.abs(x.grad - want) / np.maximum(np.abs(want), 1e-8)
        assert rel.max() < 1e-6, name


def test_no_grad_suppresses_tape():
    x = Tensor(1.0, requires_grad=True)
    with tt.no_grad():
        y = x * x
    assert y.node is None and not y.requires_grad


def test_stack_and_index_round_trip_gradients():
    xs = [Tensor(float(i), requires_grad=True) for i in range(4)]
    stacked = tt.stack(xs, axis=0)
    picked = tt.index0(stacked, 2)
    backward(picked * 5.0)
    assert xs[2].grad == 5.0
    assert all(x.grad == 0.0 for i, x in enumerate(xs) if i != 2)


def test_dtype_selectable_f32_f64():
    a = Tensor([1.0], dtype=np.float32)
    b = Tensor([1.0], dtype=np.float64)
    assert a.dtype == np.float32 and b.dtype == np.float64
    assert (a * a).dtype == np.float32
