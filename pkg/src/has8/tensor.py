"""Dense tensors with reverse-mode automatic differentiation.

The engine records a tape of nodes during the forward pass and replays it
in reverse topological order on ``backward``.  Any operation may register a
backward rule that differs from the analytic derivative of its forward rule
(see ``custom_grad``), which is how spike encoders and threshold neurons get
their substitute gradients while keeping an exact, non-differentiable
forward.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GradError, ShapeError

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation / inference)."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class TapeNode:
    """One recorded operation: parents, backward rule, creation order."""

    __slots__ = ("op", "parents", "backward_fn", "seq", "consumed")

    _counter = 0

    def __init__(self, op, parents, backward_fn):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.consumed = False
        TapeNode._counter += 1
        self.seq = TapeNode._counter


class Tensor:
    """N-dimensional array of f32/f64 values, optionally on the tape.

    ``data`` is always a numpy array; ``grad`` is populated on requires-grad
    leaves after ``backward``.  Tensors are treated as immutable once
    written, except for parameter updates applied between passes.
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[TapeNode] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, _coerce(other, self.dtype))

    def __radd__(self, other):
        return add(_coerce(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _coerce(other, self.dtype))

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self.dtype))

    def __rmul__(self, other):
        return mul(_coerce(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _coerce(other, self.dtype))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> int:
        return backward(self)


def _coerce(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _result(out_data, op, parents, backward_fn) -> Tensor:
    """Wrap ``out_data``; record a tape node when grads are being tracked."""
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = TapeNode(op, tuple(parents), backward_fn)
    else:
        out.requires_grad = False
        out.node = None
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(out, "add", (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(out, "sub", (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _result(out, "mul", (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        ga = _unbroadcast(g / b_data, a.shape)
        gb = _unbroadcast(-g * a_data / (b_data * b_data), b.shape)
        return ga, gb

    return _result(out, "div", (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, "neg", (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return _result(out, "relu", (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    # split by sign for overflow-free evaluation
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _result(out, "sigmoid", (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _result(out, "tanh", (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _result(out, "exp", (a,), bwd)


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    a_data = a.data

    def bwd(g):
        return (g / a_data,)

    return _result(out, "log", (a,), bwd)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only through the interior."""
    out = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        return (g * mask,)

    return _result(out, "clamp", (a,), bwd)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape).copy(),)

    return _result(np.asarray(out), "sum", (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    in_shape = a.shape
    n = a.data.size if axis is None else a.data.size / np.asarray(out).size

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape).copy() / n,)

    return _result(np.asarray(out), "mean", (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    in_shape = a.shape

    def bwd(g):
        return (g.reshape(in_shape),)

    return _result(out, "reshape", (a,), bwd)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(out, "stack", tuple(tensors), bwd)


def index0(a: Tensor, i: int) -> Tensor:
    """Select step ``i`` along the leading axis."""
    out = a.data[i]
    in_shape = a.shape

    def bwd(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[i] = g
        return (full,)

    return _result(out, "index0", (a,), bwd)


# ---------------------------------------------------------------------------
# contractions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ: {a.shape} x {b.shape}")
    out = a.data @ b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        return g @ b_data.T, a_data.T @ g

    return _result(out, "matmul", (a, b), bwd)


def _im2col(xpc, kh, kw, stride, ho, wo):
    # xpc is channel-major [C, B, Hp, Wp]; columns come out as [C*kh*kw, B*ho*wo]
    # so the filter contraction is a single large GEMM.
    c, b = xpc.shape[0], xpc.shape[1]
    cols = np.empty((c, kh, kw, b, ho, wo), dtype=xpc.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xpc[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * kh * kw, b * ho * wo)


def _col2im(dcols, c, b, hp, wp, kh, kw, stride, ho, wo):
    dxpc = np.zeros((c, b, hp, wp), dtype=dcols.dtype)
    d6 = dcols.reshape(c, kh, kw, b, ho, wo)
    for i in range(kh):
        for j in range(kw):
            dxpc[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d6[:, i, j]
    return dxpc


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation of [B,C,H,W] with [F,C,kh,kw] filters."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input/weight, got {x.shape} and {w.shape}")
    bsz, c, h, wid = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d: input channels {c} != weight channels {cw}")
    if kh > h + 2 * pad or kw > wid + 2 * pad:
        raise ShapeError(f"conv2d: kernel ({kh},{kw}) exceeds padded input ({h + 2 * pad},{wid + 2 * pad})")
    if (h + 2 * pad - kh) % stride or (wid + 2 * pad - kw) % stride:
        raise ShapeError(
            f"conv2d: non-integer output extent for input {x.shape}, kernel ({kh},{kw}), stride {stride}, pad {pad}"
        )
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wid + 2 * pad - kw) // stride + 1
    hp, wp = h + 2 * pad, wid + 2 * pad

    xc = np.ascontiguousarray(x.data.transpose(1, 0, 2, 3))
    xpc = np.pad(xc, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xc
    cols = _im2col(xpc, kh, kw, stride, ho, wo)
    w2 = w.data.reshape(f, c * kh * kw)
    out_fm = w2 @ cols
    out = np.ascontiguousarray(out_fm.reshape(f, bsz, ho, wo).transpose(1, 0, 2, 3))
    if b is not None:
        out += b.data.reshape(1, f, 1, 1)

    parents = (x, w) if b is None else (x, w, b)
    need_dx = x.requires_grad

    def bwd(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(f, bsz * ho * wo)
        dw = (gt @ cols.T).reshape(w.shape)
        dx = None
        if need_dx:
            dcols = w2.T @ gt
            dxpc = _col2im(dcols, c, bsz, hp, wp, kh, kw, stride, ho, wo)
            if pad:
                dxpc = dxpc[:, :, pad : pad + h, pad : pad + wid]
            dx = np.ascontiguousarray(dxpc.transpose(1, 0, 2, 3))
        if b is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    return _result(out, "conv2d", parents, bwd)


def maxpool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k x k max pooling; spatial extents must divide by k."""
    from . import _kernels

    bsz, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"maxpool2d: spatial extents {h}x{w} not divisible by {k}")
    x_shape = x.shape
    out, idx = _kernels.maxpool_forward(np.ascontiguousarray(x.data), k)

    def bwd(g):
        return (_kernels.maxpool_backward(np.ascontiguousarray(g), idx, k, x_shape),)

    return _result(out, "maxpool2d", (x,), bwd)


# ---------------------------------------------------------------------------
# custom gradient registration


def custom_grad(forward: Callable, backward: Callable, name: str = "custom"):
    """Build a unary op whose backward rule replaces the forward derivative.

    ``forward(x: ndarray) -> (out: ndarray, saved)`` runs the exact forward;
    ``backward(saved, grad_out: ndarray) -> ndarray`` produces the input
    gradient from whatever forward saved.  The forward result is returned
    bit-exact; the substitute rule is the only thing backward ever calls.
    Its output must match the forward input's shape.
    """

    def op(x: Tensor) -> Tensor:
        out_data, saved = forward(x.data)
        in_shape = x.shape

        def bwd(g):
            gx = backward(saved, g)
            gx = np.asarray(gx)
            if gx.shape != in_shape:
                raise GradError(
                    f"{name}: backward produced shape {gx.shape}, expected input shape {in_shape}"
                )
            return (gx,)

        return _result(np.asarray(out_data), name, (x,), bwd)

    return op


def apply_op(out_data, parents, backward_fn, name):
    """Record an arbitrary multi-input op on the tape (library extension point)."""
    return _result(np.asarray(out_data), name, tuple(parents), backward_fn)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> int:
    """Reverse-sweep from a scalar loss; returns the number of nodes visited.

    Gradients from multiple uses of a tensor are summed.  The tape is freed
    afterwards: a second backward through any part of it is rejected.
    """
    if loss.data.size != 1:
        raise GradError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data)
        return 0
    if loss.node.consumed:
        raise GradError("backward called twice on a consumed tape")

    # iterative DFS for topological order over tensors that carry nodes
    topo = []
    seen = set()
    stack_ = [(loss, False)]
    while stack_:
        t, expanded = stack_.pop()
        if expanded:
            topo.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack_.append((t, True))
        for p in t.node.parents:
            if p.node is not None and id(p) not in seen:
                if p.node.consumed:
                    raise GradError("backward reached a consumed tape node")
                stack_.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    visits = 0
    for t in reversed(topo):
        node = t.node
        g = grads.pop(id(t), None)
        if g is None:
            continue
        visits += 1
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.node is None:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            else:
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
        node.consumed = True
        node.backward_fn = None
        node.parents = ()
    return visits
