"""Conventional differentiable layers and the per-timestep application wrapper."""

from __future__ import annotations

import numpy as np

from . import _kernels
from . import tensor as tt
from .errors import ShapeError
from .tensor import Tensor


class Layer:
    """Base class: parameter/buffer registry plus train/eval mode plumbing.

    Sublayers are discovered from instance attributes (including lists), so
    composite layers only need to assign them.  Parameter names follow the
    attribute path, which keeps checkpoint keys stable.
    """

    def __init__(self):
        self.training = True

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def _local_tensors(self, kind):
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                is_param = value.requires_grad
                if (kind == "param") == is_param:
                    yield name, value

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Layer):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Layer):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        """Trainable tensors, keyed by attribute path."""
        out = {}
        for name, value in self._local_tensors("param"):
            out[prefix + name] = value
        for cname, child in self.children():
            out.update(child.named_parameters(prefix + cname + "."))
        return out

    def named_tensors(self, prefix=""):
        """All persistent tensors (parameters and buffers), for checkpointing."""
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                out[prefix + name] = value
        for cname, child in self.children():
            out.update(child.named_tensors(prefix + cname + "."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def set_training(self, mode: bool):
        self.training = mode
        for _, child in self.children():
            child.set_training(mode)
        return self

    def train(self):
        return self.set_training(True)

    def eval(self):
        return self.set_training(False)

    def load_tensors(self, table: dict):
        """Copy a checkpoint tensor table into this layer tree (shapes must match)."""
        own = self.named_tensors()
        missing = sorted(set(own) - set(table))
        extra = sorted(set(table) - set(own))
        if missing or extra:
            raise ShapeError(f"tensor table mismatch: missing={missing[:3]} extra={extra[:3]}")
        for name, tensor in own.items():
            src = np.asarray(table[name])
            if src.shape != tensor.data.shape:
                raise ShapeError(f"{name}: checkpoint shape {src.shape} != model shape {tensor.data.shape}")
            tensor.data = src.astype(tensor.data.dtype, copy=True)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Layer):
    def __init__(self, in_features, out_features, rng, bias=True, dtype=np.float64):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(kaiming_uniform(rng, (in_features, out_features), in_features, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = tt.matmul(x, self.weight)
        if self.bias is not None:
            out = tt.add(out, self.bias)
        return out


class Conv2d(Layer):
    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, pad=0, bias=True, dtype=np.float64):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.pad = pad
        fan_in = in_channels * kernel * kernel
        self.weight = Tensor(
            kaiming_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in, dtype), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return tt.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class BatchNorm(Layer):
    """Batch normalization over the channel axis of [N,C] or [N,C,H,W] input.

    Train mode normalizes with batch statistics and updates running stats
    with the given momentum; eval mode uses the running stats.  Rejects
    train-mode batches with fewer than two samples per channel.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = Tensor(np.zeros(channels, dtype=dtype))
        self.running_var = Tensor(np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim not in (2, 4):
            raise ShapeError(f"batchnorm expects [N,C] or [N,C,H,W], got {x.shape}")
        if x.shape[1] != self.channels:
            raise ShapeError(f"batchnorm built for {self.channels} channels, got input {x.shape}")
        axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
        cshape = (1, self.channels) + (1,) * (x.data.ndim - 2)
        gamma, beta = self.gamma, self.beta

        if self.training:
            count = x.data.size // self.channels
            if count < 2:
                raise ShapeError(f"batchnorm train mode needs >= 2 samples per channel, got {count}")
            n = float(count)
            x3 = x.data.reshape(x.shape[0], self.channels, -1)
            mean = np.einsum("bcl->c", x3) / n
            sq = np.einsum("bcl,bcl->c", x3, x3) / n
            var = np.maximum(sq - mean * mean, 0.0)
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat, out = _kernels.bn_scale_shift(x.data, mean, inv, gamma.data, beta.data, cshape)

            m = self.momentum
            unbiased = var * count / (count - 1)
            self.running_mean.data = ((1 - m) * self.running_mean.data + m * mean).astype(x.dtype)
            self.running_var.data = ((1 - m) * self.running_var.data + m * unbiased).astype(x.dtype)

            def bwd(g):
                g3 = g.reshape(g.shape[0], self.channels, -1)
                xh3 = xhat.reshape(g.shape[0], self.channels, -1)
                dbeta = np.einsum("bcl->c", g3)
                dgamma = np.einsum("bcl,bcl->c", g3, xh3)
                coeff = gamma.data * inv
                dx = _kernels.bn_backward_dx(g, xhat, coeff, dbeta / n, dgamma / n, cshape)
                return dx, dgamma, dbeta

            return tt.apply_op(out, (x, gamma, beta), bwd, "batchnorm")

        inv = 1.0 / np.sqrt(self.running_var.data + self.eps)
        xhat = (x.data - self.running_mean.data.reshape(cshape)) * inv.reshape(cshape)
        out = gamma.data.reshape(cshape) * xhat + beta.data.reshape(cshape)

        def bwd_eval(g):
            dx = g * (gamma.data * inv).reshape(cshape)
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            return dx, dgamma, dbeta

        return tt.apply_op(out, (x, gamma, beta), bwd_eval, "batchnorm")


class MaxPool2d(Layer):
    def __init__(self, k=2):
        super().__init__()
        self.k = k

    def forward(self, x: Tensor) -> Tensor:
        return tt.maxpool2d(x, self.k)


class Flatten(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return tt.reshape(x, (x.shape[0], -1))


class GlobalAvgPool(Layer):
    """Mean over the spatial axes: [B,C,H,W] -> [B,C]."""

    def forward(self, x: Tensor) -> Tensor:
        return tt.tmean(x, axis=(2, 3))


class TimeDistributed(Layer):
    """Apply a stateless layer to every step of a [T,B,...] sequence.

    Time is merged into the batch axis, so a single call covers all steps
    with shared weights; batch-norm statistics are therefore computed
    jointly over (time x batch), matching step-stacked semantics.
    """

    def __init__(self, layer: Layer):
        super().__init__()
        if hasattr(layer, "step"):
            raise TypeError(f"TimeDistributed requires a stateless layer, got {type(layer).__name__}")
        self.layer = layer

    def forward(self, x: Tensor) -> Tensor:
        t, b = x.shape[0], x.shape[1]
        merged = tt.reshape(x, (t * b,) + tuple(x.shape[2:]))
        out = self.layer(merged)
        return tt.reshape(out, (t, b) + tuple(out.shape[1:]))
