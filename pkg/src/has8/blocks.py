"""Hybrid ANN-SNN building blocks and the HAS-8 model family.

Every block runs two parallel paths over the same input: a conventional
ANN path and a spiking path bracketed by the bit-plane encoder and a
decoder, fused by element-wise addition.  Inputs to the spiking path are
clamped to [0,1] before encoding, so later blocks can re-encode fused
real-valued activations.

Downsampling convolutions use 2x2 kernels with stride 2 (and the skip
projections likewise): these halve even spatial extents exactly, which the
convolution contract requires.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .codec import SurrogateSpec, bitplane_encode, decode_bitplane, decode_rate
from .errors import ConfigError, ShapeError
from .layers import BatchNorm, Conv2d, GlobalAvgPool, Layer, Linear, MaxPool2d, TimeDistributed
from .neuron import IFConfig, IFNeuron
from .tensor import Tensor

DECODERS = ("rate", "bitplane")


@dataclass
class ModelSpec:
    """Everything needed to rebuild a network: variant, widths, codec choices."""

    variant: str = "vgg"
    b: int = 16
    m: int = 2
    d_max: int = 4
    num_classes: int = 10
    in_channels: int = 3
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    decoder: str = "bitplane"
    mlp_width: int = 2048
    input_size: int | None = None

    def __post_init__(self):
        if self.variant not in ("vgg", "resnet"):
            raise ConfigError(f"unknown model variant {self.variant!r}; expected 'vgg' or 'resnet'")
        if self.decoder not in DECODERS:
            raise ConfigError(f"unknown decoder {self.decoder!r}; expected one of {DECODERS}")
        if self.d_max < 1:
            raise ConfigError(f"d_max must be >= 1, got {self.d_max}")
        if self.b < 1 or self.m < 1:
            raise ConfigError(f"b and m must be positive, got b={self.b}, m={self.m}")

    def name(self) -> str:
        arch = "VGG" if self.variant == "vgg" else "ResNet"
        return f"HAS-8-{arch}[b{self.b}-m{self.m}-d{self.d_max}]"

    def to_dict(self) -> dict:
        s = self.surrogate
        return {
            "variant": self.variant,
            "b": self.b,
            "m": self.m,
            "d_max": self.d_max,
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
            "decoder": self.decoder,
            "mlp_width": self.mlp_width,
            "input_size": self.input_size,
            "surrogate": {
                "kind": s.kind,
                "alpha": s.alpha,
                "n_terms": s.n_terms,
                "rescale": s.rescale,
                "fourier_literal": s.fourier_literal,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["surrogate"] = SurrogateSpec(**d.get("surrogate", {}))
        return cls(**d)


def channels_for(b: int, m: int, d: int) -> int:
    """Output channels of the depth-d convolutional block: 3 * b * m^d."""
    if d < 1:
        raise ValueError(f"depth index must be >= 1, got {d}")
    return 3 * b * m**d


def resnet_stage_channels(b: int, m: int, d: int) -> int:
    """Residual stage widths b * m^(d-1): {b, 2b, 4b, 8b} for the default depth."""
    if d < 1:
        raise ValueError(f"depth index must be >= 1, got {d}")
    return b * m ** (d - 1)


def _decode(spec: ModelSpec, train):
    return decode_bitplane(train) if spec.decoder == "bitplane" else decode_rate(train)


def _fuse(ann_out: Tensor, snn_out: Tensor) -> Tensor:
    if ann_out.shape != snn_out.shape:
        raise ShapeError(f"fusion shapes differ: ANN {ann_out.shape} vs SNN {snn_out.shape}")
    return tt.add(ann_out, snn_out)


class HybridBlock(Layer):
    """Common plumbing: branch toggles and the clamp-encode entry of the SNN path."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.ann_enabled = True
        self.snn_enabled = True

    def encode_input(self, x: Tensor) -> Tensor:
        clamped = tt.clamp(x, 0.0, 1.0)
        return bitplane_encode(clamped, self.spec.surrogate).tensor

    def combine(self, ann_out, snn_out) -> Tensor:
        if ann_out is not None and snn_out is not None:
            return _fuse(ann_out, snn_out)
        if ann_out is not None:
            return ann_out
        if snn_out is not None:
            return snn_out
        raise ConfigError("both branches of a hybrid block are disabled")


class HybridConvBlock(HybridBlock):
    """Conv-BN-ReLU in parallel with an encoded per-step Conv-BN-IF branch."""

    def __init__(self, spec: ModelSpec, c_in: int, c_out: int, rng, dtype):
        super().__init__(spec)
        self.ann_conv = Conv2d(c_in, c_out, 3, rng, pad=1, bias=False, dtype=dtype)
        self.ann_bn = BatchNorm(c_out, dtype=dtype)
        self.snn_conv = TimeDistributed(Conv2d(c_in, c_out, 3, rng, pad=1, bias=False, dtype=dtype))
        self.snn_bn = TimeDistributed(BatchNorm(c_out, dtype=dtype))
        self.neuron = IFNeuron(IFConfig())

    def forward(self, x: Tensor) -> Tensor:
        ann_out = snn_out = None
        if self.ann_enabled:
            ann_out = tt.relu(self.ann_bn(self.ann_conv(x)))
        if self.snn_enabled:
            spikes = self.encode_input(x)
            current = self.snn_bn(self.snn_conv(spikes))
            snn_out = _decode(self.spec, self.neuron.run(current))
        return self.combine(ann_out, snn_out)


class HybridMLPBlock(HybridBlock):
    """Linear-ReLU in parallel with an encoded per-step Linear-IF branch."""

    def __init__(self, spec: ModelSpec, n_in: int, n_out: int, rng, dtype):
        super().__init__(spec)
        self.ann_lin = Linear(n_in, n_out, rng, dtype=dtype)
        self.snn_lin = TimeDistributed(Linear(n_in, n_out, rng, dtype=dtype))
        self.neuron = IFNeuron(IFConfig())

    def forward(self, x: Tensor) -> Tensor:
        ann_out = snn_out = None
        if self.ann_enabled:
            ann_out = tt.relu(self.ann_lin(x))
        if self.snn_enabled:
            spikes = self.encode_input(x)
            snn_out = _decode(self.spec, self.neuron.run(self.snn_lin(spikes)))
        return self.combine(ann_out, snn_out)


class HybridBasicBlock(HybridBlock):
    """Residual block: standard ANN body plus a spiking body with a spike-domain
    identity skip added before the final neuron."""

    def __init__(self, spec: ModelSpec, channels: int, rng, dtype):
        super().__init__(spec)
        self.ann_conv1 = Conv2d(channels, channels, 3, rng, pad=1, bias=False, dtype=dtype)
        self.ann_bn1 = BatchNorm(channels, dtype=dtype)
        self.ann_conv2 = Conv2d(channels, channels, 3, rng, pad=1, bias=False, dtype=dtype)
        self.ann_bn2 = BatchNorm(channels, dtype=dtype)
        self.snn_conv1 = TimeDistributed(Conv2d(channels, channels, 3, rng, pad=1, bias=False, dtype=dtype))
        self.snn_bn1 = TimeDistributed(BatchNorm(channels, dtype=dtype))
        self.neuron1 = IFNeuron(IFConfig())
        self.snn_conv2 = TimeDistributed(Conv2d(channels, channels, 3, rng, pad=1, bias=False, dtype=dtype))
        self.snn_bn2 = TimeDistributed(BatchNorm(channels, dtype=dtype))
        self.neuron2 = IFNeuron(IFConfig())

    def forward(self, x: Tensor) -> Tensor:
        ann_out = snn_out = None
        if self.ann_enabled:
            h = tt.relu(self.ann_bn1(self.ann_conv1(x)))
            h = self.ann_bn2(self.ann_conv2(h))
            ann_out = tt.relu(tt.add(h, x))
        if self.snn_enabled:
            s0 = self.encode_input(x)
            h = self.neuron1.run(self.snn_bn1(self.snn_conv1(s0)))
            h = self.snn_bn2(self.snn_conv2(h))
            snn_out = _decode(self.spec, self.neuron2.run(tt.add(h, s0)))
        return self.combine(ann_out, snn_out)


class HybridDownsampleBlock(HybridBlock):
    """Stride-2 residual block with projected skips on both paths."""

    def __init__(self, spec: ModelSpec, c_in: int, c_out: int, rng, dtype):
        super().__init__(spec)
        self.ann_conv1 = Conv2d(c_in, c_out, 2, rng, stride=2, bias=False, dtype=dtype)
        self.ann_bn1 = BatchNorm(c_out, dtype=dtype)
        self.ann_conv2 = Conv2d(c_out, c_out, 3, rng, pad=1, bias=False, dtype=dtype)
        self.ann_bn2 = BatchNorm(c_out, dtype=dtype)
        self.ann_skip = Conv2d(c_in, c_out, 2, rng, stride=2, bias=False, dtype=dtype)
        self.ann_skip_bn = BatchNorm(c_out, dtype=dtype)
        self.snn_conv1 = TimeDistributed(Conv2d(c_in, c_out, 2, rng, stride=2, bias=False, dtype=dtype))
        self.snn_bn1 = TimeDistributed(BatchNorm(c_out, dtype=dtype))
        self.neuron1 = IFNeuron(IFConfig())
        self.snn_conv2 = TimeDistributed(Conv2d(c_out, c_out, 3, rng, pad=1, bias=False, dtype=dtype))
        self.snn_bn2 = TimeDistributed(BatchNorm(c_out, dtype=dtype))
        self.neuron2 = IFNeuron(IFConfig())
        self.snn_skip = TimeDistributed(Conv2d(c_in, c_out, 2, rng, stride=2, bias=False, dtype=dtype))
        self.snn_skip_bn = TimeDistributed(BatchNorm(c_out, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        ann_out = snn_out = None
        if self.ann_enabled:
            h = tt.relu(self.ann_bn1(self.ann_conv1(x)))
            h = self.ann_bn2(self.ann_conv2(h))
            skip = self.ann_skip_bn(self.ann_skip(x))
            ann_out = tt.relu(tt.add(h, skip))
        if self.snn_enabled:
            s0 = self.encode_input(x)
            h = self.neuron1.run(self.snn_bn1(self.snn_conv1(s0)))
            h = self.snn_bn2(self.snn_conv2(h))
            skip = self.snn_skip_bn(self.snn_skip(s0))
            snn_out = _decode(self.spec, self.neuron2.run(tt.add(h, skip)))
        return self.combine(ann_out, snn_out)


class VGGNet(Layer):
    """d_max hybrid conv blocks (each followed by 2x2 max pooling), global
    average pooling, one hybrid MLP block, and a plain linear head."""

    def __init__(self, spec: ModelSpec, rng, dtype=np.float32):
        super().__init__()
        self.spec = spec
        blocks = []
        c_in = spec.in_channels
        for d in range(1, spec.d_max + 1):
            c_out = channels_for(spec.b, spec.m, d)
            blocks.append(HybridConvBlock(spec, c_in, c_out, rng, dtype))
            c_in = c_out
        self.blocks = blocks
        self.pool = MaxPool2d(2)
        self.gap = GlobalAvgPool()
        self.mlp = HybridMLPBlock(spec, c_in, spec.mlp_width, rng, dtype)
        self.head = Linear(spec.mlp_width, spec.num_classes, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = self.pool(block(x))
        x = self.gap(x)
        x = self.mlp(x)
        return self.head(x)

    def hybrid_blocks(self):
        return list(self.blocks) + [self.mlp]


class ResNetHybrid(Layer):
    """Stem conv, then per depth a pair of residual blocks (two basic blocks at
    depth 1, a downsample plus a basic block afterwards), global average
    pooling and a linear head.  Stage widths follow b * m^(d-1).

    Inputs of 112 pixels or more get a 7x7 stem followed by 4x max pooling;
    small inputs keep full resolution with a 3x3 stem.
    """

    def __init__(self, spec: ModelSpec, rng, dtype=np.float32):
        super().__init__()
        self.spec = spec
        self.large_input = bool(spec.input_size and spec.input_size >= 112)
        c1 = resnet_stage_channels(spec.b, spec.m, 1)
        if self.large_input:
            self.stem_conv = Conv2d(spec.in_channels, c1, 7, rng, pad=3, bias=False, dtype=dtype)
            self.stem_pool = MaxPool2d(4)
        else:
            self.stem_conv = Conv2d(spec.in_channels, c1, 3, rng, pad=1, bias=False, dtype=dtype)
            self.stem_pool = None
        self.stem_bn = BatchNorm(c1, dtype=dtype)

        stages = []
        c_prev = c1
        for d in range(1, spec.d_max + 1):
            c_d = resnet_stage_channels(spec.b, spec.m, d)
            if d == 1:
                stages.append(HybridBasicBlock(spec, c_d, rng, dtype))
            else:
                stages.append(HybridDownsampleBlock(spec, c_prev, c_d, rng, dtype))
            stages.append(HybridBasicBlock(spec, c_d, rng, dtype))
            c_prev = c_d
        self.stages = stages
        self.gap = GlobalAvgPool()
        self.head = Linear(c_prev, spec.num_classes, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = tt.relu(self.stem_bn(self.stem_conv(x)))
        if self.stem_pool is not None:
            x = self.stem_pool(x)
        for block in self.stages:
            x = block(x)
        x = self.gap(x)
        return self.head(x)

    def hybrid_blocks(self):
        return list(self.stages)


def build_model(spec: ModelSpec, rng=None, dtype=np.float32):
    """Construct the network described by ``spec`` with seeded initialization."""
    if rng is None:
        rng = np.random.default_rng(0)
    if spec.variant == "vgg":
        return VGGNet(spec, rng, dtype)
    if spec.variant == "resnet":
        return ResNetHybrid(spec, rng, dtype)
    raise ConfigError(f"unknown model variant {spec.variant!r}")


def set_branches(model, ann: bool = True, snn: bool = True):
    """Enable or disable the ANN/SNN paths of every hybrid block in the model."""
    for block in model.hybrid_blocks():
        block.ann_enabled = ann
        block.snn_enabled = snn
    return model


def zero_snn_parameters(model):
    """Zero every parameter that lives on a spiking branch."""
    for name, p in model.named_parameters().items():
        if any(part.startswith("snn_") for part in name.split(".")):
            p.data = np.zeros_like(p.data)
    return model
