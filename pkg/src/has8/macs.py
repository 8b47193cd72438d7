"""Analytic multiply-accumulate accounting for HAS-8 models.

Convolutions count batch * F * C * kh * kw * H' * W'; linear layers count
batch * in * out.  Spiking-branch layers are counted for a single timestep,
the reporting convention for event-driven hardware.  Pooling, normalization,
neurons, and codecs contribute no MACs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import (
    HybridBasicBlock,
    HybridConvBlock,
    HybridDownsampleBlock,
    HybridMLPBlock,
    ResNetHybrid,
    VGGNet,
)
from .layers import Conv2d, Linear, TimeDistributed


@dataclass
class MacReport:
    ann: int = 0
    snn: int = 0

    @property
    def total(self) -> int:
        return self.ann + self.snn

    def add(self, branch: str, count: int):
        if branch == "snn":
            self.snn += count
        else:
            self.ann += count


def conv_macs(conv: Conv2d, h: int, w: int, batch: int = 1) -> tuple[int, int, int]:
    """MAC count and output extents of one convolution application."""
    ho = (h + 2 * conv.pad - conv.kernel) // conv.stride + 1
    wo = (w + 2 * conv.pad - conv.kernel) // conv.stride + 1
    macs = batch * conv.out_channels * conv.in_channels * conv.kernel * conv.kernel * ho * wo
    return macs, ho, wo


def linear_macs(lin: Linear, batch: int = 1) -> int:
    return batch * lin.in_features * lin.out_features


def _inner(layer):
    return layer.layer if isinstance(layer, TimeDistributed) else layer


def _conv_block_macs(block: HybridConvBlock, h, w, batch, report: MacReport):
    macs, ho, wo = conv_macs(block.ann_conv, h, w, batch)
    report.add("ann", macs)
    macs, _, _ = conv_macs(_inner(block.snn_conv), h, w, batch)
    report.add("snn", macs)
    return ho, wo


def _basic_block_macs(block: HybridBasicBlock, h, w, batch, report: MacReport):
    for conv in (block.ann_conv1, block.ann_conv2):
        macs, h2, w2 = conv_macs(conv, h, w, batch)
        report.add("ann", macs)
    for conv in (block.snn_conv1, block.snn_conv2):
        macs, _, _ = conv_macs(_inner(conv), h, w, batch)
        report.add("snn", macs)
    return h, w


def _down_block_macs(block: HybridDownsampleBlock, h, w, batch, report: MacReport):
    macs, ho, wo = conv_macs(block.ann_conv1, h, w, batch)
    report.add("ann", macs)
    macs, _, _ = conv_macs(block.ann_conv2, ho, wo, batch)
    report.add("ann", macs)
    macs, _, _ = conv_macs(block.ann_skip, h, w, batch)
    report.add("ann", macs)
    macs, _, _ = conv_macs(_inner(block.snn_conv1), h, w, batch)
    report.add("snn", macs)
    macs, _, _ = conv_macs(_inner(block.snn_conv2), ho, wo, batch)
    report.add("snn", macs)
    macs, _, _ = conv_macs(_inner(block.snn_skip), h, w, batch)
    report.add("snn", macs)
    return ho, wo


def count_macs(model, input_hw: tuple[int, int], batch: int = 1) -> MacReport:
    """Propagate shapes through the model and tally per-branch MACs."""
    h, w = input_hw
    report = MacReport()
    if isinstance(model, VGGNet):
        for block in model.blocks:
            h, w = _conv_block_macs(block, h, w, batch, report)
            h, w = h // model.pool.k, w // model.pool.k
        report.add("ann", linear_macs(model.mlp.ann_lin, batch))
        report.add("snn", linear_macs(_inner(model.mlp.snn_lin), batch))
        report.add("ann", linear_macs(model.head, batch))
        return report
    if isinstance(model, ResNetHybrid):
        macs, h, w = conv_macs(model.stem_conv, h, w, batch)
        report.add("ann", macs)
        if model.stem_pool is not None:
            h, w = h // model.stem_pool.k, w // model.stem_pool.k
        for block in model.stages:
            if isinstance(block, HybridDownsampleBlock):
                h, w = _down_block_macs(block, h, w, batch, report)
            else:
                h, w = _basic_block_macs(block, h, w, batch, report)
        report.add("ann", linear_macs(model.head, batch))
        return report
    raise TypeError(f"cannot count MACs for {type(model).__name__}")
