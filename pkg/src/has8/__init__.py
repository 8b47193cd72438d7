"""Hybrid ANN-SNN training framework with differentiable bit-plane spike coding."""

from .blocks import ModelSpec, build_model, channels_for, set_branches, zero_snn_parameters
from .codec import (
    CodecConfig,
    SpikeTrain,
    SurrogateSpec,
    bitplane_encode,
    decode_bitplane,
    decode_rate,
    rescale_factor,
)
from .config import RunConfig, load_config
from .neuron import IFConfig, IFNeuron, run_over_time
from .optim import OptimConfig, cross_entropy
from .tensor import Tensor, backward, custom_grad, no_grad

__all__ = [
    "CodecConfig",
    "IFConfig",
    "IFNeuron",
    "ModelSpec",
    "OptimConfig",
    "RunConfig",
    "SpikeTrain",
    "SurrogateSpec",
    "Tensor",
    "backward",
    "bitplane_encode",
    "build_model",
    "channels_for",
    "cross_entropy",
    "custom_grad",
    "decode_bitplane",
    "decode_rate",
    "load_config",
    "no_grad",
    "rescale_factor",
    "run_over_time",
    "set_branches",
    "zero_snn_parameters",
]
__version__ = "0.1.0"
