"""Bit-plane spike encoding and decoding with selectable surrogate gradients.

The encoder maps normalized inputs x in [0,1] to an 8-step binary train:
intensity I = round(255*x), step t carries plane k = 7-t of I, so the
most significant bit leads.  The forward pass is exact and therefore not
differentiable; the backward pass substitutes one of three closed-form
surrogate gradients (sigmoid-wrapped sine, tanh-wrapped sine, or a
truncated Fourier cosine series), each optionally multiplied by the
order-aware rescale factor k / 2^(7-k).

Two decoders are provided: rate decoding (mean spike count, gradient 1/T)
and bit-plane decoding (binary-weighted sum / 255), the latter inverting
the encoder exactly on the 256-point intensity grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import Has8Error, ShapeError
from .tensor import Tensor

T_STEPS = 8
Y_MAX = 255

SURROGATE_KINDS = ("sigsine", "tanhsine", "fouriersine")


class InputRangeError(Has8Error, ValueError):
    """Encoder input left [0,1] by more than the tolerance."""


@dataclass
class SurrogateSpec:
    """Which backward rule the encoder uses, and how it is shaped.

    ``alpha`` sharpens the sigmoid/tanh wraps (more negative = closer to a
    true square wave).  ``n_terms`` is the highest odd harmonic of the
    Fourier variant.  ``fourier_literal`` selects the printed gradient form
    (constant 1/2 retained, per-plane coefficient 1/2^(k-1)); the corrected
    form is the term-wise derivative of the series (sum negated, no
    constant).
    """

    kind: str = "fouriersine"
    alpha: float = -10.0
    n_terms: int = 5
    rescale: bool = True
    fourier_literal: bool = True

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ValueError(f"unknown surrogate kind {self.kind!r}; expected one of {SURROGATE_KINDS}")
        if self.alpha == 0:
            raise ValueError("surrogate alpha must be nonzero")
        if self.n_terms < 1 or self.n_terms % 2 == 0:
            raise ValueError(f"n_terms must be odd and >= 1, got {self.n_terms}")


@dataclass
class CodecConfig:
    """Fixed coding geometry: 8 timesteps, 255 intensity levels, MSB first."""

    t_steps: int = T_STEPS
    y_max: int = Y_MAX

    def __post_init__(self):
        if self.t_steps != T_STEPS or self.y_max != Y_MAX:
            raise ValueError(f"codec is fixed at T={T_STEPS}, y_max={Y_MAX}")


class SpikeTrain:
    """Binary tensor of shape [T=8, ...]; every element is exactly 0.0 or 1.0."""

    __slots__ = ("tensor",)

    def __init__(self, tensor: Tensor, validate: bool = True):
        if validate:
            if tensor.data.ndim < 1 or tensor.data.shape[0] != T_STEPS:
                raise ShapeError(f"spike train must have {T_STEPS} leading steps, got shape {tensor.shape}")
            vals = tensor.data
            if not np.all((vals == 0.0) | (vals == 1.0)):
                raise ValueError("spike train values must be exactly 0.0 or 1.0")
        self.tensor = tensor

    @property
    def shape(self):
        return self.tensor.shape

    @property
    def steps(self) -> int:
        return self.tensor.shape[0]


# ---------------------------------------------------------------------------
# closed-form surrogate gradients (per plane, before rescale)


def _stable_sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _stable_sech2(u):
    # sech^2(u) = 4 e^(-2|u|) / (1 + e^(-2|u|))^2, overflow-free
    e = np.exp(-2.0 * np.abs(u))
    return 4.0 * e / (1.0 + e) ** 2


def _as_float(i) -> np.ndarray:
    arr = np.asarray(i)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


def _maybe_scalar(out: np.ndarray, i):
    return out[()] if np.ndim(i) == 0 else out


def surrogate_grad_sigsine(i, k: int, alpha: float = -10.0):
    """Gradient of the sigmoid-wrapped sine approximation of plane k at intensity i."""
    arr = _as_float(i)
    period = 2.0**k
    u = alpha * np.sin(np.pi * arr / period)
    s = _stable_sigmoid(np.atleast_1d(u)).reshape(u.shape)
    du = (alpha * np.pi / period) * np.cos(np.pi * arr / period)
    return _maybe_scalar(s * (1.0 - s) * du, i)


def surrogate_grad_tanhsine(i, k: int, alpha: float = -10.0):
    """Gradient of the tanh-wrapped sine approximation of plane k at intensity i."""
    arr = _as_float(i)
    period = 2.0**k
    u = alpha * np.sin(np.pi * arr / period)
    du = (alpha * np.pi / period) * np.cos(np.pi * arr / period)
    return _maybe_scalar(_stable_sech2(u) * du, i)


def surrogate_grad_fouriersine(i, k: int, n_terms: int = 5, literal: bool = True):
    """Gradient of the truncated Fourier-series approximation of plane k.

    Literal form: 1/2 - sum_{n odd} (1/2^(k-1)) cos(n pi i / 2^k).
    Corrected form: the term-wise derivative, -sum of the same cosines.
    """
    if n_terms < 1 or n_terms % 2 == 0:
        raise ValueError(f"n_terms must be odd and >= 1, got {n_terms}")
    arr = _as_float(i)
    period = 2.0**k
    coef = 1.0 / 2.0 ** (k - 1)
    acc = np.zeros(arr.shape, dtype=arr.dtype)
    for n in range(1, n_terms + 1, 2):
        acc = acc + np.cos(n * np.pi * arr / period)
    out = 0.5 - coef * acc if literal else -coef * acc
    return _maybe_scalar(np.asarray(out), i)


def rescale_factor(k: int) -> float:
    """Order-aware rescale weight k / 2^(7-k) applied to plane-k gradients."""
    return k / 2.0 ** (7 - k)


def surrogate_gradient(i, k: int, spec: SurrogateSpec):
    """Per-plane surrogate gradient for ``spec``, before any rescaling."""
    if spec.kind == "sigsine":
        return surrogate_grad_sigsine(i, k, spec.alpha)
    if spec.kind == "tanhsine":
        return surrogate_grad_tanhsine(i, k, spec.alpha)
    return surrogate_grad_fouriersine(i, k, spec.n_terms, spec.fourier_literal)


# ---------------------------------------------------------------------------
# encoder


_RANGE_TOL = 1e-6


def intensity_of(x: np.ndarray) -> np.ndarray:
    """Map [0,1] values to the integer intensity grid (round half away from zero)."""
    return np.minimum(np.floor(np.clip(x, 0.0, 1.0) * Y_MAX + 0.5), Y_MAX)


def bitplane_encode(x: Tensor, spec: SurrogateSpec, cfg: CodecConfig | None = None) -> SpikeTrain:
    """Encode normalized values into an 8-step MSB-first binary spike train.

    Forward is exact bit extraction of I = round(255*x).  Backward sums the
    per-plane surrogate gradients over timesteps, scaled by the 255 chain
    factor of the input normalization and, when enabled, by the order-aware
    rescale factor.
    """
    if cfg is None:
        cfg = CodecConfig()
    data = x.data
    lo, hi = float(data.min()) if data.size else 0.0, float(data.max()) if data.size else 0.0
    if lo < -_RANGE_TOL or hi > 1.0 + _RANGE_TOL:
        raise InputRangeError(
            f"encoder input must lie in [0,1] (tolerance {_RANGE_TOL}); got range [{lo}, {hi}]"
        )
    intensity = intensity_of(data).astype(data.dtype)
    bits = intensity.astype(np.uint8)
    planes = np.empty((cfg.t_steps,) + data.shape, dtype=data.dtype)
    for t in range(cfg.t_steps):
        k = cfg.t_steps - 1 - t
        planes[t] = (bits >> k) & 1

    def bwd(g):
        grads = _plane_gradients(intensity, spec)
        acc = np.einsum("t...,t...->...", g, grads)
        return (float(cfg.y_max) * acc,)

    out = tt.apply_op(planes, (x,), bwd, "bitplane_encode")
    return SpikeTrain(out, validate=False)


def _plane_gradients(intensity: np.ndarray, spec: SurrogateSpec) -> np.ndarray:
    """Stack of per-timestep surrogate gradients [T, ...]: timestep t carries
    plane k = 7 - t, rescaled when the spec asks for it."""
    grads = np.empty((T_STEPS,) + intensity.shape, dtype=intensity.dtype)
    for t in range(T_STEPS):
        k = T_STEPS - 1 - t
        grad_k = surrogate_gradient(intensity, k, spec)
        if spec.rescale:
            grad_k = grad_k * rescale_factor(k)
        grads[t] = grad_k
    return grads


# ---------------------------------------------------------------------------
# decoders


def _train_tensor(s) -> Tensor:
    return s.tensor if isinstance(s, SpikeTrain) else s


def decode_rate(s) -> Tensor:
    """Mean firing activity over timesteps; gradient 1/T to every step."""
    return tt.tmean(_train_tensor(s), axis=0)


def decode_bitplane(s) -> Tensor:
    """Binary-weighted sum of the 8 steps divided by 255 (exact encoder inverse)."""
    x = _train_tensor(s)
    if x.data.shape[0] != T_STEPS:
        raise ShapeError(f"bit-plane decoding expects {T_STEPS} steps, got {x.data.shape[0]}")
    w = (2.0 ** (T_STEPS - 1 - np.arange(T_STEPS, dtype=x.dtype))) / Y_MAX
    rest = x.data.shape[1:]
    flat = np.ascontiguousarray(x.data).reshape(T_STEPS, -1)
    out = (w @ flat).reshape(rest)

    def bwd(g):
        return (np.multiply.outer(w, g),)

    return tt.apply_op(out, (x,), bwd, "decode_bitplane")


def bit_pattern(intensity: int) -> str:
    """MSB-first bit string of an integer intensity, e.g. 5 -> '00000101'."""
    if not 0 <= intensity <= Y_MAX:
        raise ValueError(f"intensity must be in [0, {Y_MAX}], got {intensity}")
    return format(int(intensity), "08b")
