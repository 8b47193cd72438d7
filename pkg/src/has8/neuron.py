"""Integrate-and-fire neuron with hard reset and arctangent surrogate gradient.

The membrane update is u(t) = (1 - s(t-1)) * u(t-1) + current(t), with a
spike whenever u(t) >= threshold.  The reset factor stays on the tape, so
backpropagation through time sees the full recurrence, including the
gradient path through past spikes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import tensor as tt
from .errors import ShapeError
from .tensor import Tensor


@dataclass
class IFConfig:
    v_threshold: float = 1.0
    surrogate_alpha: float = 2.0

    def __post_init__(self):
        if self.v_threshold <= 0:
            raise ValueError(f"v_threshold must be positive, got {self.v_threshold}")


def arctan_surrogate(x, alpha: float = 2.0):
    """Substitute derivative of the spike threshold: alpha / (2 (1 + ((pi/2) alpha x)^2))."""
    x = np.asarray(x)
    return alpha / (2.0 * (1.0 + (np.pi / 2.0 * alpha * x) ** 2))


def spike_threshold(u: Tensor, v_threshold: float, alpha: float) -> Tensor:
    """Heaviside(u - v_th) forward with the arctangent surrogate backward."""
    shifted = u.data - v_threshold
    out = (shifted >= 0).astype(u.dtype)

    def bwd(g):
        return (g * arctan_surrogate(shifted, alpha).astype(g.dtype),)

    return tt.apply_op(out, (u,), bwd, "spike_threshold")


class IFNeuron:
    """Stateful hard-reset IF neuron; one instance per spiking layer position.

    Owned by a single worker: the membrane state persists across ``step``
    calls until ``reset``.
    """

    def __init__(self, cfg: IFConfig | None = None):
        self.cfg = cfg or IFConfig()
        self.u: Tensor | None = None
        self.s_prev: Tensor | None = None

    def reset(self):
        """Clear membrane potential and previous-spike memory."""
        self.u = None
        self.s_prev = None

    def step(self, current: Tensor) -> Tensor:
        """Advance one timestep on the shared tape and return the spikes."""
        if self.u is not None and self.u.shape != current.shape:
            raise ShapeError(f"IF state shape {self.u.shape} != current shape {current.shape}")
        if self.u is None:
            u_new = current
        else:
            keep = 1.0 - self.s_prev
            u_new = keep * self.u + current
        spikes = spike_threshold(u_new, self.cfg.v_threshold, self.cfg.surrogate_alpha)
        self.u = u_new
        self.s_prev = spikes
        return spikes

    def run(self, currents: Tensor, t_steps: int | None = None, fused: bool = True) -> Tensor:
        """Reset, then step through a [T, ...] current sequence; stacks the spikes.

        The fused path evaluates the whole recurrence in one tape node with
        a reverse-time adjoint sweep; it is exactly equivalent to stepping,
        but leaves no per-step state behind.
        """
        steps = currents.shape[0]
        if t_steps is not None and steps != t_steps:
            raise ShapeError(f"expected {t_steps} timesteps, got {steps}")
        self.reset()
        if not fused:
            outs = [self.step(tt.index0(currents, t)) for t in range(steps)]
            return tt.stack(outs, axis=0)
        return if_run(currents, self.cfg)


def if_run(currents: Tensor, cfg: IFConfig) -> Tensor:
    """Full T-step IF recurrence as one tape node.

    Forward matches repeated ``IFNeuron.step`` exactly.  Backward runs the
    adjoint recurrence in reverse time: with u(t+1) = (1-s(t)) u(t) + c(t+1),
    the spike adjoint is dL/ds(t) = g(t) - dL/du(t+1) * u(t) and the membrane
    adjoint is dL/du(t) = dL/ds(t) * surr'(u(t)) + dL/du(t+1) * (1-s(t)),
    so the reset path contributes gradient exactly as in the stepped form.
    """
    c = np.ascontiguousarray(currents.data)
    vth = cfg.v_threshold
    alpha = cfg.surrogate_alpha
    membranes, spikes = _kernels.if_forward(c, vth)

    def bwd(g):
        return (_kernels.if_backward(np.ascontiguousarray(g), membranes, spikes, vth, alpha),)

    return tt.apply_op(spikes, (currents,), bwd, "if_run")


def run_over_time(layer, inputs: Tensor, t_steps: int | None = None) -> Tensor:
    """Apply a layer step-by-step over the leading time axis on one tape.

    Stateful layers (anything with ``step``/``reset``) are reset first and
    advanced sequentially so the recurrence stays differentiable without
    truncation; stateless callables are simply applied to every step.
    """
    steps = inputs.shape[0]
    if t_steps is not None and steps != t_steps:
        raise ShapeError(f"expected {t_steps} timesteps, got {steps}")
    if hasattr(layer, "step") and hasattr(layer, "reset"):
        return layer.run(inputs, t_steps=t_steps)
    outs = [layer(tt.index0(inputs, t)) for t in range(steps)]
    return tt.stack(outs, axis=0)
