"""Optimizers, learning-rate schedules, and the classification loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import OptimError, ShapeError
from .tensor import Tensor


@dataclass
class OptimConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-3
    momentum: float = 0.9
    nesterov: bool = True
    sgdr_cycle: int = 0  # steps per cosine cycle; 0 = set from epoch length

    def __post_init__(self):
        if self.kind not in ("adam", "sgdr"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0,1), got ({self.beta1}, {self.beta2})")


def _check_finite(name: str, grad: np.ndarray):
    if not np.all(np.isfinite(grad)):
        raise OptimError(f"non-finite gradient for parameter {name!r}; step rejected")


class Adam:
    """Adam with bias correction and coupled L2 weight decay (grad += wd * theta)."""

    def __init__(self, params: dict[str, Tensor], cfg: OptimConfig):
        self.params = params
        self.cfg = cfg
        self.lr = cfg.lr
        self.state = {name: (np.zeros_like(p.data), np.zeros_like(p.data)) for name, p in params.items()}
        self.t = 0

    def step(self):
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            _check_finite(name, g)
            if cfg.weight_decay:
                g = g + cfg.weight_decay * p.data
            m, v = self.state[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


class SGD:
    """SGD with classical or Nesterov momentum and coupled L2 weight decay."""

    def __init__(self, params: dict[str, Tensor], cfg: OptimConfig):
        self.params = params
        self.cfg = cfg
        self.lr = cfg.lr
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        cfg = self.cfg
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            _check_finite(name, g)
            if cfg.weight_decay:
                g = g + cfg.weight_decay * p.data
            v = self.velocity[name]
            v *= cfg.momentum
            v += g
            update = g + cfg.momentum * v if cfg.nesterov else v
            p.data = p.data - self.lr * update

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def sgdr_initial_lr(batch_size: int) -> float:
    """Linear batch-size scaling of the warm-restart base rate: 0.1 * batch/256."""
    return 0.1 * batch_size / 256.0


def sgdr_lr(step: int, initial_lr: float, cycle_len: int, min_lr: float = 0.0) -> float:
    """Cosine annealing with warm restarts.

    The first cycle starts at ``initial_lr``; every restart begins at
    ``initial_lr / 10`` and decays to ``min_lr`` by the end of its cycle.
    """
    if cycle_len <= 0:
        raise ValueError(f"cycle length must be positive, got {cycle_len}")
    cycle = step // cycle_len
    pos = step % cycle_len
    start = initial_lr if cycle == 0 else initial_lr / 10.0
    return min_lr + 0.5 * (start - min_lr) * (1.0 + np.cos(np.pi * pos / cycle_len))


def make_optimizer(params: dict[str, Tensor], cfg: OptimConfig):
    if cfg.kind == "adam":
        return Adam(params, cfg)
    return SGD(params, cfg)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects [batch, classes] logits, got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    labels = labels.astype(np.int64)

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    loss = -logp[np.arange(n), labels].mean()

    def bwd(g):
        softmax = np.exp(logp)
        softmax[np.arange(n), labels] -= 1.0
        return (g * softmax / n,)

    return tt.apply_op(np.asarray(loss, dtype=z.dtype), (logits,), bwd, "cross_entropy")
