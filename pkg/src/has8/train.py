"""Training and evaluation loops with deterministic metrics emission.

The metrics stream (metrics.jsonl) is a pure function of (config, seed):
it opens with the resolved config, carries one record per logging interval
and per epoch, and ends with the best validation accuracy.  Wall-clock
timings are written to the side log only, so two identical runs produce
byte-identical metric files.
"""

from __future__ import annotations

import ctypes
import json
import os
import time

import numpy as np

from . import tensor as tt
from .blocks import build_model
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import Dataset, batches, load_cifar10, load_mnist, split_80_20
from .errors import Has8Error
from .optim import cross_entropy, make_optimizer, sgdr_initial_lr, sgdr_lr
from .tensor import Tensor, backward


class TrainingAborted(Has8Error, RuntimeError):
    """Raised when a run hits a non-finite loss; names the guilty operation."""


def tune_malloc():
    """Keep large allocations on the reusable heap (big win for conv buffers)."""
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except Exception:
        pass


def first_nonfinite_op(loss: Tensor) -> str:
    """Walk the tape in creation order; name the earliest op with bad values."""
    found = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        if not np.all(np.isfinite(t.data)):
            found.append((t.node.seq, t.node.op))
        stack.extend(t.node.parents)
    if not found:
        return "unknown"
    return min(found)[1]


def load_dataset(cfg: RunConfig, split: str) -> Dataset:
    limit = cfg.limit_train if split == "train" else cfg.limit_test
    if cfg.data_name == "mnist":
        return load_mnist(cfg.data_path, split=split, limit=limit, resize_to=cfg.resize_to)
    return load_cifar10(cfg.data_path, split=split, limit=limit, resize_to=cfg.resize_to)


def evaluate(model, ds: Dataset, batch_size: int = 256, dtype=np.float32) -> float:
    """Top-1 accuracy over a dataset; eval-mode statistics, fresh neuron state."""
    model.eval()
    correct = 0
    with tt.no_grad():
        for start in range(0, len(ds), batch_size):
            x = Tensor(ds.images[start : start + batch_size].astype(dtype, copy=False))
            logits = model(x)
            pred = logits.data.argmax(axis=1)
            correct += int((pred == ds.labels[start : start + batch_size]).sum())
    model.train()
    return correct / len(ds) if len(ds) else 0.0


class _Emitter:
    def __init__(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.metrics = open(os.path.join(out_dir, "metrics.jsonl"), "w")
        self.log = open(os.path.join(out_dir, "train.log"), "w")
        self.t0 = time.time()

    def metric(self, record: dict):
        self.metrics.write(json.dumps(record, sort_keys=True) + "\n")
        self.metrics.flush()

    def info(self, msg: str):
        line = f"[{time.time() - self.t0:9.2f}s] {msg}"
        self.log.write(line + "\n")
        self.log.flush()
        print(line)

    def close(self):
        self.metrics.close()
        self.log.close()


def train_run(cfg: RunConfig) -> dict:
    """Run one experiment end to end; returns the summary record."""
    tune_malloc()
    dtype = np.float32 if cfg.precision == "f32" else np.float64

    full_train = load_dataset(cfg, "train")
    train_ds, val_ds = split_80_20(full_train, cfg.seed)
    test_ds = load_dataset(cfg, "test")

    rng = np.random.default_rng(cfg.seed)
    model = build_model(cfg.model, rng, dtype=dtype)
    params = model.named_parameters()
    opt = make_optimizer(params, cfg.optim)

    cycle = cfg.optim.sgdr_cycle
    if cfg.optim.kind == "sgdr" and cycle <= 0:
        cycle = max(1, (len(train_ds) + cfg.batch_size - 1) // cfg.batch_size)
    sgdr_base = sgdr_initial_lr(cfg.batch_size)

    em = _Emitter(cfg.out_dir)
    em.metric({"config": cfg.to_flat()})
    em.info(f"model {cfg.model.name()}: {model.param_count()} parameters")
    em.info(f"data {cfg.data_name}: train {len(train_ds)}, val {len(val_ds)}, test {len(test_ds)}")

    best_val, best_epoch = 0.0, -1
    global_step = 0
    stop = False
    try:
        ckpt_path = os.path.join(cfg.out_dir, "checkpoint-epoch0.has8")
        if cfg.epochs == 0:
            save_checkpoint(ckpt_path, cfg.model, {k: v.data for k, v in model.named_tensors().items()})
        for epoch in range(cfg.epochs):
            for x_np, y_np in batches(train_ds, cfg.batch_size, cfg.seed, epoch):
                if cfg.optim.kind == "sgdr":
                    opt.lr = sgdr_lr(global_step, sgdr_base, cycle)
                x = Tensor(x_np.astype(dtype, copy=False))
                logits = model(x)
                loss = cross_entropy(logits, y_np)
                if not np.isfinite(loss.data):
                    op = first_nonfinite_op(loss)
                    raise TrainingAborted(f"non-finite loss at step {global_step}; first bad op: {op}")
                backward(loss)
                opt.step()
                opt.zero_grad()
                if global_step % cfg.log_interval == 0:
                    acc = float((logits.data.argmax(axis=1) == y_np).mean())
                    rec = {
                        "epoch": epoch,
                        "step": global_step,
                        "loss": round(float(loss.data), 6),
                        "train_acc": round(acc, 4),
                        "lr": opt.lr,
                    }
                    em.metric(rec)
                    em.info(f"epoch {epoch} step {global_step} loss {loss.data:.4f} acc {acc:.3f}")
                global_step += 1

            val_acc = evaluate(model, val_ds, dtype=dtype)
            ckpt_path = os.path.join(cfg.out_dir, f"checkpoint-epoch{epoch + 1}.has8")
            save_checkpoint(ckpt_path, cfg.model, {k: v.data for k, v in model.named_tensors().items()})
            em.metric({"epoch": epoch, "val_acc": round(val_acc, 4), "checkpoint": os.path.basename(ckpt_path)})
            em.info(f"epoch {epoch} done: val_acc {val_acc:.4f} -> {ckpt_path}")
            if val_acc > best_val:
                best_val, best_epoch = val_acc, epoch
            if cfg.target_acc and val_acc >= cfg.target_acc:
                em.info(f"target accuracy {cfg.target_acc} reached; stopping early")
                stop = True
            if stop:
                break

        summary = {"best_val_acc": round(best_val, 4), "best_epoch": best_epoch, "steps": global_step}
        em.metric(summary)
        em.info(f"done: best val_acc {best_val:.4f} (epoch {best_epoch})")
        summary["checkpoint"] = ckpt_path
        summary["model"] = model
        summary["test_ds"] = test_ds
        return summary
    finally:
        em.close()
