"""Run configuration: flat key=value files with dotted sections, flag overrides.

A run is fully described by its resolved configuration plus the seed; the
training loop echoes the resolved mapping into the metrics stream so every
run is self-describing and diffable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import ModelSpec
from .codec import SurrogateSpec
from .errors import ConfigError
from .optim import OptimConfig


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data_name: str = "mnist"
    data_path: str = "."
    limit_train: int | None = 10000
    limit_test: int | None = 1000
    resize_to: int | None = None
    epochs: int = 3
    batch_size: int = 64
    seed: int = 42
    precision: str = "f32"
    log_interval: int = 50
    target_acc: float = 0.0  # stop once validation accuracy reaches this; 0 disables
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(f"bad schedule: epochs={self.epochs}, batch_size={self.batch_size}")
        if self.data_name not in ("mnist", "cifar10"):
            raise ConfigError(f"unknown dataset {self.data_name!r}")

    def to_flat(self) -> dict:
        m, s, o = self.model, self.model.surrogate, self.optim
        return {
            "model.variant": m.variant,
            "model.b": m.b,
            "model.m": m.m,
            "model.d_max": m.d_max,
            "model.num_classes": m.num_classes,
            "model.in_channels": m.in_channels,
            "model.decoder": m.decoder,
            "model.mlp_width": m.mlp_width,
            "model.surrogate": s.kind,
            "model.alpha": s.alpha,
            "model.n_terms": s.n_terms,
            "model.rescale": s.rescale,
            "model.fourier_literal": s.fourier_literal,
            "optim.kind": o.kind,
            "optim.lr": o.lr,
            "optim.beta1": o.beta1,
            "optim.beta2": o.beta2,
            "optim.eps": o.eps,
            "optim.weight_decay": o.weight_decay,
            "optim.momentum": o.momentum,
            "optim.nesterov": o.nesterov,
            "optim.sgdr_cycle": o.sgdr_cycle,
            "data.name": self.data_name,
            "data.path": self.data_path,
            "data.limit_train": self.limit_train,
            "data.limit_test": self.limit_test,
            "data.resize_to": self.resize_to,
            "train.epochs": self.epochs,
            "train.batch_size": self.batch_size,
            "train.seed": self.seed,
            "train.precision": self.precision,
            "train.log_interval": self.log_interval,
            "train.target_acc": self.target_acc,
            "run.out_dir": self.out_dir,
        }


def parse_config_file(path: str) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _to_bool(v: str) -> bool:
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _to_opt_int(v):
    if v is None or str(v).lower() in ("none", ""):
        return None
    return int(v)


_COERCERS = {
    "model.variant": str,
    "model.b": int,
    "model.m": int,
    "model.d_max": int,
    "model.num_classes": int,
    "model.in_channels": int,
    "model.decoder": str,
    "model.mlp_width": int,
    "model.input_size": _to_opt_int,
    "model.surrogate": str,
    "model.alpha": float,
    "model.n_terms": int,
    "model.rescale": _to_bool,
    "model.fourier_literal": _to_bool,
    "optim.kind": str,
    "optim.lr": float,
    "optim.beta1": float,
    "optim.beta2": float,
    "optim.eps": float,
    "optim.weight_decay": float,
    "optim.momentum": float,
    "optim.nesterov": _to_bool,
    "optim.sgdr_cycle": int,
    "data.name": str,
    "data.path": str,
    "data.limit_train": _to_opt_int,
    "data.limit_test": _to_opt_int,
    "data.resize_to": _to_opt_int,
    "train.epochs": int,
    "train.batch_size": int,
    "train.seed": int,
    "train.precision": str,
    "train.log_interval": int,
    "train.target_acc": float,
    "run.out_dir": str,
}


def config_from_mapping(mapping: dict) -> RunConfig:
    """Build a RunConfig from flat dotted keys, rejecting unknown ones."""
    unknown = sorted(set(mapping) - set(_COERCERS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    vals = {}
    for key, raw in mapping.items():
        try:
            vals[key] = _COERCERS[key](raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from None

    def take(key, default):
        return vals.get(key, default)

    try:
        surrogate = SurrogateSpec(
            kind=take("model.surrogate", "fouriersine"),
            alpha=take("model.alpha", -10.0),
            n_terms=take("model.n_terms", 5),
            rescale=take("model.rescale", True),
            fourier_literal=take("model.fourier_literal", True),
        )
        model = ModelSpec(
            variant=take("model.variant", "vgg"),
            b=take("model.b", 16),
            m=take("model.m", 2),
            d_max=take("model.d_max", 4),
            num_classes=take("model.num_classes", 10),
            in_channels=take("model.in_channels", 3),
            surrogate=surrogate,
            decoder=take("model.decoder", "bitplane"),
            mlp_width=take("model.mlp_width", 2048),
            input_size=take("model.input_size", None),
        )
        optim = OptimConfig(
            kind=take("optim.kind", "adam"),
            lr=take("optim.lr", 1e-3),
            beta1=take("optim.beta1", 0.9),
            beta2=take("optim.beta2", 0.999),
            eps=take("optim.eps", 1e-8),
            weight_decay=take("optim.weight_decay", 1e-3),
            momentum=take("optim.momentum", 0.9),
            nesterov=take("optim.nesterov", True),
            sgdr_cycle=take("optim.sgdr_cycle", 0),
        )
        return RunConfig(
            model=model,
            optim=optim,
            data_name=take("data.name", "mnist"),
            data_path=take("data.path", "."),
            limit_train=take("data.limit_train", 10000),
            limit_test=take("data.limit_test", 1000),
            resize_to=take("data.resize_to", None),
            epochs=take("train.epochs", 3),
            batch_size=take("train.batch_size", 64),
            seed=take("train.seed", 42),
            precision=take("train.precision", "f32"),
            log_interval=take("train.log_interval", 50),
            target_acc=take("train.target_acc", 0.0),
            out_dir=take("run.out_dir", "runs/default"),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """File settings first, then overrides (command-line flags win)."""
    mapping = parse_config_file(path) if path else {}
    if overrides:
        mapping.update(overrides)
    return config_from_mapping(mapping)
