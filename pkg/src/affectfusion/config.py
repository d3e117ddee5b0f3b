"""Run configuration: flat JSON, validated before any data is touched."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

TASK_MODELS = {"va": ("attention", "mfn", "mctn"), "expr": ("expr",)}


@dataclass
class RunConfig:
    task: str = "va"
    model: str = "attention"
    data_dir: str = ""
    out_dir: str = "runs/latest"
    views: list[str] = field(default_factory=list)
    anchor: str = ""
    align_method: str = "interp"
    seed: int = 0
    # optimisation
    hidden: int = 256
    dropout: float = 0.2
    loss_weight: float = 0.5
    grad_clip: float = 0.8
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    seq_len: int = 64
    stride: int = 64
    patience: int = 0
    stop_at: float = 0.0  # stop once the monitored metric reaches this; 0 disables
    val_fraction: float = 0.0
    test_fraction: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # MFN / MCTN
    memory_dim: int = 0
    source: str = "visual"
    target: str = "audio"
    lambda_trans: float = 0.1
    lambda_cycle: float = 0.1
    # expression model
    num_classes: int = 8
    encoder_layers: int = 6
    num_heads: int = 8
    head_dim: int = 128
    ffn_dim: int = 1024
    positional: str = "learned"
    strict_mask: bool = False
    loss: str = "f1"
    label_smoothing: float = 0.0

    def __post_init__(self):
        if not self.views:
            self.views = ["visual", "audio"] if self.task == "va" else ["visual"]
        if not self.anchor:
            self.anchor = self.views[0]
        self.validate()

    # ------------------------------------------------------------ validation
    def validate(self) -> None:
        def check(cond, msg):
            if not cond:
                raise ConfigError(msg)

        for f in fields(self):
            value = getattr(self, f.name)
            expected = {"int": int, "float": (int, float), "str": str, "bool": bool}.get(f.type)
            if expected is not None:
                ok = isinstance(value, expected) and not (f.type != "bool" and isinstance(value, bool))
                check(ok, f"{f.name}: expected {f.type}, got {value!r}")
        check(isinstance(self.views, list) and all(isinstance(v, str) and v for v in self.views),
              "views must be a list of non-empty tags")
        check(len(set(self.views)) == len(self.views), f"duplicate views {self.views}")
        check(self.task in TASK_MODELS, f"task must be one of {sorted(TASK_MODELS)}")
        check(self.model in TASK_MODELS[self.task],
              f"model {self.model!r} not valid for task {self.task!r} (choose from {TASK_MODELS[self.task]})")
        check(self.anchor in self.views, f"anchor {self.anchor!r} not among views {self.views}")
        check(self.align_method in ("interp", "pool"), "align_method must be 'interp' or 'pool'")
        check(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        for name in ("hidden", "batch_size", "seq_len", "stride", "num_classes",
                     "encoder_layers", "num_heads", "head_dim", "ffn_dim"):
            check(getattr(self, name) >= 1, f"{name} must be >= 1")
        for name in ("epochs", "patience", "memory_dim"):
            check(getattr(self, name) >= 0, f"{name} must be >= 0")
        check(self.stride <= self.seq_len, "stride must not exceed seq_len")
        check(0.0 <= self.dropout < 1.0, "dropout must be in [0, 1)")
        check(0.0 <= self.loss_weight <= 1.0, "loss_weight must be in [0, 1]")
        check(self.grad_clip > 0, "grad_clip must be positive")
        check(self.lr > 0, "lr must be positive")
        check(0.0 <= self.stop_at <= 1.0, "stop_at must be in [0, 1]")
        check(0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0, "adam betas must be in [0, 1)")
        check(self.adam_eps > 0, "adam_eps must be positive")
        check(0.0 <= self.val_fraction < 1.0 and 0.0 <= self.test_fraction < 1.0
              and self.val_fraction + self.test_fraction < 1.0,
              "val_fraction + test_fraction must be in [0, 1)")
        check(self.lambda_trans >= 0 and self.lambda_cycle >= 0, "MCTN loss weights must be >= 0")
        check(0.0 <= self.label_smoothing < 1.0, "label_smoothing must be in [0, 1)")
        check(self.positional in ("learned", "none"), "positional must be 'learned' or 'none'")
        check(self.loss in ("f1", "ce"), "loss must be 'f1' or 'ce'")
        if self.model == "mfn":
            check(len(self.views) >= 2, "mfn needs at least two views")
        if self.model == "mctn":
            check(self.source != self.target, "mctn source and target must differ")
            check(self.source in self.views and self.target in self.views,
                  f"mctn source/target must be among views {self.views}")
        if self.model == "expr":
            check(len(self.views) == 1, "the expression model takes exactly one view")

    # ------------------------------------------------------------ I/O
    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        if not isinstance(values, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            values = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config must be a JSON object")
        values.update(overrides or {})
        return cls.from_dict(values)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **changes) -> "RunConfig":
        values = self.to_dict()
        values.update(changes)
        return RunConfig.from_dict(values)


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value parsed as JSON when possible."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not key=value")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw
