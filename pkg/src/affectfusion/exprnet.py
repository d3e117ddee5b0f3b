"""Per-frame expression classifier over precomputed backbone features.

The backbone features ``x`` pass through a stack of post-norm transformer
encoder layers ``F``; the classifier reads ``F(x) + x``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import ndcore as nd
from .fusion.common import add_dense, uniform
from .ndcore import ContractError, DimensionError, ModelParams, Tensor
from .objectives import ExprTarget

MASK_FILL = -1e9


@dataclass
class ExprConfig:
    feature_dim: int = 1024
    seq_len: int = 64
    num_classes: int = 8
    encoder_layers: int = 6
    num_heads: int = 8
    head_dim: int = 128
    ffn_dim: int = 1024
    dropout: float = 0.2
    positional: str = "learned"
    strict_mask: bool = False

    def __post_init__(self):
        for name in ("feature_dim", "seq_len", "num_classes", "encoder_layers",
                     "num_heads", "head_dim", "ffn_dim"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.positional not in ("learned", "none"):
            raise ContractError(f"positional must be 'learned' or 'none', got {self.positional!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must be in [0, 1)")

    @property
    def inner_dim(self) -> int:
        return self.num_heads * self.head_dim

    def to_dict(self) -> dict:
        return asdict(self)


def init_expr(cfg: ExprConfig, rng: np.random.Generator) -> ModelParams:
    D, I, F = cfg.feature_dim, cfg.inner_dim, cfg.ffn_dim
    params = ModelParams("expr")
    if cfg.positional == "learned":
        params["pos"] = uniform(rng, D, (cfg.seq_len, D))
    for l in range(cfg.encoder_layers):
        p = f"layer{l}"
        for proj in ("q", "k", "v"):
            add_dense(params, f"{p}.{proj}", D, I, rng)
        add_dense(params, f"{p}.o", I, D, rng)
        params[f"{p}.ln1.g"] = np.ones(D)
        params[f"{p}.ln1.b"] = np.zeros(D)
        add_dense(params, f"{p}.ffn1", D, F, rng)
        add_dense(params, f"{p}.ffn2", F, D, rng)
        params[f"{p}.ln2.g"] = np.ones(D)
        params[f"{p}.ln2.b"] = np.zeros(D)
    add_dense(params, "head", D, cfg.num_classes, rng)
    return params


def zero_output_path(params: ModelParams, cfg: ExprConfig) -> None:
    """Zero the last layer's final layer-norm scale and offset so the encoder
    branch emits exactly zero."""
    last = f"layer{cfg.encoder_layers - 1}"
    params[f"{last}.ln2.g"] = np.zeros(cfg.feature_dim)
    params[f"{last}.ln2.b"] = np.zeros(cfg.feature_dim)


def _heads(t: Tensor, B: int, T: int, H: int, dh: int) -> Tensor:
    return t.reshape(B, T, H, dh).transpose(0, 2, 1, 3)


def encoder_layer(x: Tensor, params: ModelParams, layer: int, cfg: ExprConfig, rng=None,
                  training: bool = False, key_valid=None) -> Tensor:
    """x <- LN(x + MHA(x)); x <- LN(x + FFN(x)), MHA over ``num_heads`` heads.

    ``key_valid`` (B, T) hides invalid frames from every query.
    """
    B, T, D = x.shape
    H, dh = cfg.num_heads, cfg.head_dim
    p = f"layer{layer}"
    q = _heads(nd.linear(x, params[f"{p}.q.w"], params[f"{p}.q.b"]), B, T, H, dh)
    k = _heads(nd.linear(x, params[f"{p}.k.w"], params[f"{p}.k.b"]), B, T, H, dh)
    v = _heads(nd.linear(x, params[f"{p}.v.w"], params[f"{p}.v.b"]), B, T, H, dh)
    scores = nd.scale(nd.bmm(q, k.transpose(0, 1, 3, 2)), 1.0 / np.sqrt(dh))
    if key_valid is not None:
        fill = np.where(np.asarray(key_valid, dtype=bool)[:, None, None, :], 0.0, MASK_FILL)
        scores = scores + Tensor(np.broadcast_to(fill, scores.shape))
    attn = nd.softmax(scores, axis=-1)
    ctx = nd.bmm(attn, v).transpose(0, 2, 1, 3).reshape(B, T, H * dh)
    out = nd.linear(ctx, params[f"{p}.o.w"], params[f"{p}.o.b"])
    out = nd.dropout(out, cfg.dropout, rng, training)
    x = nd.layer_norm(x + out, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
    ff = nd.relu(nd.linear(x, params[f"{p}.ffn1.w"], params[f"{p}.ffn1.b"]))
    ff = nd.linear(ff, params[f"{p}.ffn2.w"], params[f"{p}.ffn2.b"])
    ff = nd.dropout(ff, cfg.dropout, rng, training)
    return nd.layer_norm(x + ff, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])


def residual_embed(x, params: ModelParams, cfg: ExprConfig, rng=None, training: bool = False,
                   valid=None) -> Tensor:
    """y = Encoder(x + positional) + x.

    ``valid`` is only consulted when ``cfg.strict_mask`` is set.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 3 or x.shape[-1] != cfg.feature_dim:
        raise DimensionError(f"expected (B, T, {cfg.feature_dim}) features, got {x.shape}")
    T = x.shape[1]
    if T > cfg.seq_len:
        raise DimensionError(f"sequence length {T} exceeds configured {cfg.seq_len}")
    z = x
    if cfg.positional == "learned":
        z = nd.bias_add(z, params["pos"][:T])
    key_valid = valid if (cfg.strict_mask and valid is not None) else None
    for l in range(cfg.encoder_layers):
        z = encoder_layer(z, params, l, cfg, rng, training, key_valid)
    return z + x


def expr_forward(x, params: ModelParams, cfg: ExprConfig, rng=None, training: bool = False,
                 valid=None) -> Tensor:
    """Logits (B, T, num_classes)."""
    y = residual_embed(x, params, cfg, rng, training, valid)
    return nd.linear(y, params["head.w"], params["head.b"])


def predict_proba(x, params: ModelParams, cfg: ExprConfig, valid=None) -> np.ndarray:
    with nd.no_grad():
        logits = expr_forward(x, params, cfg, valid=valid)
        return nd.softmax(logits, axis=-1).data


def pseudo_label(params: ModelParams, cfg: ExprConfig, windows, tau: float, valid=None):
    """Label frames whose top class probability reaches ``tau``.

    ``windows`` is (B, T, D). Returns ``(ExprTarget, kept_mask, kept_fraction)``
    where the target is flattened over B*T and kept frames are the valid ones.
    Frames already invalid in ``valid`` are never kept.
    """
    if not 0.0 <= tau <= 1.0:
        raise ContractError(f"confidence threshold must be in [0, 1], got {tau}")
    windows = np.asarray(windows, dtype=np.float64)
    probs = predict_proba(windows, params, cfg, valid)
    conf = probs.max(axis=-1)
    labels = probs.argmax(axis=-1)
    kept = conf >= tau
    base = np.ones(kept.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    kept &= base
    frac = float(kept.sum() / max(base.sum(), 1))
    target = ExprTarget(labels.reshape(-1), kept.reshape(-1), cfg.num_classes)
    return target, kept, frac
