"""Valence/arousal fusion models over aligned multi-view sequences."""

from __future__ import annotations

import numpy as np

from ..ndcore import ContractError, ModelParams
from .attention import attention_forward, init_attention
from .checkpoint import load_checkpoint, save_checkpoint
from .common import MultiViewBatch
from .mctn import MctnOutputs, init_mctn, mctn_forward, mctn_loss
from .mfn import init_mfn, mfn_forward

MODEL_KINDS = ("attention", "mfn", "mctn")


def init_params(model_kind: str, dims: dict, rng: np.random.Generator) -> ModelParams:
    """Build freshly initialised parameters.

    ``dims`` holds ``views`` (tag -> feature dim) and ``hidden``; MFN also
    reads ``memory`` (defaults to hidden), MCTN reads ``source``/``target``
    tags (default visual -> audio).
    """
    views = dims["views"]
    hidden = int(dims["hidden"])
    if model_kind == "attention":
        return init_attention(views, hidden, rng)
    if model_kind == "mfn":
        return init_mfn(views, hidden, int(dims.get("memory") or hidden), rng)
    if model_kind == "mctn":
        src, tgt = dims.get("source", "visual"), dims.get("target", "audio")
        if src not in views or tgt not in views:
            raise ContractError(f"MCTN source/target {src!r}/{tgt!r} not among views {list(views)}")
        return init_mctn(views[src], views[tgt], hidden, rng)
    if model_kind == "expr":
        from ..exprnet import ExprConfig, init_expr
        return init_expr(dims["config"] if isinstance(dims.get("config"), ExprConfig)
                         else ExprConfig(**dims), rng)
    raise ContractError(f"unknown model kind {model_kind!r}")


__all__ = [
    "MODEL_KINDS", "MultiViewBatch", "MctnOutputs",
    "attention_forward", "mfn_forward", "mctn_forward", "mctn_loss",
    "init_params", "init_attention", "init_mfn", "init_mctn",
    "load_checkpoint", "save_checkpoint",
]
