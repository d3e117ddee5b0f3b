"""Modality-attention fusion: encode each view, score it, softmax over views,
sum the encodings with those weights, regress valence and arousal per frame."""

from __future__ import annotations

import numpy as np

from .. import ndcore as nd
from ..ndcore import DimensionError, ModelParams, Tensor
from .common import MultiViewBatch, add_dense


def init_attention(view_dims: dict[str, int], hidden: int, rng: np.random.Generator) -> ModelParams:
    params = ModelParams("attention")
    for tag, d in view_dims.items():
        add_dense(params, f"enc.{tag}", d, hidden, rng)
        add_dense(params, f"score.{tag}", hidden, 1, rng, bias=False)
    add_dense(params, "head", hidden, 2, rng)
    return params


def attention_weights_and_fused(batch: MultiViewBatch, params: ModelParams):
    encoded, scores = [], []
    for tag, x in zip(batch.view_tags, batch.views):
        w = params[f"enc.{tag}.w"]
        if w.shape[0] != x.shape[-1]:
            raise DimensionError(f"view {tag!r}: input dim {x.shape[-1]} but encoder expects {w.shape[0]}")
        h = nd.tanh(nd.linear(Tensor(x), w, params[f"enc.{tag}.b"]))
        encoded.append(h)
        scores.append(nd.linear(h, params[f"score.{tag}.w"]))
    B, T, N = batch.B, batch.T, len(encoded)
    alpha = nd.softmax(nd.concat(scores, axis=-1), axis=-1)          # B, T, N
    H = nd.stack(encoded, axis=2)                                    # B, T, N, h
    hdim = H.shape[-1]
    fused = nd.bmm(alpha.reshape(B * T, 1, N), H.reshape(B * T, N, hdim)).reshape(B, T, hdim)
    return alpha, fused


def attention_forward(batch: MultiViewBatch, params: ModelParams, rng=None,
                      training: bool = False, dropout: float = 0.0) -> Tensor:
    """Per-frame (valence, arousal) predictions, shape (B, T, 2)."""
    _, fused = attention_weights_and_fused(batch, params)
    fused = nd.dropout(fused, dropout, rng, training)
    return nd.linear(fused, params["head.w"], params["head.b"])
