"""Multimodal Cyclic Translation Network.

An LSTM encoder reads the source view. A decoder translates the encoder
states into the target view; a back-translator re-encodes that translation
and reconstructs the source (the cycle). Valence and arousal are regressed
from the encoder states alone, so inference never touches the target view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import ndcore as nd
from ..ndcore import ContractError, DimensionError, ModelParams, Tensor
from ..objectives import VaTarget, masked_mse, va_loss
from .common import MultiViewBatch, add_dense, add_lstm


@dataclass
class MctnOutputs:
    pred: Tensor            # B, T, 2
    translation: Tensor     # B, T, d_target
    cycle: Tensor           # B, T, d_source


def init_mctn(source_dim: int, target_dim: int, hidden: int, rng: np.random.Generator) -> ModelParams:
    params = ModelParams("mctn")
    add_lstm(params, "enc", source_dim, hidden, rng)
    add_lstm(params, "dec", hidden, hidden, rng)
    add_dense(params, "dec.out", hidden, target_dim, rng)
    add_lstm(params, "back", target_dim, hidden, rng)
    add_dense(params, "back.out", hidden, source_dim, rng)
    add_dense(params, "head", hidden, 2, rng)
    return params


def _lstm(params, name, x):
    return nd.lstm_seq(x, params[name + ".w"], params[name + ".u"], params[name + ".b"])[0]


def mctn_forward(batch: MultiViewBatch, params: ModelParams, source: str = "visual",
                 target: str = "audio", rng=None, training: bool = False,
                 dropout: float = 0.0) -> MctnOutputs:
    if source == target:
        raise ContractError("source and target modalities must differ")
    if not batch.has(source):
        raise ContractError(f"source view {source!r} missing from batch {batch.view_tags}")
    x_s = batch.view(source)
    if x_s.shape[-1] != params["enc.w"].shape[0]:
        raise DimensionError(
            f"source dim {x_s.shape[-1]} but encoder expects {params['enc.w'].shape[0]}"
        )
    enc = _lstm(params, "enc", Tensor(x_s))
    trans = nd.linear(_lstm(params, "dec", enc), params["dec.out.w"], params["dec.out.b"])
    cycle = nd.linear(_lstm(params, "back", trans), params["back.out.w"], params["back.out.b"])
    feats = nd.dropout(enc, dropout, rng, training)
    pred = nd.linear(feats, params["head.w"], params["head.b"])
    return MctnOutputs(pred, trans, cycle)


def mctn_loss(outputs: MctnOutputs, batch: MultiViewBatch, target: VaTarget, w: float = 0.5,
              lambda_trans: float = 0.1, lambda_cycle: float = 0.1,
              source: str = "visual", target_view: str = "audio") -> nd.Tensor:
    """va_loss + lambda_trans * MSE(translation) + lambda_cycle * MSE(cycle)."""
    loss = va_loss(outputs.pred[..., 0], outputs.pred[..., 1], target, w)
    if lambda_trans:
        if not batch.has(target_view):
            raise ContractError(f"target view {target_view!r} needed for the translation loss")
        mse = masked_mse(outputs.translation, batch.view(target_view), target.valid)
        loss = loss + nd.scale(mse, lambda_trans)
    if lambda_cycle:
        mse = masked_mse(outputs.cycle, batch.view(source), target.valid)
        loss = loss + nd.scale(mse, lambda_cycle)
    return loss
