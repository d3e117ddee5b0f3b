"""Memory Fusion Network.

One LSTM per view; a delta-memory attention network re-weights the
concatenation of every view's previous and current cell states; a gated
memory accumulates the attended cross-view signal over time; a linear head
reads all hidden states plus the memory at each frame.
"""

from __future__ import annotations

import numpy as np

from .. import ndcore as nd
from ..ndcore import ContractError, DimensionError, ModelParams, Tensor
from .common import MultiViewBatch, add_dense, add_lstm


def init_mfn(view_dims: dict[str, int], hidden: int, memory: int, rng: np.random.Generator,
             attn_hidden: int | None = None) -> ModelParams:
    if len(view_dims) < 2:
        raise ContractError("MFN needs at least two views; use the attention model for one")
    if memory < 1:
        raise ContractError("memory dim must be >= 1")
    attn_hidden = attn_hidden or hidden
    params = ModelParams("mfn")
    for tag, d in view_dims.items():
        add_lstm(params, f"lstm.{tag}", d, hidden, rng)
    cat = 2 * hidden * len(view_dims)
    add_dense(params, "dman.l1", cat, attn_hidden, rng)
    add_dense(params, "dman.l2", attn_hidden, cat, rng)
    for gate in ("cand", "retain", "update"):
        add_dense(params, f"mem.{gate}", cat, memory, rng)
    add_dense(params, "head", hidden * len(view_dims) + memory, 2, rng)
    return params


def mfn_forward(batch: MultiViewBatch, params: ModelParams, rng=None, training: bool = False,
                dropout: float = 0.0, return_memory: bool = False, memory0=None):
    """Per-frame predictions (B, T, 2); with ``return_memory`` also the
    memory trace (B, T, m)."""
    if len(batch.views) < 2:
        raise ContractError("MFN needs at least two views; route single views to attention")
    B, T = batch.B, batch.T
    hs, cs = [], []
    for tag, x in zip(batch.view_tags, batch.views):
        name = f"lstm.{tag}"
        if name + ".w" not in params:
            raise ContractError(f"no LSTM parameters for view {tag!r}")
        w = params[name + ".w"]
        if w.shape[0] != x.shape[-1]:
            raise DimensionError(f"view {tag!r}: input dim {x.shape[-1]} but LSTM expects {w.shape[0]}")
        hc = nd.lstm_seq(Tensor(x), w, params[name + ".u"], params[name + ".b"])
        hs.append(hc[0])
        cs.append(hc[1])
    cur = nd.concat(cs, axis=-1)                                    # B, T, N*h
    zero = Tensor(np.zeros((B, 1, cur.shape[-1])))
    prev = nd.concat([zero, cur[:, :-1]], axis=1)
    both = nd.concat([prev, cur], axis=-1)                          # B, T, 2*N*h
    a = nd.relu(nd.linear(both, params["dman.l1.w"], params["dman.l1.b"]))
    coeff = nd.softmax(nd.linear(a, params["dman.l2.w"], params["dman.l2.b"]), axis=-1)
    attended = coeff * both
    cand = nd.tanh(nd.linear(attended, params["mem.cand.w"], params["mem.cand.b"]))
    retain = nd.sigmoid(nd.linear(attended, params["mem.retain.w"], params["mem.retain.b"]))
    update = nd.sigmoid(nd.linear(attended, params["mem.update.w"], params["mem.update.b"]))
    memory = nd.gated_scan(retain, update, cand, memory0)
    feats = nd.dropout(nd.concat(hs + [memory], axis=-1), dropout, rng, training)
    pred = nd.linear(feats, params["head.w"], params["head.b"])
    return (pred, memory) if return_memory else pred
