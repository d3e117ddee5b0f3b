"""Composite and fused layers: LSTM, gated memory scan, layer norm, dropout."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import ops
from .ops import _stable_sigmoid
from .tensor import ContractError, DimensionError, Tensor, as_tensor, make_op

__all__ = [
    "lstm_cell",
    "lstm_seq",
    "gated_scan",
    "layer_norm",
    "dropout",
    "clip_grad_norm",
]


def _check_lstm(d_in: int, w: Tensor, u: Tensor, b: Tensor) -> int:
    if w.ndim != 2 or w.shape[1] % 4:
        raise DimensionError(f"lstm: input weight must be (d_in, 4*d_h), got {w.shape}")
    d_h = w.shape[1] // 4
    if w.shape[0] != d_in:
        raise DimensionError(f"lstm: input dim {d_in} does not match weight {w.shape}")
    if u.shape != (d_h, 4 * d_h):
        raise DimensionError(f"lstm: recurrent weight {u.shape}, expected {(d_h, 4 * d_h)}")
    if b.shape != (4 * d_h,):
        raise DimensionError(f"lstm: bias {b.shape}, expected {(4 * d_h,)}")
    return d_h


def lstm_cell(x, h, c, w, u, b):
    """One LSTM step built from primitive ops.

    Gate blocks along the last axis of ``w``/``u``/``b`` are ordered
    input, forget, candidate, output. ``x`` is ``(d_in,)`` or ``(B, d_in)``;
    ``h`` and ``c`` have the matching ``(d_h,)`` or ``(B, d_h)`` shape.
    Returns ``(h_next, c_next)``.
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    w, u, b = as_tensor(w), as_tensor(u), as_tensor(b)
    d_h = _check_lstm(x.shape[-1], w, u, b)
    if h.shape[-1] != d_h or c.shape != h.shape or h.shape[:-1] != x.shape[:-1]:
        raise DimensionError(f"lstm_cell: state shapes {h.shape}/{c.shape} vs input {x.shape}")
    z = ops.add(ops.linear(x, w, b), ops.linear(h, u))
    i = ops.sigmoid(z[..., 0:d_h])
    f = ops.sigmoid(z[..., d_h:2 * d_h])
    g = ops.tanh(z[..., 2 * d_h:3 * d_h])
    o = ops.sigmoid(z[..., 3 * d_h:])
    c_next = f * c + i * g
    h_next = o * ops.tanh(c_next)
    return h_next, c_next


def lstm_seq(x, w, u, b, h0=None, c0=None) -> Tensor:
    """Run an LSTM over ``x`` of shape (B, T, d_in) as one fused op.

    Returns a tensor of shape (2, B, T, d_h): index 0 holds the hidden states,
    index 1 the cell states. Numerically identical to iterating
    :func:`lstm_cell`.
    """
    x, w, u, b = as_tensor(x), as_tensor(w), as_tensor(u), as_tensor(b)
    if x.ndim != 3:
        raise DimensionError(f"lstm_seq expects (B, T, d_in), got {x.shape}")
    d_h = _check_lstm(x.shape[-1], w, u, b)
    B, T, _ = x.shape
    parents = [x, w, u, b]
    h_init = np.zeros((B, d_h)) if h0 is None else as_tensor(h0).data
    c_init = np.zeros((B, d_h)) if c0 is None else as_tensor(c0).data
    if h_init.shape != (B, d_h) or c_init.shape != (B, d_h):
        raise DimensionError("lstm_seq: initial state must be (B, d_h)")
    if h0 is not None:
        parents.append(as_tensor(h0))
    if c0 is not None:
        parents.append(as_tensor(c0))

    xw = x.data @ w.data + b.data
    U = u.data
    H = np.empty((B, T, d_h))
    C = np.empty((B, T, d_h))
    gates = np.empty((B, T, 4 * d_h))
    h, c = h_init, c_init
    for t in range(T):
        z = xw[:, t] + h @ U
        a = np.empty_like(z)
        a[:, :2 * d_h] = _stable_sigmoid(z[:, :2 * d_h])
        a[:, 2 * d_h:3 * d_h] = np.tanh(z[:, 2 * d_h:3 * d_h])
        a[:, 3 * d_h:] = _stable_sigmoid(z[:, 3 * d_h:])
        c = a[:, d_h:2 * d_h] * c + a[:, :d_h] * a[:, 2 * d_h:3 * d_h]
        h = a[:, 3 * d_h:] * np.tanh(c)
        gates[:, t] = a
        H[:, t] = h
        C[:, t] = c

    def bw(g):
        gH, gC = g[0], g[1]
        dxw = np.empty_like(gates)
        dU = np.zeros_like(U)
        dh_next = np.zeros((B, d_h))
        dc_next = np.zeros((B, d_h))
        for t in range(T - 1, -1, -1):
            a = gates[:, t]
            i, f, gg, o = (a[:, k * d_h:(k + 1) * d_h] for k in range(4))
            c_prev = C[:, t - 1] if t > 0 else c_init
            h_prev = H[:, t - 1] if t > 0 else h_init
            tc = np.tanh(C[:, t])
            dh = gH[:, t] + dh_next
            dc = gC[:, t] + dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate(
                [
                    dc * gg * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - gg * gg),
                    dh * tc * o * (1.0 - o),
                ],
                axis=1,
            )
            dxw[:, t] = dz
            dU += h_prev.T @ dz
            dh_next = dz @ U.T
            dc_next = dc * f
        dx = dxw @ w.data.T
        flat = dxw.reshape(-1, 4 * d_h)
        dW = x.data.reshape(-1, x.shape[-1]).T @ flat
        out = [dx, dW, dU, flat.sum(axis=0)]
        if h0 is not None:
            out.append(dh_next)
        if c0 is not None:
            out.append(dc_next)
        return out

    return make_op(np.stack([H, C]), parents, bw, "lstm_seq")


def gated_scan(retain, update, candidate, u0=None) -> Tensor:
    """Gated memory recurrence over axis 1.

    ``u[t] = retain[t] * u[t-1] + update[t] * candidate[t]`` with all three
    inputs shaped (B, T, m) and ``u[-1] = u0`` (zeros by default).
    """
    r, z, cand = as_tensor(retain), as_tensor(update), as_tensor(candidate)
    if not (r.shape == z.shape == cand.shape) or r.ndim != 3:
        raise DimensionError(f"gated_scan: shapes {r.shape}, {z.shape}, {cand.shape}")
    B, T, m = r.shape
    parents = [r, z, cand]
    init = np.zeros((B, m)) if u0 is None else as_tensor(u0).data
    if init.shape != (B, m):
        raise DimensionError(f"gated_scan: initial memory must be {(B, m)}")
    if u0 is not None:
        parents.append(as_tensor(u0))
    out = np.empty((B, T, m))
    prev = init
    for t in range(T):
        prev = r.data[:, t] * prev + z.data[:, t] * cand.data[:, t]
        out[:, t] = prev

    def bw(g):
        # acc[t] is the total cotangent reaching u[t]
        acc = np.empty_like(out)
        du = np.zeros((B, m))
        for t in range(T - 1, -1, -1):
            du = du + g[:, t]
            acc[:, t] = du
            du = du * r.data[:, t]
        prev = np.concatenate([init[:, None], out[:, :-1]], axis=1)
        grads = [acc * prev, acc * cand.data, acc * z.data]
        if u0 is not None:
            grads.append(du)
        return grads

    return make_op(out, parents, bw, "gated_scan")


def layer_norm(x, gain, bias, eps: float = 1e-9) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    D = x.shape[-1]
    if gain.shape != (D,) or bias.shape != (D,):
        raise DimensionError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} for width {D}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_op(out, (x, gain, bias), bw, "layer_norm")


def dropout(t, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    t = as_tensor(t)
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return t
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    keep = (rng.random(t.shape) >= p) / (1.0 - p)
    return make_op(t.data * keep, (t,), lambda g: (g * keep,), "dropout")


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Rescale grads so their global L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping. Tensors without a grad are
    skipped. Grads are left untouched when the norm is already within bound.
    """
    if max_norm <= 0:
        raise ContractError("max_norm must be positive")
    tensors = [p for p in (params.values() if hasattr(params, "values") else params)]
    grads = [p.grad for p in tensors if p.grad is not None]
    total = float(np.sqrt(np.sum([np.sum(g * g) for g in grads]))) if grads else 0.0
    if total > max_norm:
        factor = max_norm / total
        for p in tensors:
            if p.grad is not None:
                p.grad = p.grad * factor
    return total
