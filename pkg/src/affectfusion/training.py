"""Mini-batch training, full-sequence evaluation and run artifacts."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ndcore as nd
from .config import RunConfig
from .data.dataset import Sequence, collate, load_sequences, split, windows_from_sequences
from .errors import ConfigError, NumericalAbort
from .exprnet import ExprConfig, expr_forward, init_expr
from .fusion import attention_forward, init_params, mctn_forward, mctn_loss, mfn_forward
from .fusion.checkpoint import save_checkpoint
from .ndcore import ModelParams, RngState
from .objectives import (
    EvalReport, ExprTarget, VaTarget, f1_loss, label_smooth, macro_f1_eval, one_hot, va_eval,
    va_loss,
)

log = logging.getLogger(__name__)

METRIC_COLUMN = {"va": "val_ccc", "expr": "val_f1"}


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# ---------------------------------------------------------------- model glue

def expr_config(cfg: RunConfig, feature_dim: int) -> ExprConfig:
    return ExprConfig(
        feature_dim=feature_dim, seq_len=cfg.seq_len, num_classes=cfg.num_classes,
        encoder_layers=cfg.encoder_layers, num_heads=cfg.num_heads, head_dim=cfg.head_dim,
        ffn_dim=cfg.ffn_dim, dropout=cfg.dropout, positional=cfg.positional,
        strict_mask=cfg.strict_mask,
    )


def build_params(cfg: RunConfig, view_dims: dict[str, int]) -> ModelParams:
    rng = RngState(cfg.seed).stream("init")
    if cfg.model == "expr":
        return init_expr(expr_config(cfg, view_dims[cfg.views[0]]), rng)
    dims = {"views": view_dims, "hidden": cfg.hidden, "memory": cfg.memory_dim or cfg.hidden,
            "source": cfg.source, "target": cfg.target}
    return init_params(cfg.model, dims, rng)


def view_dims_of(params: ModelParams, cfg: RunConfig) -> dict[str, int]:
    if cfg.model == "expr":
        return {cfg.views[0]: params["head.w"].shape[0]}
    if cfg.model == "attention":
        return {t: params[f"enc.{t}.w"].shape[0] for t in cfg.views}
    if cfg.model == "mfn":
        return {t: params[f"lstm.{t}.w"].shape[0] for t in cfg.views}
    return {cfg.source: params["enc.w"].shape[0], cfg.target: params["dec.out.w"].shape[1]}


def forward(cfg: RunConfig, params: ModelParams, batch, rng=None, training=False):
    """Model output for a batch: (B, T, 2) VA predictions or (B, T, C) logits."""
    if cfg.model == "attention":
        return attention_forward(batch, params, rng, training, cfg.dropout)
    if cfg.model == "mfn":
        return mfn_forward(batch, params, rng, training, cfg.dropout)
    if cfg.model == "mctn":
        return mctn_forward(batch, params, cfg.source, cfg.target, rng, training, cfg.dropout)
    ecfg = expr_config(cfg, batch.views[0].shape[-1])
    return expr_forward(batch.views[0], params, ecfg, rng, training, batch.valid)


def batch_loss(cfg: RunConfig, params: ModelParams, batch, target, rng=None, training=False):
    out = forward(cfg, params, batch, rng, training)
    if cfg.model == "mctn":
        return mctn_loss(out, batch, target, cfg.loss_weight, cfg.lambda_trans, cfg.lambda_cycle,
                         cfg.source, cfg.target)
    if cfg.task == "va":
        return va_loss(out[..., 0], out[..., 1], target, cfg.loss_weight)
    y = label_smooth(one_hot(target.labels, cfg.num_classes), cfg.label_smoothing)
    if cfg.loss == "ce":
        keep = np.flatnonzero(target.valid)
        logp = nd.log_softmax(out.reshape(-1, cfg.num_classes), axis=-1)[keep]
        return nd.scale(nd.mean(nd.sum(logp * nd.Tensor(y[keep]), axis=-1)), -1.0)
    probs = nd.softmax(out, axis=-1)
    return f1_loss(probs, y, target.valid)


def predict_sequences(cfg: RunConfig, params: ModelParams, seqs: list[Sequence]):
    """Frozen-model outputs per sequence, windowed at stride = seq_len and
    stitched in order with padding dropped. Returns a list of (T, k) arrays."""
    ds = windows_from_sequences(seqs, cfg.seq_len, cfg.seq_len, drop_empty=False)
    outs: dict[str, list] = {s.source: [] for s in seqs}
    with nd.no_grad():
        for i in range(0, len(ds), cfg.batch_size):
            chunk = ds.windows[i:i + cfg.batch_size]
            batch, _ = collate(chunk, ds.view_tags)
            out = forward(cfg, params, batch)
            data = out.pred.data if cfg.model == "mctn" else out.data
            for w, row in zip(chunk, data):
                outs[w.source].append((w.offset, row[:w.length]))
    return [np.concatenate([r for _, r in sorted(outs[s.source], key=lambda x: x[0])])
            for s in seqs]


def evaluate(cfg: RunConfig, params: ModelParams, seqs: list[Sequence]) -> EvalReport:
    preds = predict_sequences(cfg, params, seqs)
    valid = np.concatenate([s.valid & s.target.valid for s in seqs])
    if cfg.task == "va":
        pv = np.concatenate([p[:, 0] for p in preds])
        pa = np.concatenate([p[:, 1] for p in preds])
        tgt = VaTarget(np.concatenate([s.target.valence for s in seqs]),
                       np.concatenate([s.target.arousal for s in seqs]), valid)
        return va_eval(pv, pa, tgt)
    labels = np.concatenate([p.argmax(axis=-1) for p in preds])
    tgt = ExprTarget(np.concatenate([s.target.labels for s in seqs]), valid, cfg.num_classes)
    return macro_f1_eval(labels, tgt)


# ---------------------------------------------------------------- training

@dataclass
class RunArtifacts:
    out_dir: Path
    config_path: Path
    metrics_path: Path
    final_checkpoint: Path
    best_checkpoint: Path
    report_path: Path
    report: EvalReport
    history: list[dict]


def _fmt(x: float) -> str:
    return repr(float(x))


def load_run_data(cfg: RunConfig):
    seqs = load_sequences(cfg.data_dir, cfg.views, cfg.task, cfg.align_method, cfg.anchor,
                          cfg.num_classes)
    test_frac = cfg.test_fraction
    train, val, test = split(seqs, (1.0 - cfg.val_fraction - test_frac, cfg.val_fraction, test_frac),
                             cfg.seed)
    if not train:
        raise ConfigError("split left no training sequences")
    return train, val, test


def train(cfg: RunConfig, data=None) -> RunArtifacts:
    """Run one training job and write its artifacts under ``cfg.out_dir``.

    ``data`` optionally supplies pre-loaded (train, val, test) sequences.
    Validation falls back to the training sequences when no validation split
    is configured.
    """
    out_dir = Path(cfg.out_dir)
    train_seqs, val_seqs, _ = data if data is not None else load_run_data(cfg)
    eval_seqs = val_seqs or train_seqs
    view_dims = {v.modality_tag: v.d for v in train_seqs[0].views}
    params = build_params(cfg, view_dims)
    opt = Adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rs = RngState(cfg.seed)
    shuffle_rng, drop_rng = rs.stream("shuffle"), rs.stream("dropout")
    ds = windows_from_sequences(train_seqs, cfg.seq_len, cfg.stride)
    if not len(ds):
        raise ConfigError("training data has no valid frames")

    out_dir.mkdir(parents=True, exist_ok=True)
    config_path = out_dir / "config.json"
    config_path.write_text(cfg.to_json())
    metric = METRIC_COLUMN[cfg.task]
    history = []

    def batches(order):
        for i in range(0, len(order), cfg.batch_size):
            yield collate([ds.windows[j] for j in order[i:i + cfg.batch_size]], ds.view_tags)

    # epoch 0: untrained model, loss measured in eval mode
    with nd.no_grad():
        losses = [batch_loss(cfg, params, b, t).item() for b, t in batches(np.arange(len(ds)))]
    report = evaluate(cfg, params, eval_seqs)
    history.append({"epoch": 0, "train_loss": float(np.mean(losses)), metric: report.P})
    best_P, best_state, stale = report.P, params.state(), 0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(ds))
        losses = []
        for k, (batch, target) in enumerate(batches(order)):
            params.zero_grad()
            loss = batch_loss(cfg, params, batch, target, drop_rng, training=True)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalAbort(epoch, k, float("nan"), value)
            nd.backward(loss)
            norm = nd.clip_grad_norm(params, cfg.grad_clip)
            if not math.isfinite(norm):
                raise NumericalAbort(epoch, k, norm, value)
            opt.step()
            losses.append(value)
        report = evaluate(cfg, params, eval_seqs)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), metric: report.P})
        log.info("epoch %d loss %.6f %s %.6f", epoch, history[-1]["train_loss"], metric, report.P)
        if report.P > best_P:
            best_P, best_state, stale = report.P, params.state(), 0
            if cfg.stop_at and report.P >= cfg.stop_at:
                log.info("%s reached %.6f at epoch %d", metric, report.P, epoch)
                break
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                log.info("early stop after %d epochs without improvement", stale)
                break

    metrics_path = out_dir / "metrics.csv"
    lines = [f"epoch,train_loss,{metric}"]
    lines += [f"{h['epoch']},{_fmt(h['train_loss'])},{_fmt(h[metric])}" for h in history]
    metrics_path.write_text("\n".join(lines) + "\n")
    final_ck = out_dir / "final.sfck"
    save_checkpoint(final_ck, params)
    best_ck = out_dir / "best.sfck"
    save_checkpoint(best_ck, ModelParams(params.kind, best_state))
    report_path = out_dir / "report.txt"
    report.write(report_path)
    return RunArtifacts(out_dir, config_path, metrics_path, final_ck, best_ck, report_path,
                        report, history)
