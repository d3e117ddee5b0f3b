"""Agreement and classification objectives.

Evaluation helpers (:func:`pcc`, :func:`ccc`, :func:`macro_f1_eval`,
:func:`va_eval`) work on plain arrays. Training losses (:func:`ccc_loss`,
:func:`va_loss`, :func:`f1_loss`) take a prediction :class:`Tensor` and stay
inside the graph.

All statistics are population statistics (divide by N).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndcore as nd
from .ndcore import DegenerateInputError, Tensor

SOFT_F1_EPS = 1e-8
VA_KEYS = ("ccc_valence", "ccc_arousal")


@dataclass
class VaTarget:
    valence: np.ndarray
    arousal: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.valence = np.asarray(self.valence, dtype=np.float64)
        self.arousal = np.asarray(self.arousal, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not (self.valence.shape == self.arousal.shape == self.valid.shape):
            raise ValueError("valence, arousal and valid must have equal shapes")
        v = self.valid
        if np.any(np.abs(self.valence[v]) > 1) or np.any(np.abs(self.arousal[v]) > 1):
            raise ValueError("valid VA values must lie in [-1, 1]")

    def __len__(self):
        return len(self.valid)


@dataclass
class ExprTarget:
    labels: np.ndarray
    valid: np.ndarray
    num_classes: int = 8

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.labels.shape != self.valid.shape:
            raise ValueError("labels and valid must have equal shapes")
        lab = self.labels[self.valid]
        if lab.size and (lab.min() < 0 or lab.max() >= self.num_classes):
            raise ValueError(f"valid class ids must lie in 0..{self.num_classes - 1}")

    def __len__(self):
        return len(self.valid)


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray


@dataclass
class EvalReport:
    """Per-target scores plus the challenge measure ``P``."""

    scores: dict[str, float] = field(default_factory=dict)
    P: float = 0.0

    def to_text(self) -> str:
        lines = [f"{k}={v:.6f}" for k, v in self.scores.items()]
        lines.append(f"P={self.P:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "EvalReport":
        scores = {}
        P = None
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key == "P":
                P = float(value)
            else:
                scores[key] = float(value)
        if P is None:
            raise ValueError(f"{path}: report has no P entry")
        return cls(scores, P)


# ---------------------------------------------------------------- array metrics

def _paired(pred, target, valid):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ValueError(f"prediction length {pred.size} != target length {target.size}")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool).reshape(-1)
        pred, target = pred[valid], target[valid]
    if pred.size < 2:
        raise DegenerateInputError(f"need at least 2 valid points, got {pred.size}")
    return pred, target


def _centered(x: np.ndarray) -> tuple[float, np.ndarray]:
    # an exactly constant vector has zero deviations, whatever np.mean rounds to
    m = x.mean()
    return (x[0], np.zeros_like(x)) if np.all(x == x[0]) else (m, x - m)


def pcc(pred, target, valid=None) -> float:
    """Pearson correlation; 0 when either side is constant."""
    p, t = _paired(pred, target, valid)
    (_, dp), (_, dt) = _centered(p), _centered(t)
    sp, st = np.sqrt(np.mean(dp * dp)), np.sqrt(np.mean(dt * dt))
    if sp == 0 or st == 0:
        return 0.0
    # rounding can land a hair outside [-1, 1] for exactly proportional inputs
    return float(np.clip(np.mean(dp * dt) / (sp * st), -1.0, 1.0))


def ccc(pred, target, valid=None) -> float:
    """Concordance correlation, computed as 2 cov / (var_p + var_t + (mu_p - mu_t)^2).

    Returns 0 if the denominator vanishes (both constant with equal means).
    """
    p, t = _paired(pred, target, valid)
    (mp, dp), (mt, dt) = _centered(p), _centered(t)
    den = np.mean(dp * dp) + np.mean(dt * dt) + (mp - mt) ** 2
    if den == 0:
        return 0.0
    return float(np.clip(2.0 * np.mean(dp * dt) / den, -1.0, 1.0))


def va_eval(pred_v, pred_a, target: VaTarget) -> EvalReport:
    cv = ccc(pred_v, target.valence, target.valid)
    ca = ccc(pred_a, target.arousal, target.valid)
    return EvalReport({"ccc_valence": cv, "ccc_arousal": ca}, (ca + cv) / 2.0)


def hard_confusion(pred_labels, labels, num_classes: int) -> ConfusionCounts:
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.arange(num_classes)
    P = pred_labels[:, None] == classes
    Y = labels[:, None] == classes
    return ConfusionCounts(
        tp=(P & Y).sum(0).astype(np.float64),
        fp=(P & ~Y).sum(0).astype(np.float64),
        fn=(~P & Y).sum(0).astype(np.float64),
    )


def macro_f1_eval(pred_labels, target: ExprTarget) -> EvalReport:
    """Unweighted mean of per-class F1 over all ``num_classes`` classes.

    A class with neither support nor predictions scores 0.
    """
    pred_labels = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    if pred_labels.shape != target.labels.shape:
        raise ValueError("prediction and target lengths differ")
    v = target.valid
    if not v.any():
        raise DegenerateInputError("no valid frames to evaluate")
    C = target.num_classes
    cc = hard_confusion(pred_labels[v], target.labels[v], C)
    den = 2 * cc.tp + cc.fp + cc.fn
    f1 = np.divide(2 * cc.tp, den, out=np.zeros(C), where=den > 0)
    scores = {f"f1_class_{c}": float(f1[c]) for c in range(C)}
    return EvalReport(scores, float(f1.sum() / C))


# ---------------------------------------------------------------- smoothing

def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None].clip(0, num_classes - 1), 1.0, axis=-1)
    return out


def label_smooth(onehot, eps: float) -> np.ndarray:
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"smoothing eps must be in [0, 1), got {eps}")
    onehot = np.asarray(onehot, dtype=np.float64)
    if eps == 0.0:
        return onehot.copy()
    return (1.0 - eps) * onehot + eps / onehot.shape[-1]


# ---------------------------------------------------------------- graph losses

def _valid_rows(x: Tensor, valid) -> Tensor:
    if valid is None:
        return x
    idx = np.flatnonzero(np.asarray(valid, dtype=bool).reshape(-1))
    return x[idx]


def ccc_tensor(pred: Tensor, target) -> Tensor:
    """CCC of a 1-D prediction tensor against a constant target, in the graph."""
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != t.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {t.shape}")
    if t.size < 2:
        return nd.scale(nd.sum(pred), 0.0) if t.size else Tensor(0.0)
    mt = t.mean()
    dt = t - mt
    vt = float(np.mean(dt * dt))
    mp = nd.mean(pred)
    dp = pred - mp
    vp = nd.mean(nd.square(dp))
    cov = nd.mean(dp * Tensor(dt))
    den = vp + nd.square(mp - mt) + vt
    if den.item() == 0:
        return nd.scale(nd.sum(pred), 0.0)
    return nd.scale(cov, 2.0) / den


def ccc_loss(pred: Tensor, target, valid=None) -> Tensor:
    """1 - CCC over the valid entries."""
    pred = pred.reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if valid is not None:
        valid = np.asarray(valid, dtype=bool).reshape(-1)
        target = target[valid]
    return 1.0 - ccc_tensor(_valid_rows(pred, valid), target)


def va_loss(pred_v: Tensor, pred_a: Tensor, target: VaTarget, w: float = 0.5) -> Tensor:
    """w * L_ccc(valence) + (1 - w) * L_ccc(arousal), invalid frames dropped."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"loss weight must be in [0, 1], got {w}")
    lv = ccc_loss(pred_v, target.valence, target.valid)
    la = ccc_loss(pred_a, target.arousal, target.valid)
    return nd.scale(lv, w) + nd.scale(la, 1.0 - w)


def soft_confusion(pred_probs, onehot) -> ConfusionCounts:
    """Soft TP/FP/FN per class with FP and FN as printed in the F1-loss formulas:
    FP = sum (1 - p) * y, FN = sum p * (1 - y)."""
    P = pred_probs.data if isinstance(pred_probs, Tensor) else np.asarray(pred_probs, dtype=np.float64)
    Y = np.asarray(onehot, dtype=np.float64)
    if P.shape != Y.shape or P.ndim != 2:
        raise ValueError(f"pred {P.shape} and one-hot {Y.shape} must both be N x C")
    return ConfusionCounts(
        tp=(P * Y).sum(axis=0),
        fp=((1.0 - P) * Y).sum(axis=0),
        fn=(P * (1.0 - Y)).sum(axis=0),
    )


def soft_f1_per_class(pred_probs: Tensor, onehot, convention: str = "printed",
                      eps: float = SOFT_F1_EPS) -> Tensor:
    """Per-class soft F1 = 2TP / (2TP + FP + FN + eps), shape (C,).

    ``convention="conventional"`` swaps the FP/FN definitions
    (FP = sum p (1-y), FN = sum (1-p) y); the value is identical.
    """
    Y = np.asarray(onehot, dtype=np.float64)
    if pred_probs.shape != Y.shape or Y.ndim != 2:
        raise ValueError(f"pred {pred_probs.shape} and one-hot {Y.shape} must both be N x C")
    C = Y.shape[1]
    if Y.shape[0] == 0:
        return Tensor(np.zeros(C))
    Yt = Tensor(Y)
    tp = nd.sum(pred_probs * Yt, axis=0)
    miss = nd.sum((1.0 - pred_probs) * Yt, axis=0)
    extra = nd.sum(pred_probs * Tensor(1.0 - Y), axis=0)
    if convention == "printed":
        fp, fn = miss, extra
    elif convention == "conventional":
        fp, fn = extra, miss
    else:
        raise ValueError(f"unknown FP/FN convention {convention!r}")
    two_tp = nd.scale(tp, 2.0)
    return two_tp / (two_tp + fp + fn + eps)


def f1_loss(pred_probs: Tensor, onehot, valid=None, eps: float = SOFT_F1_EPS) -> Tensor:
    """1 - mean over classes of the soft per-class F1."""
    onehot = np.asarray(onehot, dtype=np.float64)
    C = onehot.shape[-1]
    probs = pred_probs.reshape(-1, C)
    Y = onehot.reshape(-1, C)
    if valid is not None:
        keep = np.asarray(valid, dtype=bool).reshape(-1)
        probs = _valid_rows(probs, keep)
        Y = Y[keep]
    if Y.shape[0] == 0:
        return 1.0 + nd.scale(nd.sum(pred_probs), 0.0)
    return 1.0 - nd.mean(soft_f1_per_class(probs, Y, eps=eps))


def masked_mse(pred: Tensor, target, valid) -> Tensor:
    """Mean squared error over valid frames of (B, T, d) tensors."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} vs target {target.shape}")
    d = target.shape[-1]
    keep = np.asarray(valid, dtype=bool).reshape(-1)
    if not keep.any():
        return nd.scale(nd.sum(pred), 0.0)
    p = _valid_rows(pred.reshape(-1, d), keep)
    return nd.mean(nd.square(p - Tensor(target.reshape(-1, d)[keep])))
