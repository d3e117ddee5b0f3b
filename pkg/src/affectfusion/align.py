"""Resampling of per-frame feature streams onto a common timeline."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ndcore import ContractError

__all__ = ["FeatureSequence", "interp_linear", "pool_align", "align_views"]


@dataclass
class FeatureSequence:
    """One modality's T x d feature matrix with per-frame validity."""

    features: np.ndarray
    frame_period: float
    valid: np.ndarray | None = None
    modality_tag: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        if self.features.ndim != 2:
            raise ValueError(f"features must be T x d, got shape {self.features.shape}")
        T, d = self.features.shape
        if T < 1 or d < 1:
            raise ValueError(f"features must have T >= 1 and d >= 1, got {self.features.shape}")
        if self.valid is None:
            self.valid = np.ones(T, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != (T,):
            raise ValueError(f"mask length {self.valid.shape} != T = {T}")
        if not (np.isfinite(self.frame_period) and self.frame_period > 0):
            raise ValueError(f"frame_period must be positive, got {self.frame_period}")

    @property
    def T(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def duration(self) -> float:
        return self.T * self.frame_period


def _retimed(src: FeatureSequence, T_tgt: int) -> float:
    return src.duration / T_tgt


def interp_linear(src: FeatureSequence, T_tgt: int) -> FeatureSequence:
    """Linearly interpolate every column at ``u_j = j (T_src - 1) / (T_tgt - 1)``.

    Endpoints map onto endpoints. A target frame is valid when the source
    frames it reads from are valid; invalid target frames carry zeros.
    """
    if T_tgt < 1:
        raise ContractError(f"target length must be >= 1, got {T_tgt}")
    T_src = src.T
    if T_tgt == T_src:
        return replace(src, features=src.features.copy(), valid=src.valid.copy())
    period = _retimed(src, T_tgt)
    if T_src == 1:
        feats = np.repeat(src.features, T_tgt, axis=0)
        return replace(src, features=feats, valid=np.repeat(src.valid, T_tgt), frame_period=period)
    if T_tgt == 1:
        return replace(src, features=src.features[:1].copy(), valid=src.valid[:1].copy(),
                       frame_period=period)

    u = np.arange(T_tgt) * (T_src - 1) / (T_tgt - 1)
    lo = np.minimum(np.floor(u).astype(np.int64), T_src - 1)
    hi = np.minimum(lo + 1, T_src - 1)
    frac = (u - lo)[:, None]
    a, b = src.features[lo], src.features[hi]
    # a + f(b - a) keeps constant columns exact; the clip rules out rounding overshoot
    out = np.clip(a + frac * (b - a), np.minimum(a, b), np.maximum(a, b))
    valid = src.valid[lo] & np.where(frac[:, 0] > 0, src.valid[hi], True)
    out[~valid] = 0.0
    return replace(src, features=out, valid=valid, frame_period=period)


def pool_align(src: FeatureSequence, T_tgt: int) -> FeatureSequence:
    """Average valid source frames over the partition
    ``[floor(j T_src / T_tgt), floor((j + 1) T_src / T_tgt))``."""
    T_src = src.T
    if T_tgt < 1:
        raise ContractError(f"target length must be >= 1, got {T_tgt}")
    if T_tgt > T_src:
        raise ContractError(
            f"pool_align only downsamples ({T_src} -> {T_tgt}); use interp_linear to upsample"
        )
    if T_tgt == T_src:
        return replace(src, features=src.features.copy(), valid=src.valid.copy())
    edges = (np.arange(T_tgt + 1) * T_src) // T_tgt
    counts = np.add.reduceat(src.valid.astype(np.int64), edges[:-1])
    valid = counts > 0
    out = np.zeros((T_tgt, src.d))
    for j in np.flatnonzero(valid):
        s, e = edges[j], edges[j + 1]
        block = src.features[s:e][src.valid[s:e]]
        # summation rounding can push the mean of equal values off that value
        out[j] = np.clip(block.mean(axis=0), block.min(axis=0), block.max(axis=0))
    return replace(src, features=out, valid=valid, frame_period=_retimed(src, T_tgt))


def align_views(views: list[FeatureSequence], anchor: int = 0, method: str = "interp"):
    """Resample every view to the anchor's length.

    Shorter views are always interpolated; longer ones use ``method``
    ("interp" or "pool"). Returns ``(aligned_views, joint_valid)``.
    """
    if not views:
        raise ContractError("align_views needs at least one view")
    if not 0 <= anchor < len(views):
        raise ContractError(f"anchor index {anchor} out of range for {len(views)} views")
    if method not in ("interp", "pool"):
        raise ContractError(f"unknown alignment method {method!r}")
    T = views[anchor].T
    aligned = []
    for v in views:
        if v.T > T and method == "pool":
            aligned.append(pool_align(v, T))
        else:
            aligned.append(interp_linear(v, T))
    joint = np.logical_and.reduce([v.valid for v in aligned])
    return aligned, joint
