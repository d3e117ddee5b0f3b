"""Sequence directories, fixed-length windows and file-level splits.

A data directory holds, per sequence id ``sid``::

    sid.<view tag>.mmf      one MMF1 file per view (e.g. sid.visual.mmf)
    sid.va.csv | sid.expr.csv
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence as Seq

import numpy as np

from ..align import FeatureSequence, align_views
from ..errors import FormatError
from ..fusion.common import MultiViewBatch
from ..ndcore import ContractError, RngState
from ..objectives import ExprTarget, VaTarget
from .formats import load_features, load_labels_expr, load_labels_va

LABEL_SUFFIX = {"va": ".va.csv", "expr": ".expr.csv"}


@dataclass
class Sequence:
    """One recording: aligned views, their joint mask, and (optionally) labels."""

    source: str
    views: list[FeatureSequence]
    valid: np.ndarray
    target: VaTarget | ExprTarget | None = None

    @property
    def T(self) -> int:
        return self.views[0].T

    @property
    def view_tags(self) -> list[str]:
        return [v.modality_tag for v in self.views]


@dataclass
class Window:
    views: list[np.ndarray]          # each seq_len x d
    valid: np.ndarray                # seq_len, joint view + label validity, padding invalid
    target: VaTarget | ExprTarget | None
    source: str
    offset: int
    length: int                      # unpadded frames in this window


@dataclass
class WindowedDataset:
    windows: list[Window] = field(default_factory=list)
    view_tags: list[str] = field(default_factory=list)
    seq_len: int = 64

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    @property
    def sources(self) -> list[str]:
        return list(dict.fromkeys(w.source for w in self.windows))

    def subset(self, sources) -> "WindowedDataset":
        keep = set(sources)
        return WindowedDataset([w for w in self.windows if w.source in keep], self.view_tags, self.seq_len)


def list_sequences(data_dir, task: str) -> list[str]:
    """Sequence ids with a label file for ``task``, sorted."""
    suffix = LABEL_SUFFIX[task]
    return sorted(p.name[: -len(suffix)] for p in Path(data_dir).glob(f"*{suffix}"))


def list_feature_sequences(data_dir, anchor: str) -> list[str]:
    return sorted(p.name[: -len(f".{anchor}.mmf")] for p in Path(data_dir).glob(f"*.{anchor}.mmf"))


def load_sequence(data_dir, sid: str, view_tags: Seq[str], task: str | None,
                  method: str = "interp", anchor: str | None = None,
                  num_classes: int = 8) -> Sequence:
    """Load and align one sequence's views to the anchor view; attach labels
    (resized to the anchor length, extra frames invalid) when ``task`` is set."""
    data_dir = Path(data_dir)
    raw = []
    for tag in view_tags:
        seq = load_features(data_dir / f"{sid}.{tag}.mmf")
        seq.modality_tag = tag
        raw.append(seq)
    anchor = anchor or view_tags[0]
    aligned, joint = align_views(raw, list(view_tags).index(anchor), method)
    target = None
    if task == "va":
        target = load_labels_va(data_dir / f"{sid}.va.csv", length=aligned[0].T)
    elif task == "expr":
        target = load_labels_expr(data_dir / f"{sid}.expr.csv", length=aligned[0].T,
                                  num_classes=num_classes)
    elif task is not None:
        raise ContractError(f"unknown task {task!r}")
    return Sequence(sid, aligned, joint, target)


def load_sequences(data_dir, view_tags, task, method="interp", anchor=None, num_classes=8,
                   ids=None) -> list[Sequence]:
    ids = list_sequences(data_dir, task) if ids is None else ids
    if not ids:
        raise FormatError(f"no {task} sequences found", None, data_dir)
    return [load_sequence(data_dir, sid, view_tags, task, method, anchor, num_classes) for sid in ids]


def _slice_target(target, start: int, stop: int, pad: int):
    if target is None:
        return None
    if isinstance(target, VaTarget):
        return VaTarget(
            np.pad(target.valence[start:stop], (0, pad)),
            np.pad(target.arousal[start:stop], (0, pad)),
            np.pad(target.valid[start:stop], (0, pad)),
        )
    return ExprTarget(
        np.pad(target.labels[start:stop], (0, pad)),
        np.pad(target.valid[start:stop], (0, pad)),
        target.num_classes,
    )


def window_starts(T: int, seq_len: int, stride: int) -> list[int]:
    """Starts at multiples of ``stride`` until a window reaches the end."""
    starts = [0]
    while starts[-1] + seq_len < T:
        starts.append(starts[-1] + stride)
    return starts


def make_windows(views: Seq[FeatureSequence], target, seq_len: int, stride: int,
                 source: str = "", valid=None, drop_empty: bool = True) -> WindowedDataset:
    """Cut aligned views (and labels) into ``seq_len`` windows at ``stride``.

    The last window is zero-padded, padded frames are invalid. Windows without
    any valid frame are dropped unless ``drop_empty`` is false.
    """
    if not views:
        raise ContractError("make_windows needs at least one view")
    if seq_len < 1 or stride < 1:
        raise ContractError("seq_len and stride must be >= 1")
    if stride > seq_len:
        raise ContractError("stride larger than seq_len would skip frames")
    T = views[0].T
    if any(v.T != T for v in views):
        raise ContractError("views must be aligned to a common length first")
    joint = np.logical_and.reduce([v.valid for v in views])
    if valid is not None:
        joint = joint & np.asarray(valid, dtype=bool)
    if target is not None:
        if len(target) != T:
            raise ContractError(f"target length {len(target)} != view length {T}")
        joint = joint & target.valid
    out = WindowedDataset([], [v.modality_tag for v in views], seq_len)
    for s in window_starts(T, seq_len, stride):
        e = min(s + seq_len, T)
        pad = seq_len - (e - s)
        mask = np.pad(joint[s:e], (0, pad))
        if drop_empty and not mask.any():
            continue
        feats = [np.pad(v.features[s:e], ((0, pad), (0, 0))) for v in views]
        tgt = _slice_target(target, s, e, pad)
        if tgt is not None:
            tgt.valid = mask.copy()
        out.windows.append(Window(feats, mask, tgt, source, s, e - s))
    return out


def windows_from_sequences(seqs: Seq[Sequence], seq_len: int, stride: int,
                           drop_empty: bool = True) -> WindowedDataset:
    if not seqs:
        return WindowedDataset([], [], seq_len)
    out = WindowedDataset([], seqs[0].view_tags, seq_len)
    for s in seqs:
        part = make_windows(s.views, s.target, seq_len, stride, s.source, s.valid, drop_empty)
        out.windows.extend(part.windows)
    return out


def collate(windows: Seq[Window], view_tags: Seq[str]):
    """Stack windows into a :class:`MultiViewBatch` plus a flat (B*T) target."""
    views = [np.stack([w.views[i] for w in windows]) for i in range(len(view_tags))]
    valid = np.stack([w.valid for w in windows])
    batch = MultiViewBatch(views, list(view_tags), valid)
    first = windows[0].target
    if first is None:
        return batch, None
    if isinstance(first, VaTarget):
        target = VaTarget(
            np.concatenate([w.target.valence for w in windows]),
            np.concatenate([w.target.arousal for w in windows]),
            valid.reshape(-1),
        )
    else:
        target = ExprTarget(
            np.concatenate([w.target.labels for w in windows]),
            valid.reshape(-1),
            first.num_classes,
        )
    return batch, target


def split(dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Partition by source file into (train, val, test).

    ``dataset`` is a :class:`WindowedDataset` or a list of objects with a
    ``source`` attribute. Counts are rounded from the fractions; the first
    split absorbs rounding remainder.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr < 0) or not math.isclose(fr.sum(), 1.0, abs_tol=1e-9):
        raise ContractError(f"fractions must be three nonnegative numbers summing to 1, got {fractions}")
    items = dataset.windows if isinstance(dataset, WindowedDataset) else list(dataset)
    sources = sorted(dict.fromkeys(x.source for x in items))
    order = RngState(seed).stream("split").permutation(len(sources))
    n = len(sources)
    n_val = int(round(fr[1] * n))
    n_test = int(round(fr[2] * n))
    if n_val + n_test > n:
        n_test = n - n_val
    n_train = n - n_val - n_test
    shuffled = [sources[i] for i in order]
    groups = (shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:])
    if isinstance(dataset, WindowedDataset):
        return tuple(dataset.subset(g) for g in groups)
    return tuple([x for x in items if x.source in set(g)] for g in groups)
