"""``MMF1`` feature files and CSV label files.

MMF1 layout (little-endian)::

    b"MMF1"  u32 version  u32 T  u32 d  f32 frame_period  u8 tag_len  tag (utf-8)
    T * d f32, row-major

A frame whose row holds any non-finite value is read back as invalid (zeros
with ``valid = False``); writers emit NaN rows for invalid frames.

Label CSVs carry a header line. VA files are ``frame,valence,arousal`` with
-5 marking an invalid frame; Expr files are ``frame,class_id`` with -1.
Frames missing from a label file are invalid.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from pathlib import Path

import numpy as np

from ..align import FeatureSequence
from ..errors import FormatError
from ..objectives import ExprTarget, VaTarget

MAGIC = b"MMF1"
VERSION = 1
_HEADER = struct.Struct("<IIIf")
VA_SENTINEL = -5.0
EXPR_SENTINEL = -1
VA_HEADER = ["frame", "valence", "arousal"]
EXPR_HEADER = ["frame", "class_id"]


def features_to_bytes(seq: FeatureSequence) -> bytes:
    tag = seq.modality_tag.encode()
    if len(tag) > 255:
        raise ValueError("modality tag longer than 255 bytes")
    if seq.T >= 2**32 or seq.d >= 2**32:
        raise ValueError("feature matrix too large for the u32 header")
    payload = seq.features.astype("<f4")
    payload[~seq.valid] = np.nan
    head = MAGIC + _HEADER.pack(VERSION, seq.T, seq.d, seq.frame_period)
    return head + bytes([len(tag)]) + tag + payload.tobytes()


def features_from_bytes(buf: bytes, path=None) -> FeatureSequence:
    n = len(buf)
    if n < 4:
        raise FormatError("truncated before magic", n, path)
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0, path)
    if n < 4 + _HEADER.size + 1:
        raise FormatError("truncated header", n, path)
    version, T, d, period = _HEADER.unpack_from(buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4, path)
    if T < 1:
        raise FormatError(f"T must be >= 1, got {T}", 8, path)
    if d < 1:
        raise FormatError(f"d must be >= 1, got {d}", 12, path)
    if not (math.isfinite(period) and period > 0):
        raise FormatError(f"frame period must be positive and finite, got {period}", 16, path)
    tag_off = 4 + _HEADER.size
    tlen = buf[tag_off]
    start = tag_off + 1 + tlen
    if n < start:
        raise FormatError(f"truncated modality tag (needs {tlen} bytes)", n, path)
    try:
        tag = bytes(buf[tag_off + 1:start]).decode()
    except UnicodeDecodeError:
        raise FormatError("modality tag is not valid utf-8", tag_off + 1, path) from None
    expected = T * d * 4
    got = n - start
    if got != expected:
        kind = "truncated payload" if got < expected else "trailing bytes after payload"
        raise FormatError(
            f"{kind}: header T={T}, d={d} needs {expected} payload bytes, found {got}",
            start + min(got, expected), path,
        )
    raw = np.frombuffer(buf, dtype="<f4", count=T * d, offset=start).reshape(T, d)
    feats = raw.astype(np.float64)
    valid = np.isfinite(feats).all(axis=1)
    feats[~valid] = 0.0
    return FeatureSequence(feats, float(period), valid, tag)


def write_features(path, seq: FeatureSequence) -> None:
    Path(path).write_bytes(features_to_bytes(seq))


def load_features(path) -> FeatureSequence:
    return features_from_bytes(Path(path).read_bytes(), path)


# ---------------------------------------------------------------- labels

def _rows(path, header):
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise FormatError("empty label file", 0, path) from None
    if [h.strip() for h in first] != header:
        raise FormatError(f"header {first} != expected {header}", 0, path)
    prev = -1
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"row {lineno}: expected {len(header)} fields, got {len(row)}", None, path)
        try:
            frame = int(row[0])
            values = [float(c) for c in row[1:]]
        except ValueError:
            raise FormatError(f"row {lineno}: unparsable values {row}", None, path) from None
        if frame <= prev:
            raise FormatError(f"row {lineno}: frame {frame} not strictly increasing", None, path)
        if not all(math.isfinite(v) for v in values):
            raise FormatError(f"row {lineno}: non-finite value {row}", None, path)
        prev = frame
        yield lineno, frame, values


def load_labels_va(path, length: int | None = None) -> VaTarget:
    entries = []
    for lineno, frame, (v, a) in _rows(path, VA_HEADER):
        invalid = v == VA_SENTINEL or a == VA_SENTINEL
        if not invalid and (abs(v) > 1 or abs(a) > 1):
            raise FormatError(f"row {lineno}: valence/arousal ({v}, {a}) outside [-1, 1]", None, path)
        entries.append((frame, v, a, not invalid))
    T = length if length is not None else (entries[-1][0] + 1 if entries else 0)
    val, aro, ok = np.zeros(T), np.zeros(T), np.zeros(T, dtype=bool)
    for frame, v, a, good in entries:
        if frame < T and good:
            val[frame], aro[frame], ok[frame] = v, a, True
    return VaTarget(val, aro, ok)


def load_labels_expr(path, length: int | None = None, num_classes: int = 8) -> ExprTarget:
    entries = []
    for lineno, frame, (c,) in _rows(path, EXPR_HEADER):
        if c != int(c):
            raise FormatError(f"row {lineno}: class id {c} is not an integer", None, path)
        c = int(c)
        if c != EXPR_SENTINEL and not 0 <= c < num_classes:
            raise FormatError(f"row {lineno}: class id {c} outside 0..{num_classes - 1}", None, path)
        entries.append((frame, c))
    T = length if length is not None else (entries[-1][0] + 1 if entries else 0)
    labels, ok = np.zeros(T, dtype=np.int64), np.zeros(T, dtype=bool)
    for frame, c in entries:
        if frame < T and c != EXPR_SENTINEL:
            labels[frame], ok[frame] = c, True
    return ExprTarget(labels, ok, num_classes)


def write_labels_va(path, target: VaTarget) -> None:
    lines = [",".join(VA_HEADER)]
    for i in range(len(target)):
        if target.valid[i]:
            lines.append(f"{i},{target.valence[i]:.6f},{target.arousal[i]:.6f}")
        else:
            lines.append(f"{i},{VA_SENTINEL:g},{VA_SENTINEL:g}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_labels_expr(path, target: ExprTarget) -> None:
    lines = [",".join(EXPR_HEADER)]
    for i in range(len(target)):
        lines.append(f"{i},{int(target.labels[i]) if target.valid[i] else EXPR_SENTINEL}")
    Path(path).write_text("\n".join(lines) + "\n")
