"""Binary parameter checkpoints.

Layout (little-endian)::

    b"SFCK"  u32 version  u8 kind_len  kind (utf-8)
    repeated until EOF:
        u32 name_len  name (utf-8)  u32 rank  u64 extent * rank  f64 payload (row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..ndcore import ModelParams

MAGIC = b"SFCK"
VERSION = 1


def dumps(params: ModelParams) -> bytes:
    kind = params.kind.encode()
    if len(kind) > 255:
        raise ValueError("model kind tag longer than 255 bytes")
    out = [MAGIC, struct.pack("<IB", VERSION, len(kind)), kind]
    for name, t in params.items():
        nb = name.encode()
        out.append(struct.pack("<I", len(nb)))
        out.append(nb)
        out.append(struct.pack("<I", t.ndim))
        out.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(out)


def loads(buf: bytes, path=None) -> ModelParams:
    def need(pos, n, what):
        if pos + n > len(buf):
            raise FormatError(f"truncated while reading {what}", pos, path)

    need(0, 4, "magic")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0, path)
    need(4, 5, "header")
    version, klen = struct.unpack_from("<IB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4, path)
    need(9, klen, "kind tag")
    try:
        kind = buf[9:9 + klen].decode()
    except UnicodeDecodeError:
        raise FormatError("kind tag is not utf-8", 9, path) from None
    params = ModelParams(kind)
    pos = 9 + klen
    while pos < len(buf):
        need(pos, 4, "name length")
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(pos, nlen, "tensor name")
        try:
            name = buf[pos:pos + nlen].decode()
        except UnicodeDecodeError:
            raise FormatError("tensor name is not utf-8", pos, path) from None
        pos += nlen
        need(pos, 4, "rank")
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        need(pos, 8 * rank, "extents")
        shape = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        count = int(np.prod(shape, dtype=object)) if rank else 1
        need(pos, 8 * count, f"payload of {name!r}")
        data = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        if name in params:
            raise FormatError(f"duplicate tensor {name!r}", pos, path)
        params[name] = data.astype(np.float64)
    return params


def save_checkpoint(path, params: ModelParams) -> None:
    Path(path).write_bytes(dumps(params))


def load_checkpoint(path) -> ModelParams:
    return loads(Path(path).read_bytes(), path)
