"""Binary checkpoint format.

Layout (all little-endian)::

    4s   magic "AEGM"
    u32  version
    u32  d, d_h, d_s, n
    f64  baseline_entropy, tau_threshold, lambda
    7f64 normalization stats (mu_log[3], sigma_log[3], epsilon)
    u32  tensor count
    per tensor, in PARAM_ORDER:
        u32 name length, utf-8 name, u32 rank, u32 dims[rank], f32 data
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..errors import BadMagic, DimMismatch, Truncated, VersionMismatch
from ..physics import pack_stats, unpack_stats
from ..tvd import TvdConfig
from .model import PARAM_ORDER, Hyper, ModelParams

MAGIC = b"AEGM"
VERSION = 1
_HEAD = struct.Struct("<4sI4I3d")
_STATS_SIZE = 56


def dumps(params: ModelParams) -> bytes:
    h = params.hyper
    t = params.tvd
    parts = [
        _HEAD.pack(MAGIC, VERSION, h.d, h.d_h, h.d_s, h.n, t.baseline_entropy, t.tau_threshold, t.lam),
        pack_stats(params.stats),
        struct.pack("<I", len(PARAM_ORDER)),
    ]
    for name in PARAM_ORDER:
        arr = np.ascontiguousarray(params.weights[name], dtype="<f4")
        raw = name.encode()
        parts.append(struct.pack(f"<I{len(raw)}sI{arr.ndim}I", len(raw), raw, arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise Truncated("checkpoint ends early")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(blob: bytes, expect: Hyper | None = None) -> ModelParams:
    """Parse a checkpoint; nothing is constructed until the whole blob validates."""
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagic("not a model checkpoint")
    cur = _Cursor(blob)
    _, version, d, d_h, d_s, n, baseline, tau, lam = cur.unpack(_HEAD.format)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    hyper = Hyper(d, d_h, d_s, n)
    if expect is not None and expect != hyper:
        raise DimMismatch(f"checkpoint has {hyper}, expected {expect}")
    stats = unpack_stats(cur.take(_STATS_SIZE))
    (count,) = cur.unpack("<I")
    shapes = hyper.shapes()
    weights = {}
    for _ in range(count):
        (nlen,) = cur.unpack("<I")
        name = cur.take(nlen).decode()
        (rank,) = cur.unpack("<I")
        dims = cur.unpack(f"<{rank}I")
        if name not in shapes or tuple(dims) != shapes[name]:
            raise DimMismatch(f"tensor {name} has shape {dims}, expected {shapes.get(name)}")
        size = int(np.prod(dims)) * 4
        weights[name] = np.frombuffer(cur.take(size), dtype="<f4").reshape(dims).astype(np.float32)
    if set(weights) != set(shapes):
        raise DimMismatch(f"checkpoint tensors {sorted(weights)} do not match the model")
    return ModelParams(weights, hyper, TvdConfig(baseline, tau, lam), stats)


def save_checkpoint(path: str | Path, params: ModelParams) -> int:
    blob = dumps(params)
    path = Path(path)
    # write-then-rename so a crash never leaves a half-written checkpoint
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(blob)


def load_checkpoint(path: str | Path, expect: Hyper | None = None) -> ModelParams:
    return loads(Path(path).read_bytes(), expect)
