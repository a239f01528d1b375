"""The ``.ttf`` binary format.

Layout, all integers little-endian::

    magic        4 bytes  b"TTF1"
    version      u16      1
    flags        u16      bit0 is_matrix, bit1 is_batch
    d            u16
    batch_size   u32      1 when not a batch
    dims         u32 * d  (u32 * 2d for matrices, (rows, cols) per mode)
    ranks        u32 * (d + 1)
    header_crc   u32      CRC-32 of every header byte before it

followed by the cores in order, each as little-endian float64 in row-major
order with the batch axis outermost.
"""
from __future__ import annotations

import io
import os
import struct
import zlib

import numpy as np

from .core import TensorTrain, TensorTrainBatch, _check_tt
from .exceptions import (BadMagicError, HeaderChecksumError, RankChainError,
                         TruncatedPayloadError, TTFormatError,
                         UnsupportedVersionError)

MAGIC = b"TTF1"
VERSION = 1
FLAG_MATRIX = 1
FLAG_BATCH = 2
_FIXED = struct.Struct("<4sHHHI")


def _header(t) -> bytes:
    batched = isinstance(t, TensorTrainBatch)
    flags = (FLAG_MATRIX if t.is_matrix else 0) | (FLAG_BATCH if batched else 0)
    d = t.ndims
    if d > 0xFFFF:
        raise TTFormatError(f"too many modes for the format: {d}")
    dims = [x for mode in t.shape.modes for x in mode] if t.is_matrix else list(t.shape.modes)
    head = _FIXED.pack(MAGIC, VERSION, flags, d, t.batch_size or 1)
    head += struct.pack(f"<{len(dims)}I", *dims)
    head += struct.pack(f"<{d + 1}I", *t.ranks)
    return head + struct.pack("<I", zlib.crc32(head))


def dumps(t) -> bytes:
    _check_tt(t)
    parts = [_header(t)]
    parts += [np.ascontiguousarray(c, dtype="<f8").tobytes() for c in t.cores]
    return b"".join(parts)


def save(t, sink) -> int:
    """Write ``t`` to a path or binary stream; returns the number of bytes."""
    data = dumps(t)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as f:
            f.write(data)
    else:
        sink.write(data)
    return len(data)


def _read(stream, n, what):
    data = stream.read(n)
    if len(data) != n:
        raise TruncatedPayloadError(n, len(data), what)
    return data


def _load_stream(stream):
    head = _read(stream, 4, "magic")
    if head != MAGIC:
        raise BadMagicError(f"bad magic {head!r}, expected {MAGIC!r}")
    rest = _read(stream, _FIXED.size - 4, "header")
    head += rest
    _, version, flags, d, batch_size = _FIXED.unpack(head)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    if flags & ~(FLAG_MATRIX | FLAG_BATCH):
        raise TTFormatError(f"unknown flag bits in {flags:#06x}")
    is_matrix = bool(flags & FLAG_MATRIX)
    batched = bool(flags & FLAG_BATCH)
    n_dims = 2 * d if is_matrix else d
    tail = _read(stream, 4 * (n_dims + d + 1), "header")
    head += tail
    (crc,) = struct.unpack("<I", _read(stream, 4, "header checksum"))
    if crc != zlib.crc32(head):
        raise HeaderChecksumError("header checksum mismatch")

    if d < 1:
        raise TTFormatError("file declares zero modes")
    if batch_size < 1 or (not batched and batch_size != 1):
        raise TTFormatError(f"inconsistent batch size {batch_size} "
                            f"(batch flag {'set' if batched else 'clear'})")
    values = struct.unpack(f"<{n_dims + d + 1}I", tail)
    dims, ranks = values[:n_dims], values[n_dims:]
    if any(x < 1 for x in dims):
        raise TTFormatError(f"mode dimensions must be >= 1, got {dims}")
    if ranks[0] != 1 or ranks[-1] != 1 or any(r < 1 for r in ranks):
        raise RankChainError(f"invalid rank chain {ranks}")

    cores = []
    for k in range(d):
        mode = dims[2 * k:2 * k + 2] if is_matrix else dims[k:k + 1]
        extents = (ranks[k],) + tuple(mode) + (ranks[k + 1],)
        if batched:
            extents = (batch_size,) + extents
        count = int(np.prod(extents, dtype=np.int64))
        raw = _read(stream, 8 * count, f"core {k} payload")
        cores.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(extents))
    return TensorTrainBatch(cores) if batched else TensorTrain(cores)


def loads(data: bytes):
    """Parse a complete ``.ttf`` byte string; trailing bytes are an error."""
    stream = io.BytesIO(data)
    t = _load_stream(stream)
    extra = len(data) - stream.tell()
    if extra:
        raise TTFormatError(f"{extra} unexpected bytes after the last core")
    return t


def load(source):
    """Read one TT object from a path or binary stream.

    A path must contain exactly one object; a stream is left positioned
    right after it.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return loads(f.read())
    return _load_stream(source)
