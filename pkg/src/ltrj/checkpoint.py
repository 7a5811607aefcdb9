"""Binary checkpoint files (``.ltrj``).

Layout, little-endian throughout::

    b"LTRJ" | u16 version=1 | u16 L | (L+1) x u32 dims
    | for each layer: W (row-major f32) then b (f32)
    | optional u32 CRC32 of everything before it
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .nn import Architecture, Params

MAGIC = b"LTRJ"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(params: Params, crc: bool = True) -> bytes:
    dims = params.arch.dims
    parts = [MAGIC, struct.pack("<HH", VERSION, len(dims) - 1), struct.pack(f"<{len(dims)}I", *dims)]
    for a in params.arrays():
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    body = b"".join(parts)
    if crc:
        body += struct.pack("<I", zlib.crc32(body))
    return body


def decode(buf: bytes, expect_dims=None) -> Params:
    if len(buf) < 8:
        raise CheckpointError(f"truncated header: expected at least 8 bytes, got {len(buf)}")
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    version, L = struct.unpack_from("<HH", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}, expected {VERSION}")
    head = 8 + 4 * (L + 1)
    if L < 2 or len(buf) < head:
        raise CheckpointError(f"truncated header: expected {head} bytes, got {len(buf)}")
    dims = struct.unpack_from(f"<{L + 1}I", buf, 8)
    arch = Architecture(dims)
    if expect_dims is not None and tuple(expect_dims) != arch.dims:
        raise CheckpointError(f"dims {arch.dims} do not match expected {tuple(expect_dims)}")
    size = head + 4 * arch.num_params
    if len(buf) == size + 4:
        (stored,) = struct.unpack_from("<I", buf, size)
        if zlib.crc32(buf[:size]) != stored:
            raise CheckpointError("CRC32 mismatch")
    elif len(buf) != size:
        raise CheckpointError(f"size mismatch: expected {size} bytes (or {size + 4} with CRC), got {len(buf)}")
    vec = np.frombuffer(buf, dtype="<f4", count=arch.num_params, offset=head).astype(np.float32)
    return Params.from_flat(arch, vec)


def write_checkpoint(path: str | os.PathLike, params: Params) -> None:
    Path(path).write_bytes(encode(params))


def read_checkpoint(path: str | os.PathLike, expect_dims=None) -> Params:
    return decode(Path(path).read_bytes(), expect_dims)


def step_name(t: int) -> str:
    return f"step_{t:04d}.ltrj"
