"""Raw little-endian tensor container.

Single tensor record::

    magic   8 bytes   b"BBTENSR1"
    dtype   u8        1=float32 2=float64 3=int64 4=uint8
    rank    u8
    extents rank * u64
    payload prod(extents) * itemsize bytes, row-major, little-endian

Archive (named records, used for checkpoints)::

    magic   8 bytes   b"BBARCHV1"
    count   u32
    count * (name_len u16, name utf-8, tensor record)
"""
from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np
import torch

TENSOR_MAGIC = b"BBTENSR1"
ARCHIVE_MAGIC = b"BBARCHV1"

_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8"), 4: np.dtype("u1")}
_BY_KIND = {np.dtype(v).newbyteorder("="): k for k, v in _CODES.items()}


class ContainerFormatError(ValueError):
    pass


def _as_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        t = t.detach().cpu().numpy()
    return np.ascontiguousarray(t)


def write_tensor(fh: BinaryIO, t) -> None:
    arr = _as_numpy(t)
    code = _BY_KIND.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise TypeError(f"unsupported dtype {arr.dtype}")
    if arr.ndim > 255:
        raise ValueError("rank too large")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<BB", code, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.astype(_CODES[code], copy=False).tobytes(order="C"))


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ContainerFormatError("truncated tensor container")
    return buf


def read_tensor(fh: BinaryIO) -> torch.Tensor:
    if _read_exact(fh, 8) != TENSOR_MAGIC:
        raise ContainerFormatError("bad tensor magic")
    code, rank = struct.unpack("<BB", _read_exact(fh, 2))
    if code not in _CODES:
        raise ContainerFormatError(f"unknown dtype code {code}")
    shape = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank))
    dt = _CODES[code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    arr = np.frombuffer(_read_exact(fh, count * dt.itemsize), dtype=dt).reshape(shape)
    return torch.from_numpy(arr.astype(dt.newbyteorder("="), copy=True))


def save_tensor(path, t) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, t)


def load_tensor(path) -> torch.Tensor:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_archive(path, tensors: Mapping[str, object]) -> None:
    buf = io.BytesIO()
    buf.write(ARCHIVE_MAGIC)
    buf.write(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        write_tensor(buf, t)
    Path(path).write_bytes(buf.getvalue())


def load_archive(path) -> dict[str, torch.Tensor]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 8) != ARCHIVE_MAGIC:
            raise ContainerFormatError("bad archive magic")
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        out = {}
        for _ in range(count):
            (n,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, n).decode("utf-8")
            out[name] = read_tensor(fh)
        return out
