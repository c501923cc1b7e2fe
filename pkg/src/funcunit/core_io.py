"""Binary tensor format, label CSV files and the seeded RNG contract.

Tensors are stored in the ``MTF1`` format::

    b"MTF1" | u32 rank | rank x u32 dims | prod(dims) x f64 payload

All integers and floats are little-endian and the payload is row-major
(C order). Label files hold one integer per line.

Random streams use numpy's PCG64 seeded through ``SeedSequence``. A task
stream is derived from ``(master_seed, *task_key)`` via the spawn key, so
parallel tasks never share generator state and the outcome does not depend
on scheduling order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"MTF1"
MAX_RANK = 4


class TensorFormatError(ValueError):
    """Base class for malformed MTF1 files."""


class BadMagicError(TensorFormatError):
    pass


class TruncatedTensorError(TensorFormatError):
    pass


class DimsMismatchError(TensorFormatError):
    """Header dims disagree with payload length (extra trailing bytes)."""


class LabelParseError(ValueError):
    def __init__(self, line_no: int, text: str):
        super().__init__(f"line {line_no}: not an integer label: {text!r}")
        self.line_no = line_no


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_tensor(t) -> bytes:
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > MAX_RANK:
        raise ValueError(f"tensor rank must be in 1..{MAX_RANK}, got {arr.ndim}")
    if any(d <= 0 for d in arr.shape):
        raise ValueError(f"zero-sized dimension in {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    header = MAGIC + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + np.ascontiguousarray(arr).astype("<f8", copy=False).tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        if buf[:4] != MAGIC[: len(buf[:4])]:
            raise BadMagicError("bad magic")
        raise TruncatedTensorError("file shorter than header")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    (rank,) = struct.unpack_from("<I", buf, 4)
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"invalid rank {rank}")
    hdr = 8 + 4 * rank
    if len(buf) < hdr:
        raise TruncatedTensorError("truncated dims header")
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"zero-sized dimension in {dims}")
    expected = 8 * int(np.prod(dims, dtype=np.int64))
    got = len(buf) - hdr
    if got < expected:
        raise TruncatedTensorError(f"payload has {got} bytes, expected {expected}")
    if got > expected:
        raise DimsMismatchError(f"payload has {got} bytes, dims {dims} require {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=hdr, count=expected // 8)
    return data.astype(np.float64).reshape(dims)


def save_tensor(t, path) -> None:
    """Write ``t`` atomically as an MTF1 file.

    Raises ``ValueError`` for rank outside 1..4, zero dimensions or
    non-finite values; nothing is written in that case.
    """
    _atomic_write(path, encode_tensor(t))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())


def n_labels(labels) -> int:
    labels = np.asarray(labels)
    return 0 if labels.size == 0 else int(labels.max()) + 1


def save_labels(labels, path) -> None:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or not np.issubdtype(labels.dtype, np.integer)):
        raise ValueError("labels must be non-negative integers")
    text = "".join(f"{int(v)}\n" for v in labels)
    _atomic_write(path, text.encode("utf-8"))


def load_labels(path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for i, line in enumerate(fh, start=1):
            s = line.rstrip("\n")
            if not s or not s.isdigit():
                raise LabelParseError(i, s)
            out.append(int(s))
    return np.asarray(out, dtype=np.int64)


def make_rng(seed, *key) -> np.random.Generator:
    """PCG64 stream for ``seed`` and an optional integer task key.

    ``make_rng(7, 3, 12)`` is the stream of task ``(3, 12)`` under master
    seed 7; it is independent of ``make_rng(7, 3, 13)`` and of the master
    stream ``make_rng(7)``.
    """
    if isinstance(seed, np.random.Generator):
        if key:
            raise TypeError("task keys need an integer master seed")
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key) -> int:
    """32-bit integer seed for libraries that only accept ints."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])
