"""FCT1 binary tensor files.

Layout: magic ``FCT1`` (4 bytes), u8 dtype code (0=f32, 1=f64, 2=c128 with
interleaved re/im), u8 rank, little-endian u32 dims[rank], then the row-major
payload.  Round trips are bit-exact.  Read errors are distinct per failure
mode and carry the byte offset where parsing stopped.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

MAGIC = b"FCT1"

_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c16")}
_KIND_TO_CODE = {"f4": 0, "f8": 1, "c16": 2}


class TensorFileError(IOError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


class BadMagicError(TensorFileError):
    pass


class TruncatedError(TensorFileError):
    pass


class DtypeMismatchError(TensorFileError):
    pass


def _storage_dtype(a: np.ndarray) -> np.dtype:
    if a.dtype == np.float32:
        return np.dtype("<f4")
    if a.dtype == np.complex64 or a.dtype == np.complex128:
        return np.dtype("<c16")
    if np.issubdtype(a.dtype, np.floating):
        return np.dtype("<f8")
    if np.issubdtype(a.dtype, np.integer) or a.dtype == np.bool_:
        return np.dtype("<f8")
    raise TensorFileError(f"unsupported dtype {a.dtype}", 0)


def write_stream(fh: io.BufferedIOBase, tensor: np.ndarray) -> None:
    a = np.asarray(tensor)
    dt = _storage_dtype(a)
    a = a.astype(dt, copy=False)
    code = _KIND_TO_CODE[dt.str.lstrip("<|=")]
    fh.write(MAGIC)
    fh.write(bytes([code, a.ndim]))
    fh.write(np.asarray(a.shape, dtype="<u4").tobytes())
    fh.write(a.tobytes())  # tobytes emits C order regardless of layout


def read_stream(fh: io.BufferedIOBase, expect_code: int | None = None) -> np.ndarray:
    pos = fh.tell()

    def need(n: int, what: str) -> bytes:
        nonlocal pos
        buf = fh.read(n)
        if len(buf) != n:
            raise TruncatedError(
                f"truncated {what}: expected {n} bytes, got {len(buf)}", pos + len(buf)
            )
        pos += n
        return buf

    magic_at = pos
    magic = need(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}", magic_at)
    code_at = pos
    code = need(1, "dtype code")[0]
    if code not in _CODE_TO_DTYPE:
        raise DtypeMismatchError(f"unknown dtype code {code}", code_at)
    if expect_code is not None and code != expect_code:
        raise DtypeMismatchError(f"dtype code {code}, expected {expect_code}", code_at)
    rank = need(1, "rank")[0]
    dims = np.frombuffer(need(4 * rank, "dims"), dtype="<u4")
    dt = _CODE_TO_DTYPE[code]
    count = int(np.prod(dims)) if rank else 1
    payload = need(count * dt.itemsize, "payload")
    return np.frombuffer(payload, dtype=dt).reshape(tuple(int(d) for d in dims)).copy()


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_stream(fh, tensor)


def read_tensor(path: str | Path, expect_code: int | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_stream(fh, expect_code)


def validate_header(path: str | Path) -> tuple[int, tuple[int, ...]]:
    """Cheap header check: returns (dtype code, dims) without the payload."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}", 0)
        head = fh.read(2)
        if len(head) != 2:
            raise TruncatedError("truncated header", 4)
        code, rank = head[0], head[1]
        if code not in _CODE_TO_DTYPE:
            raise DtypeMismatchError(f"unknown dtype code {code}", 4)
        raw = fh.read(4 * rank)
        if len(raw) != 4 * rank:
            raise TruncatedError("truncated dims", 6)
        dims = tuple(int(d) for d in np.frombuffer(raw, dtype="<u4"))
        return code, dims
