"""RSMX: the binary matrix format every federation payload travels in.

Layout (all integers little-endian):

    offset  size  field
    0       4     magic "RSMX"
    4       1     version, currently 1
    5       1     role tag
    6       4     rows (u32)
    10      4     cols (u32)
    14      8*r*c matrix values, IEEE-754 binary64, row-major
    -4      4     CRC-32 (IEEE polynomial) of every preceding byte

Total size is therefore exactly ``18 + 8 * rows * cols`` bytes.  The role
tag identifies what the matrix is (see :mod:`resad.federation`); the codec
itself treats it as an opaque byte.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .validation import ensure_matrix

MAGIC = b"RSMX"
VERSION = 1
HEADER = struct.Struct("<4sBBII")
OVERHEAD_BYTES = HEADER.size + 4  # header plus trailing CRC-32


class RsmxError(ValueError):
    """Base class for RSMX decoding failures."""


class BadMagicError(RsmxError):
    pass


class UnsupportedVersionError(RsmxError):
    pass


class TruncatedError(RsmxError):
    pass


class ChecksumError(RsmxError):
    pass


def encode(matrix, role: int) -> bytes:
    """Serialize a real matrix under the given role tag."""
    if not 0 <= role <= 255:
        raise ValueError(f"role tag must fit in one byte, got {role}")
    matrix = ensure_matrix(matrix, "matrix")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix contains non-finite values")
    rows, cols = matrix.shape
    body = HEADER.pack(MAGIC, VERSION, role, rows, cols)
    body += np.ascontiguousarray(matrix, dtype="<f8").tobytes()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode(data: bytes) -> tuple[np.ndarray, int]:
    """Deserialize; returns ``(matrix, role)``.

    Raises a distinct error per failure mode: :class:`BadMagicError`,
    :class:`UnsupportedVersionError`, :class:`TruncatedError` (short or
    trailing bytes), :class:`ChecksumError`.
    """
    if len(data) < OVERHEAD_BYTES:
        raise TruncatedError(
            f"need at least {OVERHEAD_BYTES} bytes, got {len(data)}"
        )
    magic, version, role, rows, cols = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    expected = OVERHEAD_BYTES + 8 * rows * cols
    if len(data) < expected:
        raise TruncatedError(f"expected {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise TruncatedError(
            f"expected {expected} bytes, got {len(data)} (trailing data)"
        )
    (stored_crc,) = struct.unpack_from("<I", data, expected - 4)
    actual_crc = zlib.crc32(data[: expected - 4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=HEADER.size)
    return values.reshape(rows, cols).copy(), role


def encoded_size(rows: int, cols: int) -> int:
    """Exact byte length of an encoded ``rows x cols`` matrix."""
    return OVERHEAD_BYTES + 8 * rows * cols
