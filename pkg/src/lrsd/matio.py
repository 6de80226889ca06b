"""Matrix and mask file formats.

LRSD binary layout (little endian)::

    b"LRSD" | u16 version (=1) | u32 rows | u32 cols | rows*cols f64, row-major

Mask files are either the single token ``FULL`` or one zero-based
``i,j`` pair per line.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from lrsd.errors import FormatError
from lrsd.linalg import ObservationMask, as_matrix

MAGIC = b"LRSD"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


def write_lrsd(path, X) -> None:
    X = as_matrix(X)
    rows, cols = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())


def read_lrsd(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported LRSD version {version}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    X = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=rows * cols)
    return X.reshape(rows, cols).astype(np.float64)


def write_csv(path, X) -> None:
    np.savetxt(path, as_matrix(X), delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return as_matrix(X)


def read_matrix(path) -> np.ndarray:
    """Dispatch on content: LRSD magic, otherwise CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return read_lrsd(path) if head == MAGIC else read_csv(path)


def write_mask(path, mask: ObservationMask) -> None:
    with open(path, "w") as fh:
        if mask.is_full:
            fh.write("FULL\n")
            return
        for i, j in mask.indices:
            fh.write(f"{i},{j}\n")


def read_mask(path, shape) -> ObservationMask:
    text = Path(path).read_text().strip()
    if text == "FULL":
        return ObservationMask.full(shape)
    if not text:
        raise FormatError(f"{path}: empty mask file")
    try:
        idx = np.array([[int(v) for v in line.split(",")] for line in text.splitlines()
                        if line.strip()], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if idx.ndim != 2 or idx.shape[1] != 2:
        raise FormatError(f"{path}: mask lines must be 'i,j'")
    return ObservationMask.from_indices(shape, idx)
