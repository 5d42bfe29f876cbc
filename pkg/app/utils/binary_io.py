"""
Binary layouts for kernel matrices and state snapshots.

Both layouts start with an 8-byte magic signature and store little-endian
values:

    NLWKERN1 | uint64 rows | uint64 cols | float64[rows*cols] row-major
    NLWSNAP1 | uint64 modes | float64 time | float64[modes] a | float64[modes] b
"""

import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from app.core.errors import ConfigurationError, InputError

KERNEL_MAGIC = b"NLWKERN1"
SNAPSHOT_MAGIC = b"NLWSNAP1"

# Signature -> layout name, as used for sniffing file types
SIGNATURES = {
    KERNEL_MAGIC: "kernel",
    SNAPSHOT_MAGIC: "snapshot",
}

PathLike = Union[str, Path]


def detect_layout(content: bytes):
    """Return the layout name for known magic bytes, else None."""
    return SIGNATURES.get(content[:8])


def encode_kernel(matrix: np.ndarray) -> bytes:
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise InputError(f"kernel matrix must be 2-D, got shape {matrix.shape}")
    rows, cols = matrix.shape
    return KERNEL_MAGIC + struct.pack("<QQ", rows, cols) + matrix.tobytes(order="C")


def decode_kernel(content: bytes) -> np.ndarray:
    if content[:8] != KERNEL_MAGIC:
        raise ConfigurationError("kernel file does not start with the NLWKERN1 signature")
    if len(content) < 24:
        raise ConfigurationError("kernel file is truncated")
    rows, cols = struct.unpack("<QQ", content[8:24])
    payload = content[24:]
    if len(payload) != 8 * rows * cols:
        raise ConfigurationError(
            f"kernel file declares {rows}x{cols} entries but holds {len(payload) // 8}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def read_kernel_file(path: PathLike) -> np.ndarray:
    """Load a kernel matrix from the binary layout or from plain text."""
    path = Path(path)
    try:
        content = path.read_bytes()
    except OSError as e:
        raise ConfigurationError(f"cannot read kernel file {path}: {e}") from e
    if detect_layout(content) == "kernel":
        return decode_kernel(content)
    try:
        return np.atleast_2d(np.loadtxt(path, dtype=float))
    except ValueError as e:
        raise ConfigurationError(f"kernel file {path} is neither NLWKERN1 nor numeric text: {e}") from e


def write_kernel_file(path: PathLike, matrix: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_kernel(matrix))
    return path


def encode_snapshot(time: float, a: np.ndarray, b: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    b = np.ascontiguousarray(b, dtype="<f8")
    if a.shape != b.shape or a.ndim != 1:
        raise InputError("snapshot position and velocity must be 1-D and of equal length")
    return SNAPSHOT_MAGIC + struct.pack("<Qd", a.size, time) + a.tobytes() + b.tobytes()


def decode_snapshot(content: bytes) -> Tuple[float, np.ndarray, np.ndarray]:
    if content[:8] != SNAPSHOT_MAGIC:
        raise InputError("snapshot does not start with the NLWSNAP1 signature")
    modes, time = struct.unpack("<Qd", content[8:24])
    payload = content[24:]
    if len(payload) != 16 * modes:
        raise InputError(f"snapshot declares {modes} modes but payload has {len(payload)} bytes")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    return time, values[:modes].copy(), values[modes:].copy()
