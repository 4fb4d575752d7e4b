"""Self-contained writer/reader for the TNSR tensor container.

Layout: magic ``TNSR``, u8 version (1), u8 dtype code (1 = float32,
2 = uint8), u8 rank in 1..4, rank little-endian u32 extents, row-major
little-endian payload. This mirrors the consumer toolkit's reader; the
round-trip tests hold the two implementations bit-for-bit together.
"""

import math
import struct

import numpy as np

from . import ExportError

MAGIC = b"TNSR"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("u1")}


def write_tensor(arr, path) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        code = 1
    elif arr.dtype == np.uint8:
        code = 2
    else:
        raise ExportError(f"unsupported dtype {arr.dtype}; use float32 or uint8")
    if not 1 <= arr.ndim <= 4:
        raise ExportError(f"rank {arr.ndim} outside 1..4")
    if any(e < 1 for e in arr.shape):
        raise ExportError(f"zero extent in shape {arr.shape}")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"))
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 7 or data[:4] != MAGIC or data[4] != VERSION:
        raise ExportError(f"{path}: not a TNSR v{VERSION} file")
    dtype = _DTYPES.get(data[5])
    ndim = data[6]
    if dtype is None or not 1 <= ndim <= 4:
        raise ExportError(f"{path}: bad dtype or rank byte")
    off = 7 + 4 * ndim
    if len(data) < off:
        raise ExportError(f"{path}: truncated extents")
    shape = struct.unpack_from(f"<{ndim}I", data, 7)
    count = math.prod(shape)
    if any(e < 1 for e in shape) or len(data) != off + count * dtype.itemsize:
        raise ExportError(f"{path}: payload size does not match extents")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
    return arr.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
