"""DUT1 tensor dump: magic "DUT1", 4 x u32 shape, then little-endian f32 payload."""
import io
import struct
from pathlib import Path
from typing import BinaryIO, Tuple, Union

import numpy as np

from .errors import IntegrityError

TENSOR_MAGIC = b"DUT1"
_SHAPE = struct.Struct("<4I")


def _rank4_shape(shape: Tuple[int, ...]) -> Tuple[int, int, int, int]:
    if len(shape) > 4:
        raise IntegrityError(f"cannot dump rank-{len(shape)} array")
    return (1,) * (4 - len(shape)) + tuple(int(s) for s in shape)


def write_tensor(stream: BinaryIO, array: np.ndarray):
    """Write one tensor record; lower-rank arrays are left-padded with 1s to rank 4"""
    shape = _rank4_shape(np.shape(array))
    stream.write(TENSOR_MAGIC)
    stream.write(_SHAPE.pack(*shape))
    stream.write(np.ascontiguousarray(array, dtype='<f4').tobytes())


def _read_exact(stream: BinaryIO, count: int, what: str) -> bytes:
    data = stream.read(count)
    if len(data) != count:
        raise IntegrityError(f"truncated {what}: expected {count} bytes, got {len(data)}")
    return data


def read_tensor(stream: BinaryIO) -> np.ndarray:
    magic = _read_exact(stream, 4, "tensor magic")
    if magic != TENSOR_MAGIC:
        raise IntegrityError(f"bad tensor magic {magic!r}")
    shape = _SHAPE.unpack(_read_exact(stream, _SHAPE.size, "tensor shape"))
    count = int(np.prod(shape, dtype=np.int64))
    payload = _read_exact(stream, count * 4, "tensor payload")
    return np.frombuffer(payload, dtype='<f4').astype(np.float32).reshape(shape)


def dump_tensor(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    write_tensor(buffer, array)
    return buffer.getvalue()


def save_tensor(path: Union[str, Path], array: np.ndarray):
    with open(path, 'wb') as f:
        write_tensor(f, array)


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    with open(path, 'rb') as f:
        array = read_tensor(f)
        if f.read(1):
            raise IntegrityError(f"trailing bytes after tensor in {path}")
    return array
