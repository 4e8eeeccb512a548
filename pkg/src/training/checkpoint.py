"""DUTC checkpoint container.

Layout: b"DUTC", u32 JSON length, UTF-8 JSON (model spec, train config,
optimizer scalars), u32 record count, then per record a u32 name length,
the UTF-8 name and one DUT1 tensor; a SHA-256 of all preceding bytes ends
the file. JSON keys are sorted and records follow parameter enumeration
order, so saving a loaded checkpoint reproduces the same bytes.
"""
import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..core.errors import ConfigurationError, IntegrityError
from ..core.serialization import read_tensor, write_tensor
from ..models.network_spec import ModelSpec
from ..models.training import TrainConfig
from ..network.stacked import StackedModel, build_model
from ..utils.logger import get_logger
from .nadam import Nadam, OptimizerState

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"DUTC"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_DIGEST_SIZE = hashlib.sha256().digest_size


@dataclass
class Checkpoint:
    """Decoded checkpoint contents before they are bound to a model"""
    model_spec: ModelSpec
    train_config: Optional[TrainConfig]
    optimizer: Dict
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)


def _records(model: StackedModel, opt: Optional[Nadam]):
    for name, p in model.named_parameters():
        yield f"param:{name}", p.data
    for name, buffer in model.named_buffers():
        yield f"buffer:{name}", buffer
    if opt is not None:
        for name, _ in model.named_parameters():
            if name in opt.state.m:
                yield f"m:{name}", opt.state.m[name]
                yield f"v:{name}", opt.state.v[name]


def checkpoint_bytes(model: StackedModel, opt: Optional[Nadam] = None,
                     train_config: Optional[TrainConfig] = None) -> bytes:
    if model.spec is None:
        raise ConfigurationError(["model has no ModelSpec; build it with build_model to checkpoint it"])
    header = {
        'format': FORMAT_VERSION,
        'model': model.spec.to_dict(),
        'train': train_config.to_dict() if train_config else None,
        'optimizer': opt.state.to_dict() if opt else None,
    }
    blob = json.dumps(header, sort_keys=True).encode('utf-8')
    records = list(_records(model, opt))

    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(_U32.pack(len(blob)))
    buffer.write(blob)
    buffer.write(_U32.pack(len(records)))
    for name, array in records:
        encoded = name.encode('utf-8')
        buffer.write(_U32.pack(len(encoded)))
        buffer.write(encoded)
        write_tensor(buffer, array)
    body = buffer.getvalue()
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: StackedModel, opt: Optional[Nadam], path: str,
                    train_config: Optional[TrainConfig] = None) -> str:
    """Write atomically (temp file + rename)"""
    data = checkpoint_bytes(model, opt, train_config)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    temp_path = f"{path}.tmp"
    with open(temp_path, 'wb') as f:
        f.write(data)
    os.replace(temp_path, path)
    logger.debug(f"checkpoint written to {path} ({len(data):,} bytes)")
    return path


def _read_u32(stream, what: str) -> int:
    data = stream.read(_U32.size)
    if len(data) != _U32.size:
        raise IntegrityError(f"truncated checkpoint: missing {what}")
    return _U32.unpack(data)[0]


def parse_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < len(CHECKPOINT_MAGIC) + _DIGEST_SIZE:
        raise IntegrityError(f"checkpoint too short ({len(data)} bytes)")
    if data[:4] != CHECKPOINT_MAGIC:
        raise IntegrityError(f"bad checkpoint magic {data[:4]!r}")
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("checkpoint checksum mismatch (truncated or corrupted file)")

    stream = io.BytesIO(body)
    stream.read(4)
    blob_length = _read_u32(stream, "header length")
    blob = stream.read(blob_length)
    if len(blob) != blob_length:
        raise IntegrityError("truncated checkpoint header")
    try:
        header = json.loads(blob.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IntegrityError(f"checkpoint header is not valid JSON: {e}")
    if header.get('format') != FORMAT_VERSION:
        raise IntegrityError(f"unsupported checkpoint format {header.get('format')!r}")

    arrays = {}
    for _ in range(_read_u32(stream, "record count")):
        name_length = _read_u32(stream, "record name length")
        name = stream.read(name_length)
        if len(name) != name_length:
            raise IntegrityError("truncated record name")
        arrays[name.decode('utf-8')] = read_tensor(stream)
    if stream.read(1):
        raise IntegrityError("unexpected bytes after the last record")

    train = header.get('train')
    return Checkpoint(model_spec=ModelSpec.from_dict(header['model']),
                      train_config=TrainConfig.from_dict(train) if train else None,
                      optimizer=header.get('optimizer') or {},
                      arrays=arrays)


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, 'rb') as f:
        return parse_checkpoint(f.read())


def _take(arrays: Dict[str, np.ndarray], key: str, shape, dtype) -> np.ndarray:
    if key not in arrays:
        raise IntegrityError(f"checkpoint lacks record {key!r}")
    array = arrays[key]
    if array.size != int(np.prod(shape, dtype=np.int64)):
        raise IntegrityError(f"record {key!r} has {array.size} values, model expects shape {shape}")
    return array.reshape(shape).astype(dtype)


def restore(ckpt: Checkpoint) -> Tuple[StackedModel, Nadam]:
    """Rebuild the model from its spec and overwrite its state from the records"""
    model = build_model(ckpt.model_spec)
    arrays = ckpt.arrays
    expected = set()
    for name, p in model.named_parameters():
        p.data = _take(arrays, f"param:{name}", p.shape, p.dtype)
        expected.add(f"param:{name}")
    for name, buffer in list(model.named_buffers()):
        model.set_buffer(name, _take(arrays, f"buffer:{name}", buffer.shape, buffer.dtype))
        expected.add(f"buffer:{name}")

    state = OptimizerState(step=int(ckpt.optimizer.get('step', 0)),
                           m_schedule=float(ckpt.optimizer.get('m_schedule', 1.0)))
    for name, p in model.named_parameters():
        if f"m:{name}" in arrays:
            state.m[name] = _take(arrays, f"m:{name}", p.shape, p.dtype)
            state.v[name] = _take(arrays, f"v:{name}", p.shape, p.dtype)
            expected.update((f"m:{name}", f"v:{name}"))
    unknown = sorted(set(arrays) - expected)
    if unknown:
        raise IntegrityError(f"checkpoint holds records the model does not have: {unknown[:5]}")

    cfg = ckpt.train_config or TrainConfig()
    opt = Nadam(cfg.beta1, cfg.beta2, cfg.epsilon, cfg.schedule_decay, state=state)
    return model, opt


def load_checkpoint(path: str) -> Tuple[StackedModel, Nadam]:
    return restore(read_checkpoint(path))
