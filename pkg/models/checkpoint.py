"""
Checkpoint Format
Versioned container: layer-spec manifest plus little-endian tensor blobs and Adam state.

Byte layout:
    0   8 bytes   magic b"EYSLCKPT"
    8   uint32 LE format version (1)
    12  uint32 LE header length H
    16  H bytes   UTF-8 JSON header (CheckpointHeader)
    16+H          tensor blobs, little-endian, C order, at the offsets listed in the header
"""

import json
import logging
import os
import struct
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from errors import CheckpointError
from models.network import Network
from nn.optim import AdamState
from schemas import SCHEMA_VERSION
from schemas.config import ModelConfig
from schemas.layers import LayerSpec

logger = logging.getLogger(__name__)

MAGIC = b"EYSLCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")

TensorGroup = Literal["param", "buffer", "adam_m", "adam_v"]


class TensorEntry(BaseModel):
    name: str
    group: TensorGroup
    dtype: Literal["<f4", "<f8"]
    shape: List[int]
    offset: int = Field(..., ge=0)
    nbytes: int = Field(..., ge=0)


class AdamHeader(BaseModel):
    t: int = Field(..., ge=0)
    alpha: float
    beta1: float
    beta2: float
    epsilon: float


class CheckpointHeader(BaseModel):
    schema_version: str = SCHEMA_VERSION
    model: ModelConfig
    layers: List[LayerSpec]
    tensors: List[TensorEntry]
    adam: Optional[AdamHeader] = None
    metadata: Dict[str, Any] = Field(default_factory=dict)


def _entries(network: Network, adam: Optional[AdamState]) -> List[Tuple[str, str, np.ndarray]]:
    groups = [("param", network.parameters()), ("buffer", network.buffers())]
    if adam is not None:
        groups += [("adam_m", adam.m), ("adam_v", adam.v)]
    return [(group, name, array) for group, tensors in groups for name, array in tensors.items()]


def save_checkpoint(
    network: Network,
    path: Union[str, Path],
    adam: Optional[AdamState] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write network (and optionally optimizer) state; the file is replaced atomically."""
    path = Path(path)
    blobs: List[bytes] = []
    tensors: List[TensorEntry] = []
    offset = 0
    for group, name, array in _entries(network, adam):
        little = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))
        blob = little.tobytes(order="C")
        tensors.append(
            TensorEntry(name=name, group=group, dtype=little.dtype.str, shape=list(array.shape),
                        offset=offset, nbytes=len(blob))
        )
        blobs.append(blob)
        offset += len(blob)

    header = CheckpointHeader(
        model=network.config,
        layers=network.specs,
        tensors=tensors,
        adam=AdamHeader(t=adam.t, **adam.hyperparameters()) if adam is not None else None,
        metadata=metadata or {},
    )
    header_bytes = header.model_dump_json().encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        handle.write(header_bytes)
        for blob in blobs:
            handle.write(blob)
    os.replace(tmp, path)
    logger.debug(f"Saved checkpoint {path} ({offset} tensor bytes)")
    return path


def read_header(path: Union[str, Path]) -> Tuple[CheckpointHeader, bytes]:
    """Validated header plus the raw blob region."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated before the header")
    magic, version, header_length = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    start = _PREFIX.size + header_length
    if len(data) < start:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = CheckpointHeader.model_validate(json.loads(data[_PREFIX.size:start].decode("utf-8")))
    except (ValueError, ValidationError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e

    blob = data[start:]
    needed = max((t.offset + t.nbytes for t in header.tensors), default=0)
    if len(blob) < needed:
        raise CheckpointError(f"{path}: truncated tensor data ({len(blob)} of {needed} bytes)")
    return header, blob


def _array(entry: TensorEntry, blob: bytes, dtype: np.dtype) -> np.ndarray:
    raw = np.frombuffer(blob, dtype=np.dtype(entry.dtype), count=int(np.prod(entry.shape)), offset=entry.offset)
    return raw.reshape(entry.shape).astype(dtype)


def load_training_state(path: Union[str, Path]) -> Tuple[Network, Optional[AdamState], Dict[str, Any]]:
    """Network, optimizer state (None when not saved) and metadata."""
    header, blob = read_header(path)
    network = Network(header.model, list(header.layers), rng=None)
    dtype = network.dtype
    params, buffers = network.parameters(), network.buffers()

    adam = None
    if header.adam is not None:
        adam = AdamState(
            alpha=header.adam.alpha, beta1=header.adam.beta1, beta2=header.adam.beta2,
            epsilon=header.adam.epsilon, t=header.adam.t,
        )

    for entry in header.tensors:
        target = {"param": params, "buffer": buffers}.get(entry.group)
        if target is not None:
            if entry.name not in target or list(target[entry.name].shape) != entry.shape:
                raise CheckpointError(f"{path}: tensor {entry.name} does not fit the layer specs")
            target[entry.name][...] = _array(entry, blob, dtype)
        elif adam is not None:
            moments = adam.m if entry.group == "adam_m" else adam.v
            moments[entry.name] = _array(entry, blob, dtype)

    logger.info(f"Loaded {header.model.id} checkpoint {path}")
    return network, adam, header.metadata


def load_checkpoint(path: Union[str, Path]) -> Network:
    return load_training_state(path)[0]
