"""MLEC binary checkpoints.

Little-endian layout::

    b"MLEC" | u32 version
    u32 n | n bytes UTF-8 "key=value" lines (values are JSON)
    u32 count
    count x ( u32 name_len | name UTF-8 | u32 ndim | ndim x u32 dims | prod(dims) x f64 )

Keys prefixed ``model.`` hold the :class:`ModelConfig`; any other key is
free-form metadata (vocabulary, epoch, ...).  The same layout stores
optimizer state, with moment tensors in place of parameters.
"""

from __future__ import annotations

import json
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from .config import ModelConfig
from .params import ModelParams

MAGIC = b"MLEC"
VERSION = 1
PathLike = Union[str, Path]


class CheckpointError(ValueError):
    pass


def encode_header(values: Mapping[str, object]) -> str:
    lines = []
    for key, value in values.items():
        if "=" in key or "\n" in key:
            raise CheckpointError(f"invalid header key {key!r}")
        lines.append(f"{key}={json.dumps(value, ensure_ascii=False, sort_keys=True)}")
    return "\n".join(lines)


def decode_header(text: str) -> Dict[str, object]:
    out = {}
    for line in text.split("\n"):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"bad header line {line!r}")
        out[key] = json.loads(value)
    return out


def write_tensors(path: PathLike, header: Mapping[str, object], tensors: Mapping[str, np.ndarray]) -> None:
    """Write atomically: a crash leaves the previous file intact."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    head = encode_header(header).encode("utf-8")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(head)) + head)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def read_tensors(path: PathLike):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an MLEC file")
    pos = 4

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, blob, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (version,) = take("<I")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported MLEC version {version}")
        (n,) = take("<I")
        header = decode_header(blob[pos : pos + n].decode("utf-8"))
        pos += n
        (count,) = take("<I")
        tensors = OrderedDict()
        for _ in range(count):
            (n,) = take("<I")
            name = blob[pos : pos + n].decode("utf-8")
            pos += n
            (ndim,) = take("<I")
            shape = take(f"<{ndim}I")
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(blob):
                raise CheckpointError(f"{path}: truncated data for {name}")
            tensors[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except struct.error as err:
        raise CheckpointError(f"{path}: truncated file") from err
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return header, tensors


@dataclass
class Checkpoint:
    params: ModelParams
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.params.config


def save_checkpoint(path: PathLike, params: ModelParams, meta: Mapping[str, object] = None) -> None:
    header = {f"model.{k}": v for k, v in params.config.to_dict().items()}
    for k, v in (meta or {}).items():
        if k.startswith("model."):
            raise CheckpointError("metadata keys may not use the model. prefix")
        header[k] = v
    write_tensors(path, header, params.arrays())


def load_checkpoint(path: PathLike) -> Checkpoint:
    if not Path(path).exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    header, tensors = read_tensors(path)
    cfg = {k[len("model.") :]: v for k, v in header.items() if k.startswith("model.")}
    meta = {k: v for k, v in header.items() if not k.startswith("model.")}
    try:
        params = ModelParams.from_arrays(ModelConfig.from_dict(cfg), tensors)
    except ValueError as err:
        raise CheckpointError(f"{path}: {err}") from err
    return Checkpoint(params, meta)
