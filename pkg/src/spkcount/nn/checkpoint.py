"""Binary checkpoint format.

Layout (little endian)::

    b"SCNT" | u32 version | u32 meta_len | meta (UTF-8 JSON)
    | u32 n_params | n_params x (u16 name_len | name | u32 ndim | ndim x u32 | float32 data)
    | u32 crc32 of everything before it

``meta`` carries the model config, input standardisation and the
optimizer/scheduler state. Files are written deterministically (sorted JSON
keys, parameters in model order), so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from spkcount.nn.model import ModelConfig, SpeakerCounter
from spkcount.nn.optim import SchedulerState

MAGIC = b"SCNT"
VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint is truncated, corrupted, or not a checkpoint at all."""


@dataclass
class Checkpoint:
    model: SpeakerCounter
    scheduler: SchedulerState | None = None
    extra: dict = field(default_factory=dict)


def encode_checkpoint(model: SpeakerCounter, scheduler: SchedulerState | None = None,
                      extra: dict | None = None) -> bytes:
    meta = {
        "model_config": model.config.to_dict(),
        "input_mean": float(model.input_mean),
        "input_std": float(model.input_std),
        "scheduler": asdict(scheduler) if scheduler is not None else None,
        "extra": extra or {},
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(model.params))]
    for name, p in model.params.items():
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack(f"<I{p.data.ndim}I", p.data.ndim, *p.data.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(blob: bytes) -> Checkpoint:
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    version, meta_len = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(blob) < r.pos + meta_len + 8:
        raise CheckpointError("checkpoint truncated")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise CheckpointError("checkpoint checksum mismatch (corrupted or truncated file)")
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint metadata: {e}") from e

    model = SpeakerCounter(ModelConfig(**meta["model_config"]), seed=0)
    model.input_mean, model.input_std = meta["input_mean"], meta["input_std"]
    (n_params,) = r.unpack("<I", "parameter count")
    if n_params != len(model.params):
        raise CheckpointError(f"checkpoint has {n_params} parameters, config implies {len(model.params)}")
    for _ in range(n_params):
        (name_len,) = r.unpack("<H", "parameter name length")
        name = r.take(name_len, "parameter name").decode()
        (ndim,) = r.unpack("<I", "parameter rank")
        shape = r.unpack(f"<{ndim}I", "parameter shape")
        if name not in model.params or model.params[name].data.shape != shape:
            raise CheckpointError(f"unexpected parameter {name} with shape {shape}")
        data = np.frombuffer(r.take(4 * int(np.prod(shape)), f"parameter {name}"), dtype="<f4")
        model.params[name].data[...] = data.reshape(shape)
    if r.pos != len(blob) - 4:
        raise CheckpointError("trailing bytes after checkpoint parameters")

    sched = SchedulerState(**meta["scheduler"]) if meta["scheduler"] else None
    return Checkpoint(model=model, scheduler=sched, extra=meta["extra"])


def save_checkpoint(model: SpeakerCounter, path, scheduler: SchedulerState | None = None,
                    extra: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(model, scheduler, extra))


def read_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def load_checkpoint(path) -> SpeakerCounter:
    return read_checkpoint(path).model
