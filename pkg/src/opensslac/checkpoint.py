"""Binary checkpoints for a generator/discriminator pair.

Layout (all integers little-endian)::

    8 bytes   magic b"OSSLCKPT"
    u32       format version (1)
    u32       header length H
    H bytes   UTF-8 JSON header: {"config": {...}, "meta": {...}}
    u32       record count N
    N records:
        u16   name length, then the UTF-8 name ("generator/0.dense.W", ...)
        u8    ndim, then ndim x u32 dimensions
        float32 payload, row-major

Parameters and buffers (batch-norm running statistics) are stored alike.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"OSSLCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(state: dict, header: dict) -> bytes:
    head = json.dumps(header, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<II", VERSION, len(head)), head, struct.pack("<I", len(state))]
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode(data: bytes):
    """Inverse of :func:`encode`; returns ``(state, header)``."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(bytes(take(hlen)))
    (count,) = struct.unpack("<I", take(4))
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape, dtype=np.int64))
        state[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last record")
    return state, header


def save_checkpoint(path, config, generator, discriminator, meta=None):
    state = {f"generator/{k}": v for k, v in generator.state().items()}
    state.update({f"discriminator/{k}": v for k, v in discriminator.state().items()})
    Path(path).write_bytes(encode(state, {"config": config.to_dict(), "meta": meta or {}}))


def load_checkpoint(path):
    """Returns ``(config, generator, discriminator, meta)`` rebuilt from ``path``."""
    from .trainer import TrainConfig, build_models

    state, header = decode(Path(path).read_bytes())
    config = TrainConfig.from_dict(header["config"])
    generator, discriminator = build_models(config)
    for prefix, model in (("generator/", generator), ("discriminator/", discriminator)):
        model.load_state({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})
    return config, generator, discriminator, header.get("meta", {})
