"""
Binary checkpoint container.

Layout (little-endian)::

    magic "JMTCKPT\\0" | u32 version | u32 metadata length | metadata JSON
    u32 tensor count
    per tensor: u16 name length | name (utf-8) | u8 ndim | u32 dims[ndim] | float64 payload
    u32 CRC32 of every preceding byte

Tensor names are prefixed ``param/``, ``best/`` or ``optim/``. Metadata
holds the config hash and JSON, epoch counters, the best validation metric
and the metric history, so a run can resume exactly where it stopped.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"JMTCKPT\x00"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config_hash: str
    epoch: int
    params: dict[str, np.ndarray]
    optimizer_state: dict = field(default_factory=lambda: {"steps": 0, "lr": 0.0, "buffers": {}})
    best_params: dict[str, np.ndarray] = field(default_factory=dict)
    best_metric: float | None = None
    best_epoch: int = -1
    meta: dict = field(default_factory=dict)


def dumps_checkpoint(ck: Checkpoint) -> bytes:
    meta = {
        "config_hash": ck.config_hash,
        "epoch": ck.epoch,
        "best_metric": ck.best_metric,
        "best_epoch": ck.best_epoch,
        "optimizer": {"steps": ck.optimizer_state["steps"], "lr": ck.optimizer_state["lr"]},
        "meta": ck.meta,
    }
    tensors = [(f"param/{k}", v) for k, v in ck.params.items()]
    tensors += [(f"best/{k}", v) for k, v in ck.best_params.items()]
    tensors += [(f"optim/{k}", v) for k, v in ck.optimizer_state["buffers"].items()]
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    fh = io.BytesIO()
    fh.write(MAGIC)
    fh.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
    fh.write(meta_bytes)
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        nb = name.encode()
        arr = np.asarray(arr, dtype=np.float64)
        fh.write(struct.pack("<H", len(nb)) + nb)
        fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = fh.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(ck: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps_checkpoint(ck))
    tmp.replace(path)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"checkpoint truncated reading {what} at offset {self.pos} "
                                  f"(need {n} bytes, {len(self.buf) - self.pos} left)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads_checkpoint(buf: bytes) -> Checkpoint:
    """Parse and validate the whole buffer before building anything."""
    c = _Cursor(buf)
    if c.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic at offset 0")
    (version,) = c.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at offset {len(MAGIC)}")
    if len(buf) < c.pos + 4:
        raise CheckpointError(f"checkpoint truncated at offset {len(buf)}")
    (crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != crc:
        raise CheckpointError(f"checksum mismatch (file of {len(buf)} bytes, checksum at offset {len(buf) - 4}); "
                              "the file is truncated or corrupt")
    c.buf = buf[:-4]
    (n_meta,) = c.unpack("<I", "metadata length")
    start = c.pos
    try:
        meta = json.loads(c.take(n_meta, "metadata"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad metadata JSON at offset {start}: {exc}") from None
    (count,) = c.unpack("<I", "tensor count")
    groups = {"param": {}, "best": {}, "optim": {}}
    for _ in range(count):
        at = c.pos
        (n_name,) = c.unpack("<H", "tensor name length")
        name = c.take(n_name, "tensor name").decode()
        (ndim,) = c.unpack("<B", f"ndim of {name}")
        shape = c.unpack(f"<{ndim}I", f"shape of {name}")
        size = int(np.prod(shape))
        arr = np.frombuffer(c.take(8 * size, f"payload of {name}"), dtype="<f8").astype(np.float64).reshape(shape)
        group, _, key = name.partition("/")
        if group not in groups:
            raise CheckpointError(f"unknown tensor group in {name!r} at offset {at}")
        groups[group][key] = arr
    if c.pos != len(c.buf):
        raise CheckpointError(f"unexpected trailing bytes at offset {c.pos}")
    opt = {"steps": meta["optimizer"]["steps"], "lr": meta["optimizer"]["lr"], "buffers": groups["optim"]}
    return Checkpoint(meta["config_hash"], meta["epoch"], groups["param"], opt, groups["best"],
                      meta["best_metric"], meta["best_epoch"], meta.get("meta", {}))


def load_checkpoint(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    return loads_checkpoint(buf)
