"""Binary checkpoint format.

Layout::

    b"HXNC" | uint32 version (=1) | uint64 header length | JSON header | payload

All integers are little-endian. The JSON header (sorted keys, compact) holds
the model config, the tensor table (name, shape, byte offset), training
metadata and CRC32 checksums of the payload and of the header itself. The
payload is the raw little-endian float32 data of every tensor in table order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ndnum as nd
from .model import MilModel, ModelConfig, param_shapes

MAGIC = b"HXNC"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class HeaderCorruptError(CheckpointError):
    pass


class TensorTableError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    model: MilModel
    metadata: dict = field(default_factory=dict)


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def to_bytes(model: MilModel, metadata: dict | None = None) -> bytes:
    table = []
    chunks = []
    offset = 0
    for name, t in model.params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(t.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": VERSION,
        "model_config": model.config.to_dict(),
        "tensors": table,
        "metadata": metadata or {},
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    header["header_crc32"] = zlib.crc32(_dumps(header))
    hbytes = _dumps(header)
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def save_checkpoint(model: MilModel, path, metadata: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(model, metadata))


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < _PREFIX.size:
        raise TruncatedCheckpointError(f"file is {len(blob)} bytes, shorter than the fixed prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise TruncatedCheckpointError(f"header needs {hlen} bytes, only {len(blob) - start} present")
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderCorruptError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or "header_crc32" not in header:
        raise HeaderCorruptError("header lacks a checksum")
    claimed = header.pop("header_crc32")
    if claimed != zlib.crc32(_dumps(header)):
        raise HeaderCorruptError("header checksum mismatch")
    if header.get("format_version") != VERSION:
        raise VersionMismatchError(f"header declares version {header.get('format_version')}")

    payload = blob[start + hlen :]
    declared = header["payload_bytes"]
    if len(payload) < declared:
        raise TruncatedCheckpointError(f"payload has {len(payload)} of {declared} bytes")
    if len(payload) > declared:
        raise TensorTableError(f"{len(payload) - declared} trailing bytes after payload")
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError("payload checksum mismatch")

    try:
        config = ModelConfig.from_dict(header["model_config"])
    except (TypeError, ValueError) as exc:
        raise TensorTableError(f"invalid model config: {exc}") from None
    expected = param_shapes(config)
    table = header["tensors"]
    if [(e["name"], tuple(e["shape"])) for e in table] != expected:
        raise TensorTableError("tensor table does not match the model config")
    store = nd.ParamStore()
    offset = 0
    for entry, (name, shape) in zip(table, expected):
        if entry["offset"] != offset:
            raise TensorTableError(f"{name}: offset {entry['offset']} != expected {offset}")
        nbytes = 4 * int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset).astype(np.float32)
        store.add(name, arr.reshape(shape))
        offset += nbytes
    if offset != declared:
        raise TensorTableError(f"tensor table covers {offset} bytes, payload has {declared}")
    return Checkpoint(MilModel(config, store), header.get("metadata", {}))


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    return from_bytes(blob)
