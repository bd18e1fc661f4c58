"""Binary model checkpoints.

Layout: magic "MSCN", format version (u16 LE), a length-prefixed UTF-8 JSON
text carrying the architecture and training provenance, the parameter
arrays as little-endian float32 in spec order (per layer: w, b, bn_scale,
bn_shift, bn_mean, bn_var), and a trailing CRC32 over everything before it.
All content is deterministic, so identical models serialize to identical
bytes and save -> load -> save round-trips exactly.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nn import ArchitectureSpec, LayerSpec, param_shapes

MAGIC = b"MSCN"
FORMAT_VERSION = 1

_ARRAY_ORDER = ("w", "b", "bn_scale", "bn_shift", "bn_mean", "bn_var")


@dataclass
class ModelCheckpoint:
    spec: ArchitectureSpec
    params: dict
    provenance: dict
    version: int = FORMAT_VERSION


def _spec_to_dict(spec: ArchitectureSpec) -> dict:
    d = asdict(spec)
    d["shared"] = [asdict(l) for l in spec.shared]
    d["head"] = [asdict(l) for l in spec.head]
    return d


def _spec_from_dict(d: dict) -> ArchitectureSpec:
    return ArchitectureSpec(
        shared=tuple(LayerSpec(**l) for l in d["shared"]),
        head=tuple(LayerSpec(**l) for l in d["head"]),
        in_channels=d["in_channels"],
        n_classes=d["n_classes"],
        batch_size=d["batch_size"],
        weight_decay=d["weight_decay"],
    )


def checkpoint_bytes(ckpt: ModelCheckpoint) -> bytes:
    header = json.dumps(
        {"architecture": _spec_to_dict(ckpt.spec), "provenance": ckpt.provenance},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<H", ckpt.version),
             struct.pack("<I", len(header)), header]
    for name, entry in param_shapes(ckpt.spec).items():
        for key in _ARRAY_ORDER:
            if key in entry:
                arr = ckpt.params[name][key]
                if arr.shape != entry[key]:
                    raise CheckpointError(
                        f"{name}.{key} has shape {arr.shape}, spec wants {entry[key]}")
                parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(ckpt))
    return path


def checkpoint_from_bytes(blob: bytes) -> ModelCheckpoint:
    if len(blob) < 14:
        raise CheckpointError("file too short to be a checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic bytes; not a checkpoint file")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError("checksum mismatch; file truncated or corrupt")
    version = struct.unpack("<H", blob[4:6])[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    hlen = struct.unpack("<I", blob[6:10])[0]
    try:
        meta = json.loads(blob[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint header: {e}")
    spec = _spec_from_dict(meta["architecture"])

    offset = 10 + hlen
    params: dict = {}
    for name, entry in param_shapes(spec).items():
        arrays = {}
        for key in _ARRAY_ORDER:
            if key in entry:
                n = int(np.prod(entry[key]))
                raw = blob[offset:offset + 4 * n]
                if len(raw) != 4 * n:
                    raise CheckpointError("parameter data truncated")
                arrays[key] = np.frombuffer(raw, dtype="<f4").reshape(entry[key]).copy()
                offset += 4 * n
        params[name] = arrays
    if offset != len(blob) - 4:
        raise CheckpointError("trailing bytes after parameter data")
    return ModelCheckpoint(spec=spec, params=params,
                           provenance=meta["provenance"], version=version)


def load_checkpoint(path) -> ModelCheckpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint: {e}")
    return checkpoint_from_bytes(blob)
