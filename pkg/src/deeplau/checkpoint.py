"""Named-tensor checkpoint archive.

Layout (all integers little-endian)::

    b"DLAUCKPT"  u32 version
    u32 manifest length, manifest (UTF-8 JSON, sorted keys)
    u32 tensor count
    per tensor: u16 name length, name (UTF-8), u32 rows, u32 cols,
                u8 element type (1 = float32, 2 = float64), rows*cols payload

The payload is the row-major little-endian array, so loading and saving
again reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"DLAUCKPT"
VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class CheckpointError(ValueError):
    """Malformed archive or an archive that does not match the expected model."""


def vocab_fingerprint(tokens) -> str:
    return hashlib.sha256("\n".join(tokens).encode("utf-8")).hexdigest()


def encode_archive(manifest: Mapping, tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    man = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts += [struct.pack("<I", len(man)), man, struct.pack("<I", len(tensors))]
    for name, t in tensors.items():
        t = np.asarray(t)
        if t.ndim != 2:
            raise CheckpointError(f"tensor {name!r} is not 2-D")
        code = _CODES.get(t.dtype)
        if code is None:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {t.dtype}")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw,
                  struct.pack("<IIB", t.shape[0], t.shape[1], code),
                  np.ascontiguousarray(t, dtype=_DTYPES[code]).tobytes()]
    return b"".join(parts)


def decode_archive(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    view = memoryview(data)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError("not a checkpoint archive (bad magic)")
    pos = 8
    try:
        (version,) = struct.unpack_from("<I", view, pos)
        if version != VERSION:
            raise CheckpointError(f"unsupported archive version {version}")
        (mlen,) = struct.unpack_from("<I", view, pos + 4)
        pos += 8
        manifest = json.loads(bytes(view[pos:pos + mlen]).decode("utf-8"))
        pos += mlen
        (count,) = struct.unpack_from("<I", view, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", view, pos)
            name = bytes(view[pos + 2:pos + 2 + nlen]).decode("utf-8")
            pos += 2 + nlen
            rows, cols, code = struct.unpack_from("<IIB", view, pos)
            pos += 9
            dt = _DTYPES[code]
            size = rows * cols * dt.itemsize
            if pos + size > len(view):
                raise CheckpointError("truncated archive")
            tensors[name] = np.frombuffer(view[pos:pos + size], dtype=dt).reshape(rows, cols).copy()
            pos += size
    except (struct.error, KeyError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt archive: {exc}") from exc
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return manifest, tensors


def save(path, manifest: Mapping, tensors: Mapping[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_archive(manifest, tensors))
    tmp.replace(path)


def load(path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_archive(Path(path).read_bytes())


def assign(targets: Mapping[str, np.ndarray], loaded: Mapping[str, np.ndarray], prefix: str = "") -> None:
    """Copy ``loaded[prefix + name]`` into each target array, checking names and shapes."""
    for name, dst in targets.items():
        key = prefix + name
        if key not in loaded:
            raise CheckpointError(f"checkpoint lacks tensor {key!r}")
        src = loaded[key]
        if src.shape != dst.shape:
            raise CheckpointError(f"tensor {key!r} has shape {src.shape}, expected {dst.shape}")
        dst[...] = src
