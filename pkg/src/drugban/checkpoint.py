"""
Binary parameter checkpoints.

Layout (little-endian)::

    b"DRUGBAN\\0"  magic
    u32            format version (1)
    u32 + bytes    configuration record, JSON with sorted keys
    u32            number of parameters
    per parameter:
        u16 + bytes  name (utf-8)
        u8           ndim
        u32 * ndim   shape
        f32 * size   payload, C order
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError

MAGIC = b"DRUGBAN\0"
VERSION = 1


def save_checkpoint(path, state: dict, config: dict):
    cfg = json.dumps(config, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(state))]
    for name, arr in state.items():
        arr = np.asarray(arr, dtype="<f4", order="C")
        key = name.encode()
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Returns ``(state, config)`` where ``state`` maps names to float32 arrays."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    try:
        return _decode(buf)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint ({exc})") from None


def _decode(buf):
    pos = 8
    version, n_cfg = struct.unpack_from("<II", buf, pos)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos += 8
    config = json.loads(buf[pos:pos + n_cfg])
    pos += n_cfg
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    state = {}
    for _ in range(count):
        (n_name,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + n_name].decode()
        pos += n_name
        (ndim,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
    if pos != len(buf):
        raise ValueError("trailing bytes")
    return state, config
