"""Reader/writer for the engine's TAYW weight container.

Implemented against the documented byte layout (docs/weights.md in the
engine repo), independently of the engine code:

  "TAYW" | version u16 | variant u8 | order u8 | channels u8 | 0 u8 |
  count u32 | entries | crc32(payloads) u32

Entry: name_len u16, name utf-8, dtype u8 (0 = f32), rank u8,
dims u32*rank, little-endian float32 payload.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

MAGIC = b"TAYW"
VERSION = 1
VARIANTS = {"taer": 0, "taerlite": 1}
VARIANT_NAMES = {v: k for k, v in VARIANTS.items()}


class TaywError(ValueError):
    pass


def write_archive(path, variant: str, order: int, channels: int,
                  tensors: dict[str, np.ndarray]) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HBBBB", VERSION, VARIANTS[variant], order, channels, 0)
    blob += struct.pack("<I", len(tensors))
    crc = 0
    for name, tensor in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        blob += struct.pack("<H", len(raw)) + raw
        blob += struct.pack("<BB", 0, arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload = arr.tobytes()
        crc = zlib.crc32(payload, crc)
        blob += payload
    blob += struct.pack("<I", crc)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tayw.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_archive(path):
    """Return (variant, order, channels, {name: float32 array})."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise TaywError(f"{path}: bad magic")
    version, var_code, order, channels, _ = struct.unpack_from("<HBBBB", data, 4)
    if version != VERSION:
        raise TaywError(f"{path}: unsupported version {version}")
    (count,) = struct.unpack_from("<I", data, 10)
    off = 14
    tensors: dict[str, np.ndarray] = {}
    crc = 0
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        dtype, rank = struct.unpack_from("<BB", data, off)
        off += 2
        if dtype != 0:
            raise TaywError(f"{path}: {name}: unsupported dtype {dtype}")
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        payload = data[off : off + 4 * n]
        crc = zlib.crc32(payload, crc)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        off += 4 * n
    (stored,) = struct.unpack_from("<I", data, off)
    if stored != crc:
        raise TaywError(f"{path}: CRC mismatch")
    return VARIANT_NAMES[var_code], order, channels, tensors
