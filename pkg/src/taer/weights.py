"""Versioned binary weight container ("TAYW" format).

Layout, all little-endian regardless of host:

  magic    4 bytes  b"TAYW"
  version  u16      currently 1
  variant  u8       0 = taer, 1 = taerlite
  order    u8       expansion order Q
  channels u8       microphones M
  reserved u8       0
  count    u32      number of tensors
  entries  count times:
      name_len u16, name UTF-8 bytes
      dtype    u8   (0 = float32)
      rank     u8, dims u32 * rank
      payload  float32 * prod(dims)
  crc      u32      CRC32 over all payload bytes, in entry order

Tensors are float32 on disk and upcast to float64 in memory; the engine
computes in double precision.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .graph import ModelGraph

MAGIC = b"TAYW"
VERSION = 1
_VARIANT_CODE = {"taer": 0, "taerlite": 1}
_VARIANT_NAME = {v: k for k, v in _VARIANT_CODE.items()}


class ArchiveError(ValueError):
    """Raised for malformed or mismatched weight archives."""


@dataclass
class WeightArchive:
    variant: str
    order: int
    channels: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def total_elements(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def astype64(self) -> dict[str, np.ndarray]:
        return {k: v.astype(np.float64) for k, v in self.tensors.items()}


def save(archive: WeightArchive, path) -> None:
    if archive.variant not in _VARIANT_CODE:
        raise ArchiveError(f"unknown variant {archive.variant!r}")
    crc = 0
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HBBBB", VERSION, _VARIANT_CODE[archive.variant],
                            archive.order, archive.channels, 0))
        f.write(struct.pack("<I", len(archive.tensors)))
        for name, tensor in archive.tensors.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            arr = np.ascontiguousarray(tensor, dtype="<f4")
            f.write(struct.pack("<BB", 0, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            payload = arr.tobytes()
            crc = zlib.crc32(payload, crc)
            f.write(payload)
        f.write(struct.pack("<I", crc))


def load(path) -> WeightArchive:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 14 or data[:4] != MAGIC:
        raise ArchiveError(f"{path}: not a TAYW archive (bad magic)")
    version, var_code, order, channels, _ = struct.unpack_from("<HBBBB", data, 4)
    if version != VERSION:
        raise ArchiveError(f"{path}: unsupported version {version}")
    if var_code not in _VARIANT_NAME:
        raise ArchiveError(f"{path}: unknown variant code {var_code}")
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
            raise ArchiveError(f"{path}: tensor {name}: unsupported dtype {dtype}")
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        payload = data[off : off + 4 * n]
        if len(payload) != 4 * n:
            raise ArchiveError(f"{path}: truncated payload for {name}")
        crc = zlib.crc32(payload, crc)
        if name in tensors:
            raise ArchiveError(f"{path}: duplicate tensor name {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
        off += 4 * n
    if off + 4 > len(data):
        raise ArchiveError(f"{path}: missing CRC trailer")
    (stored_crc,) = struct.unpack_from("<I", data, off)
    if stored_crc != crc:
        raise ArchiveError(f"{path}: CRC mismatch (stored {stored_crc:#x}, computed {crc:#x})")
    return WeightArchive(variant=_VARIANT_NAME[var_code], order=order,
                         channels=channels, tensors=tensors)


@dataclass
class ValidationReport:
    missing: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)
    shape_mismatches: list[str] = field(default_factory=list)
    header_mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing or self.extra or self.shape_mismatches
                    or self.header_mismatches)

    def summary(self) -> str:
        if self.ok:
            return "archive matches graph"
        parts = []
        for label, items in (("missing", self.missing), ("extra", self.extra),
                             ("shape mismatch", self.shape_mismatches),
                             ("header mismatch", self.header_mismatches)):
            parts += [f"{label}: {it}" for it in items]
        return "\n".join(parts)


def validate(archive: WeightArchive, graph: ModelGraph) -> ValidationReport:
    """Cross-check every graph-declared tensor; failures are enumerated."""
    report = ValidationReport()
    if archive.variant != graph.variant:
        report.header_mismatches.append(
            f"variant {archive.variant} != graph {graph.variant}")
    if archive.order != graph.order:
        report.header_mismatches.append(f"order {archive.order} != graph {graph.order}")
    if archive.channels != graph.channels:
        report.header_mismatches.append(
            f"channels {archive.channels} != graph {graph.channels}")
    manifest = graph.weight_manifest()
    for name, shape in manifest.items():
        if name not in archive.tensors:
            report.missing.append(name)
        elif tuple(archive.tensors[name].shape) != tuple(shape):
            report.shape_mismatches.append(
                f"{name}: archive {archive.tensors[name].shape}, graph {tuple(shape)}")
    for name in archive.tensors:
        if name not in manifest:
            report.extra.append(name)
    return report


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if len(shape) >= 2:
        return int(np.prod(shape[1:]))
    return max(shape[0], 1)


def random_weights(graph: ModelGraph, seed: int = 0, weight_scale: float = 1.0,
                   f32: bool = True) -> dict[str, np.ndarray]:
    """Deterministic random weights for tests and probes.

    Matrix/kernel tensors draw from N(0, (scale/sqrt(fan_in))^2); biases
    start at zero, norm gains at one, PReLU slopes at 0.25.
    """
    rng = np.random.default_rng(seed)
    out: dict[str, np.ndarray] = {}
    for name, shape in graph.weight_manifest().items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("b", "bias"):
            arr = np.zeros(shape)
        elif leaf == "gain":
            arr = np.ones(shape)
        elif leaf == "slope":
            arr = np.full(shape, 0.25)
        else:
            arr = rng.normal(0.0, weight_scale / np.sqrt(_fan_in(name, shape)), shape)
        out[name] = arr.astype(np.float32).astype(np.float64) if f32 else arr
    return out


def random_archive(graph: ModelGraph, seed: int = 0,
                   weight_scale: float = 1.0) -> WeightArchive:
    tensors = {k: v.astype(np.float32)
               for k, v in random_weights(graph, seed, weight_scale).items()}
    return WeightArchive(variant=graph.variant, order=graph.order,
                         channels=graph.channels, tensors=tensors)
