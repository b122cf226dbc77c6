"""Recording container and its little-endian binary file format.

Layout (one recording per file)::

    "LUM1" | u16 version=1 | u16 C | u64 T | f32 fs | u8 label_present | i32 label
    | u16 len + utf8 subject
    | C x (u16 len + utf8 name + 3 x f32 coord)
    | C*T f32 samples, row-major
"""
import struct
from dataclasses import dataclass, field

import numpy as np

from .montage import Montage

MAGIC = b"LUM1"
VERSION = 1
_HEAD = struct.Struct("<4sHHQfBi")


class FormatError(ValueError):
    pass


@dataclass
class Recording:
    montage: Montage
    fs: float
    samples: np.ndarray          # (C, T) float32
    label: int | None = None
    subject: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.montage.C:
            raise ValueError(f"samples must be (C={self.montage.C}, T), got {self.samples.shape}")
        if self.samples.shape[1] == 0:
            raise ValueError("recording has no samples")
        if not np.isfinite(self.samples).all():
            raise ValueError("recording contains non-finite samples")
        if self.fs <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")

    @property
    def T(self):
        return self.samples.shape[1]

    def replace(self, **changes):
        kw = dict(montage=self.montage, fs=self.fs, samples=self.samples,
                  label=self.label, subject=self.subject, meta=dict(self.meta))
        kw.update(changes)
        return Recording(**kw)


def _str(s):
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def to_bytes(rec):
    parts = [_HEAD.pack(MAGIC, VERSION, rec.montage.C, rec.T, float(rec.fs),
                        int(rec.label is not None), int(rec.label or 0)),
             _str(rec.subject)]
    for name, xyz in zip(rec.montage.names, rec.montage.coords):
        parts.append(_str(name))
        parts.append(np.asarray(xyz, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(rec.samples, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated recording: need {n} bytes at offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def string(self):
        (n,) = struct.unpack("<H", self.take(2))
        return self.take(n).decode("utf-8")


def from_bytes(buf):
    r = _Reader(memoryview(buf).tobytes())
    magic, version, c, t, fs, has_label, label = _HEAD.unpack(r.take(_HEAD.size))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported recording version {version}")
    subject = r.string()
    names, coords = [], []
    for _ in range(c):
        names.append(r.string())
        coords.append(np.frombuffer(r.take(12), dtype="<f4"))
    samples = np.frombuffer(r.take(4 * c * t), dtype="<f4").reshape(c, t)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after recording")
    return Recording(Montage(tuple(names), np.stack(coords)), float(fs),
                     samples.astype(np.float32), int(label) if has_label else None, subject)


def save(rec, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(rec))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
