"""LUMC checkpoint container.

Layout (little-endian): magic ``LUMC``, u16 version, u32 tensor count, then per
tensor u16 name length + UTF-8 name, u8 rank, rank x u32 dims, f32 data; then
the config echo as u32 length + UTF-8 JSON. Optimizer moments travel as
ordinary tensors under the ``opt.m/`` and ``opt.v/`` prefixes; the step and
rng counter live in the echo.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LUMC"
VERSION = 1
_HEAD = struct.Struct("<4sHI")
_M, _V = "opt.m/", "opt.v/"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict                        # parameter name -> float32 array
    config: dict = field(default_factory=dict)
    moments: dict = field(default_factory=dict)   # {"m": {...}, "v": {...}} or empty
    step: int = 0
    rng_counter: int = 0

    def model_config(self):
        from ..model import ModelConfig
        return ModelConfig.from_dict(self.config.get("model", {}))


def _pack_tensor(out, name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    raw = name.encode("utf-8")
    out += struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()


def to_bytes(ckpt):
    entries = list(ckpt.tensors.items())
    if ckpt.moments:
        entries += [(_M + k, v) for k, v in ckpt.moments["m"].items()]
        entries += [(_V + k, v) for k, v in ckpt.moments["v"].items()]
    out = bytearray(_HEAD.pack(MAGIC, VERSION, len(entries)))
    for name, arr in entries:
        _pack_tensor(out, name, arr)
    echo = dict(ckpt.config, _step=int(ckpt.step), _rng_counter=int(ckpt.rng_counter))
    raw = json.dumps(echo, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out += struct.pack("<I", len(raw)) + raw
    return bytes(out)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def from_bytes(buf):
    r = _Reader(buf)
    magic, version, count = r.unpack(_HEAD.format)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors, m, v = {}, {}, {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = bytes(r.take(n)).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
        if name.startswith(_M):
            m[name[len(_M):]] = arr
        elif name.startswith(_V):
            v[name[len(_V):]] = arr
        else:
            tensors[name] = arr
    (n,) = r.unpack("<I")
    try:
        echo = json.loads(bytes(r.take(n)).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"config echo is not valid JSON: {exc}") from None
    if r.pos != len(r.buf):
        raise CheckpointError(f"{len(r.buf) - r.pos} trailing bytes after checkpoint")
    step = echo.pop("_step", 0)
    counter = echo.pop("_rng_counter", 0)
    moments = {"m": m, "v": v} if m or v else {}
    return Checkpoint(tensors, echo, moments, step, counter)


def save(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def check_compatible(ckpt, model, ignore=()):
    """Raise listing every tensor whose presence or shape disagrees with ``model``."""
    own = {k: p.shape for k, p in model.named_parameters() if not k.startswith(tuple(ignore))}
    theirs = {k: v.shape for k, v in ckpt.tensors.items() if not k.startswith(tuple(ignore))}
    problems = [f"{k}: model {own[k]}, checkpoint {theirs[k]}"
                for k in sorted(own) if k in theirs and own[k] != theirs[k]]
    problems += [f"{k}: missing from checkpoint" for k in sorted(set(own) - set(theirs))]
    problems += [f"{k}: not in model" for k in sorted(set(theirs) - set(own))]
    if problems:
        raise CheckpointError("checkpoint does not fit the model: " + "; ".join(problems))
