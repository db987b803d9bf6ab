"""Versioned binary checkpoints.

Layout (little-endian)::

    4s   magic b"MLCK"
    u32  version (= 1)
    u32  epochs completed
    u64  optimiser step count
    f64  best dev WER (NaN when no dev set was used)
    u32  n, then n bytes: training config as key=value text (UTF-8)
    u32  n, then n bytes: RNG bit-generator state as JSON (UTF-8)
    u32  parameter count P
    P x  u16 name length, name (UTF-8), u8 ndim, ndim x u32 dims,
         f64[size] value, f64[size] Adam first moment, f64[size] Adam second moment

Parameters appear in lexicographic order of their names. Everything is
stored at full float64 precision so that resuming is bit-exact.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig, format_config, parse_config, RunConfig
from .params import ParamStore

MAGIC = b"MLCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_step: int
    epoch: int
    rng_state: dict
    best_dev_wer: float | None = None

    @classmethod
    def from_state(cls, config, params: ParamStore, opt, epoch: int, rng: np.random.Generator,
                   best_dev_wer: float | None = None) -> "Checkpoint":
        return cls(
            config=config,
            params=params.snapshot(),
            adam_m={n: a.copy() for n, a in opt.m.items()},
            adam_v={n: a.copy() for n, a in opt.v.items()},
            adam_step=opt.step_count,
            epoch=epoch,
            rng_state=json.loads(json.dumps(rng.bit_generator.state)),
            best_dev_wer=best_dev_wer,
        )

    def restore(self):
        """Fresh (ParamStore, Adam, Generator) reproducing the saved state."""
        from .train import Adam

        store = ParamStore({n: a.copy() for n, a in self.params.items()})
        opt = Adam(store)
        opt.m = {n: a.copy() for n, a in self.adam_m.items()}
        opt.v = {n: a.copy() for n, a in self.adam_v.items()}
        opt.step_count = self.adam_step
        bitgen = getattr(np.random, self.rng_state["bit_generator"])()
        bitgen.state = self.rng_state
        return store, opt, np.random.Generator(bitgen)

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        best = math.nan if self.best_dev_wer is None else float(self.best_dev_wer)
        buf.write(struct.pack("<4sIIQd", MAGIC, VERSION, self.epoch, self.adam_step, best))
        for blob in (format_config(RunConfig(train=self.config)).encode("utf-8"),
                     json.dumps(self.rng_state, sort_keys=True).encode("utf-8")):
            buf.write(struct.pack("<I", len(blob)))
            buf.write(blob)
        names = sorted(self.params)
        buf.write(struct.pack("<I", len(names)))
        for name in names:
            value = self.params[name]
            raw = name.encode("utf-8")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
            buf.write(struct.pack("<B", value.ndim))
            buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
            for arr in (value, self.adam_m[name], self.adam_v[name]):
                buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        r = _Reader(data)
        magic, version, epoch, step, best = r.unpack("<4sIIQd")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        config = parse_config(r.blob().decode("utf-8")).train
        rng_state = json.loads(r.blob().decode("utf-8"))
        (count,) = r.unpack("<I")
        params, m, v = {}, {}, {}
        for _ in range(count):
            (nlen,) = r.unpack("<H")
            name = r.take(nlen).decode("utf-8")
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            size = int(np.prod(shape)) if ndim else 1
            arrays = [np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
                      for _ in range(3)]
            params[name], m[name], v[name] = arrays
        if r.pos != len(data):
            raise CheckpointError(f"{len(data) - r.pos} trailing bytes")
        return cls(config, params, m, v, step, epoch, rng_state,
                   None if math.isnan(best) else best)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def blob(self) -> bytes:
        (n,) = self.unpack("<I")
        return self.take(n)
