"""Binary feature files and dataset directories.

File layout (little-endian)::

    offset  size      field
    0       4         magic b"MLTS"
    4       4         version (u32, = 1)
    8       4         T  (u32, frame count)
    12      4         C  (u32, channels)
    16      4         L  (u32, label count)
    20      4*L       label ids (u32)
    20+4L   4*T*C     features (f32, row-major T x C)

A dataset directory holds ``vocab.txt`` (one gloss per line, line 0 is
``<blank>``) and ``*.mlts`` files, optionally split into ``train/`` and
``dev/`` subdirectories.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .synth import BLANK, GlossVocabulary, LabeledSample

MAGIC = b"MLTS"
VERSION = 1
SUFFIX = ".mlts"
_HEADER = struct.Struct("<4sIIII")


class FeatureFileError(ValueError):
    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.offset = offset
        self.path = path


def encode_features(sample: LabeledSample) -> bytes:
    feats = sample.features
    as32 = feats.astype("<f4")
    if not np.array_equal(as32.astype(np.float64), feats):
        raise ValueError("features are not exactly representable as float32; round them first")
    T, C = feats.shape
    head = _HEADER.pack(MAGIC, VERSION, T, C, len(sample.labels))
    labels = np.asarray(sample.labels, dtype="<u4").tobytes()
    return head + labels + as32.tobytes()


def decode_features(buf: bytes, vocab_size: int | None = None, path=None) -> LabeledSample:
    if len(buf) < _HEADER.size:
        raise FeatureFileError(f"truncated header: {len(buf)} bytes", len(buf), path)
    magic, version, T, C, L = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FeatureFileError(f"bad magic {magic!r}, expected {MAGIC!r}", 0, path)
    if version != VERSION:
        raise FeatureFileError(f"unsupported version {version}", 4, path)
    if T < 1 or C < 1:
        raise FeatureFileError(f"empty feature matrix T={T} C={C}", 8, path)
    if L < 1:
        raise FeatureFileError("empty label sequence", 16, path)
    lab_off = _HEADER.size
    feat_off = lab_off + 4 * L
    end = feat_off + 4 * T * C
    if len(buf) < end:
        raise FeatureFileError(f"truncated file: need {end} bytes, have {len(buf)}", len(buf), path)
    if len(buf) > end:
        raise FeatureFileError(f"{len(buf) - end} trailing bytes", end, path)
    labels = np.frombuffer(buf, dtype="<u4", count=L, offset=lab_off)
    for i, lab in enumerate(labels):
        if lab == BLANK:
            raise FeatureFileError("label is the blank id", lab_off + 4 * i, path)
        if vocab_size is not None and lab >= vocab_size:
            raise FeatureFileError(f"label id {lab} >= vocabulary size {vocab_size}",
                                   lab_off + 4 * i, path)
    feats = np.frombuffer(buf, dtype="<f4", count=T * C, offset=feat_off).reshape(T, C)
    if not np.all(np.isfinite(feats)):
        raise FeatureFileError("non-finite feature values", feat_off, path)
    return LabeledSample(feats.astype(np.float64), tuple(int(x) for x in labels))


def write_features(path, sample: LabeledSample) -> None:
    Path(path).write_bytes(encode_features(sample))


def read_features(path, vocab_size: int | None = None) -> LabeledSample:
    return decode_features(Path(path).read_bytes(), vocab_size, path)


def write_vocab(path, vocab: GlossVocabulary) -> None:
    Path(path).write_text("\n".join(vocab.names) + "\n", encoding="utf-8")


def read_vocab(path) -> GlossVocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return GlossVocabulary(tuple(line.strip() for line in lines))


def write_dataset(directory, samples: list[LabeledSample]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(samples))))
    for i, s in enumerate(samples):
        write_features(d / f"{i:0{width}d}{SUFFIX}", s)


def read_dataset(directory, vocab_size: int | None = None) -> list[LabeledSample]:
    files = sorted(Path(directory).glob(f"*{SUFFIX}"))
    return [read_features(f, vocab_size) for f in files]


def find_vocab(start) -> GlossVocabulary:
    """Look for vocab.txt in ``start`` (file's directory) and its parent."""
    p = Path(start)
    base = p if p.is_dir() else p.parent
    for cand in (base / "vocab.txt", base.parent / "vocab.txt"):
        if cand.exists():
            return read_vocab(cand)
    raise FileNotFoundError(f"no vocab.txt next to {start}")
