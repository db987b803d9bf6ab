"""Synthetic frame-feature sequences with variable-duration glosses.

Each gloss id owns a fixed template vector. A sample strings together noisy
copies of the chosen glosses' templates, one gloss after another, with a few
near-zero "transition" frames in between. Frames of the same gloss are
therefore far more cosine-similar to each other than to other glosses'
frames, which is the structure the similarity selector relies on.

Feature sequences are plain ``(T, C)`` float64 arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BLANK = 0
BLANK_NAME = "<blank>"


@dataclass(frozen=True)
class GlossVocabulary:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) < 2:
            raise ValueError("vocabulary needs the blank plus at least one gloss")
        if self.names[0] != BLANK_NAME:
            raise ValueError(f"vocabulary entry 0 must be {BLANK_NAME!r}, got {self.names[0]!r}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("vocabulary names must be unique")

    @classmethod
    def synthetic(cls, size: int) -> "GlossVocabulary":
        return cls((BLANK_NAME,) + tuple(f"G{i:03d}" for i in range(1, size)))

    def __len__(self) -> int:
        return len(self.names)

    def decode(self, ids) -> list[str]:
        return [self.names[i] for i in ids]


@dataclass
class LabeledSample:
    features: np.ndarray
    labels: tuple[int, ...]
    # generation metadata only; not persisted in feature files
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = tuple(int(x) for x in self.labels)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"features must be (T>=1, C), got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if not self.labels:
            raise ValueError("label sequence is empty")
        if any(x == BLANK for x in self.labels):
            raise ValueError("labels must not contain the blank id")

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.features, other.features)


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 13
    channels: int = 16
    min_duration: int = 4
    max_duration: int = 14
    noise: float = 0.5
    min_transition: int = 1
    max_transition: int = 3
    transition_scale: float = 0.05
    min_glosses: int = 2
    max_glosses: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 1 <= self.min_duration <= self.max_duration:
            raise ValueError("need 1 <= min_duration <= max_duration")
        if not 0 <= self.min_transition <= self.max_transition:
            raise ValueError("need 0 <= min_transition <= max_transition")
        if self.noise < 0 or self.transition_scale < 0:
            raise ValueError("noise levels must be non-negative")
        if not 1 <= self.min_glosses <= self.max_glosses:
            raise ValueError("need 1 <= min_glosses <= max_glosses")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")


def gloss_templates(config: SynthConfig) -> np.ndarray:
    """(vocab_size, C) template table; row 0 (blank) is all zeros."""
    rng = np.random.default_rng([config.seed, 0x7E3])
    table = rng.standard_normal((config.vocab_size, config.channels))
    table[0] = 0.0
    return table


def synth_sample(config: SynthConfig, num_glosses: int, rng) -> LabeledSample:
    """Generate one labelled sequence.

    ``rng`` is an int seed or a ``numpy.random.Generator``; with an int the
    sample is a pure function of ``(config, num_glosses, rng)``.
    """
    if num_glosses < 1:
        raise ValueError("num_glosses must be >= 1")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng([config.seed, seed])
    templates = gloss_templates(config)
    labels = rng.integers(1, config.vocab_size, size=num_glosses)
    frames = []
    for i, g in enumerate(labels):
        if i:
            n_tr = int(rng.integers(config.min_transition, config.max_transition + 1))
            frames.append(config.transition_scale * rng.standard_normal((n_tr, config.channels)))
        d = int(rng.integers(config.min_duration, config.max_duration + 1))
        noise = config.noise * rng.standard_normal((d, config.channels))
        frames.append(templates[g] + noise)
    feats = np.concatenate(frames, axis=0)
    # keep values exactly representable in the float32 file format
    feats = feats.astype(np.float32).astype(np.float64)
    return LabeledSample(feats, tuple(int(x) for x in labels), seed)


def synth_dataset(config: SynthConfig, count: int, offset: int = 0) -> list[LabeledSample]:
    """``count`` samples with per-sample seeds ``offset .. offset+count-1``."""
    out = []
    for i in range(offset, offset + count):
        rng = np.random.default_rng([config.seed, i])
        n = int(rng.integers(config.min_glosses, config.max_glosses + 1))
        sample = synth_sample(config, n, rng)
        sample.seed = i
        out.append(sample)
    return out


def temporal_rescale(features: np.ndarray, factor: float) -> np.ndarray:
    """Resample to ``max(1, round(T * factor))`` frames by linear interpolation.

    Sample positions are anchored at both ends, so the first and last frames
    are preserved whenever the output has at least two frames.
    """
    if not math.isfinite(factor):
        raise ValueError(f"rescale factor must be finite, got {factor}")
    if not 0.5 <= factor <= 2.0:
        raise ValueError(f"rescale factor {factor} outside [0.5, 2.0]")
    features = np.asarray(features, dtype=np.float64)
    T = features.shape[0]
    new_t = max(1, int(math.floor(T * factor + 0.5)))
    if new_t == T:
        return features.copy()
    if new_t == 1 or T == 1:
        return np.repeat(features[:1], new_t, axis=0)
    # multiply before dividing so the last position is exactly T-1
    pos = np.arange(new_t) * (T - 1) / (new_t - 1)
    lo = np.minimum(np.floor(pos).astype(int), T - 2)
    frac = (pos - lo)[:, None]
    return (1.0 - frac) * features[lo] + frac * features[lo + 1]


def pad_short_sequence(features: np.ndarray, min_len: int) -> np.ndarray:
    """Repeat the last frame until the sequence has ``min_len`` frames."""
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    T = features.shape[0]
    if T >= min_len:
        return features
    tail = np.repeat(features[-1:], min_len - T, axis=0)
    return np.concatenate([features, tail], axis=0)
