"""Run configuration and the flat ``key=value`` config file format.

Model and training keys use their field names (``scales=8,6,4``); synthetic
data keys carry a ``synth.`` prefix (``synth.noise=0.5``). Blank lines and
``#`` comments are ignored; unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .encoder import check_receptive_field, level1_filters_for
from .mltsf import ConfigurationError, MltsfVariant, check_scales
from .synth import SynthConfig


@dataclass(frozen=True)
class TrainConfig:
    scales: tuple[int, ...] = (8, 6, 4)
    use_mltsf: bool = True
    selector: str = "local-topk"
    use_rpe: bool = True
    use_tcn: bool = True
    pool: str = "max"
    aggregator: str = "dynamic"
    ptc_mode: str = "ptc"
    similarity: str = "dot"
    divisor: str = "channels"
    channels: int = 16
    out_channels: int = 32
    vocab_size: int = 13
    # empty -> derived from the largest selection radius
    level1_filters: tuple[int, ...] = ()
    lr: float = 3e-3
    l2: float = 1e-4
    epochs: int = 30
    decay_start: int = 20
    decay_interval: int = 5
    decay_factor: float = 0.5
    batch_size: int = 4
    seed: int = 0
    augment: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scales", check_scales(self.scales))
        object.__setattr__(self, "level1_filters", tuple(int(f) for f in self.level1_filters))
        self.variant  # validates the mode strings
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if self.l2 < 0:
            raise ConfigurationError("l2 must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.decay_interval < 1 or not 0 < self.decay_factor <= 1:
            raise ConfigurationError("need decay_interval >= 1 and 0 < decay_factor <= 1")
        if self.channels < 1 or self.out_channels < 1 or self.vocab_size < 2:
            raise ConfigurationError("channel counts must be >= 1 and vocab_size >= 2")
        if self.level1_filters and len(self.level1_filters) != 2:
            raise ConfigurationError("level1_filters takes exactly two sizes")
        check_receptive_field(self.filters, self.k_max if self.use_mltsf else None)

    @property
    def variant(self) -> MltsfVariant:
        return MltsfVariant(self.selector, self.use_rpe, self.use_tcn, self.pool,
                            self.aggregator, self.ptc_mode, self.similarity, self.divisor)

    @property
    def k_max(self) -> int:
        return max(self.scales)

    @property
    def filters(self) -> tuple[int, int]:
        if self.level1_filters:
            return self.level1_filters
        return level1_filters_for(self.k_max)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)


_SYNTH_PREFIX = "synth."
_SYNTH_SHARED = ("vocab_size", "channels")


def _convert(raw: str, ftype, key: str):
    ftype = str(ftype)
    try:
        if "bool" in ftype:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "tuple" in ftype:
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if "int" in ftype:
            return int(raw)
        if "float" in ftype:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    train_fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    synth_fields = {f.name: f.type for f in dataclasses.fields(SynthConfig)
                    if f.name not in _SYNTH_SHARED}
    train_kw, synth_kw = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key.startswith(_SYNTH_PREFIX) and key[len(_SYNTH_PREFIX):] in synth_fields:
            name = key[len(_SYNTH_PREFIX):]
            synth_kw[name] = _convert(value, synth_fields[name], key)
        elif key in train_fields:
            train_kw[key] = _convert(value, train_fields[key], key)
        else:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
    train = TrainConfig(**train_kw)
    synth = SynthConfig(vocab_size=train.vocab_size, channels=train.channels, **synth_kw)
    return RunConfig(train, synth)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(config: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        lines.append(f"{f.name}={_render(getattr(config.train, f.name))}")
    for f in dataclasses.fields(SynthConfig):
        if f.name not in _SYNTH_SHARED:
            lines.append(f"{_SYNTH_PREFIX}{f.name}={_render(getattr(config.synth, f.name))}")
    return "\n".join(lines) + "\n"


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
