"""Variant grids on the synthetic benchmark.

Every suite trains each variant once per seed on freshly generated data
(300 train / 60 dev samples by default) and reports the best dev WER per
run plus the median over seeds. Radii are the desk-scale stand-ins for the
original {8, 12, 16}: {4, 6, 8}, so single-scale rows use k = 8.
"""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field

from .config import TrainConfig
from .encoder import level1_filters_for
from .synth import SynthConfig, synth_dataset
from .train import train

log = logging.getLogger(__name__)

DESK_SCALES = (8, 6, 4)
SINGLE = 8
DEFAULT_SEEDS = (1, 2, 3)
# the no-module baseline keeps the encoder of the k=8 models
BASELINE = dict(use_mltsf=False, level1_filters=level1_filters_for(SINGLE))


@dataclass(frozen=True)
class Variant:
    name: str
    overrides: dict = field(default_factory=dict)


SUITES: dict[str, tuple[Variant, ...]] = {
    "table4": (
        Variant("none", BASELINE),
        Variant("k=4", dict(scales=(4,))),
        Variant("k=6", dict(scales=(6,))),
        Variant("k=8", dict(scales=(8,))),
        Variant("k={4,6,8}", dict(scales=DESK_SCALES)),
    ),
    "table5": (
        Variant("w/o RPE", dict(scales=(SINGLE,), use_rpe=False)),
        Variant("w/o TCNs", dict(scales=(SINGLE,), use_tcn=False)),
        Variant("mean pooling", dict(scales=(SINGLE,), pool="mean")),
        Variant("PTC", dict(scales=(SINGLE,))),
    ),
    "table6": (
        Variant("FCN", BASELINE),
        Variant("global-FS", dict(scales=(SINGLE,), selector="global")),
        Variant("center-FS", dict(scales=(SINGLE,), selector="center")),
        Variant("CFS", dict(scales=(SINGLE,))),
    ),
    "table7": (
        Variant("average", dict(scales=DESK_SCALES, aggregator="average")),
        Variant("dynamic", dict(scales=DESK_SCALES)),
    ),
    "table8": (
        Variant("non-local sparse attention",
                dict(scales=(SINGLE,), selector="global", ptc_mode="sparse-attention")),
        Variant("local sparse attention", dict(scales=(SINGLE,), ptc_mode="sparse-attention")),
        Variant("single-LTSF", dict(scales=(SINGLE,))),
    ),
}
SUITES["benchmark"] = SUITES["table4"]


@dataclass
class BenchmarkSetup:
    """Data and training settings shared by every run of a suite."""

    train_size: int = 300
    dev_size: int = 60
    synth: SynthConfig = field(default_factory=SynthConfig)
    base: TrainConfig = field(default_factory=TrainConfig)

    def data(self, seed: int):
        cfg = SynthConfig(**{**self.synth.__dict__, "seed": seed,
                             "vocab_size": self.base.vocab_size, "channels": self.base.channels})
        train_set = synth_dataset(cfg, self.train_size)
        dev_set = synth_dataset(cfg, self.dev_size, offset=self.train_size)
        return train_set, dev_set

    def config(self, variant: Variant, seed: int) -> TrainConfig:
        return self.base.replace(**{"seed": seed, **variant.overrides})


@dataclass
class RunResult:
    variant: str
    seed: int
    best_dev_wer: float
    final_dev_wer: float
    seconds: float


@dataclass
class SuiteResult:
    suite: str
    runs: list[RunResult]

    def per_variant(self) -> dict[str, list[RunResult]]:
        out: dict[str, list[RunResult]] = {}
        for r in self.runs:
            out.setdefault(r.variant, []).append(r)
        return out

    def medians(self) -> dict[str, float]:
        return {name: statistics.median(r.best_dev_wer for r in runs)
                for name, runs in self.per_variant().items()}

    @property
    def seconds(self) -> float:
        return sum(r.seconds for r in self.runs)

    def table(self) -> str:
        groups = self.per_variant()
        seeds = [r.seed for r in next(iter(groups.values()))]
        head = f"{'variant':28s} " + " ".join(f"{'seed ' + str(s):>8s}" for s in seeds)
        lines = [f"suite {self.suite}: best dev WER (%)", head + f" {'median':>8s}"]
        for name, runs in groups.items():
            cells = " ".join(f"{100 * r.best_dev_wer:8.1f}" for r in runs)
            lines.append(f"{name:28s} {cells} {100 * self.medians()[name]:8.1f}")
        lines.append(f"total training time {self.seconds:.0f} s")
        return "\n".join(lines)


def run_suite(name: str, setup: BenchmarkSetup | None = None, seeds=DEFAULT_SEEDS,
              progress=None) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    setup = setup or BenchmarkSetup()
    runs = []
    for seed in seeds:
        train_set, dev_set = setup.data(seed)
        for variant in SUITES[name]:
            cfg = setup.config(variant, seed)
            start = time.perf_counter()
            res = train(cfg, train_set, dev_set)
            run = RunResult(variant.name, seed, min(res.dev_wers), res.dev_wers[-1],
                            time.perf_counter() - start)
            log.info("%s seed %d: best dev WER %.3f (%.0f s)", variant.name, seed,
                     run.best_dev_wer, run.seconds)
            if progress is not None:
                progress(run)
            runs.append(run)
    return SuiteResult(name, runs)


def benchmark_ordering(result: SuiteResult) -> tuple[float, float, float]:
    """(multi-scale, best single-scale, baseline) medians from a table4 run."""
    med = result.medians()
    singles = [v for n, v in med.items() if n.startswith("k=") and "{" not in n]
    return med["k={4,6,8}"], min(singles), med["none"]
