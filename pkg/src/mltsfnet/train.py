"""Training loop, optimiser, learning-rate schedule and evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as tn
from .checkpoint import Checkpoint
from .config import TrainConfig
from .metrics import EditStats, WerReport, edit_stats
from .model import build_params, decode, sample_loss
from .params import ParamStore
from .synth import LabeledSample, temporal_rescale
from .tensor import Tensor

log = logging.getLogger(__name__)

AUGMENT_FACTORS = (0.8, 1.0, 1.2)


class DivergenceError(RuntimeError):
    def __init__(self, message: str, checkpoint: Checkpoint | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class VocabularyMismatchError(ValueError):
    pass


def is_regularized(name: str) -> bool:
    """Only conv/linear/aggregator weights carry the L2 penalty."""
    return name.endswith(".weight")


def l2_penalty(params: ParamStore) -> Tensor:
    terms = [tn.square(t).sum() for n, t in params.items() if is_regularized(n)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def total_loss(ctc: Tensor, params: ParamStore, l2: float) -> Tensor:
    """ctc + l2 * sum of squared weights."""
    if l2 < 0:
        raise ValueError("l2 coefficient must be non-negative")
    if l2 == 0:
        return ctc
    return ctc + l2 * l2_penalty(params)


class Adam:
    """Bias-corrected Adam over a ParamStore, in its lexicographic order."""

    def __init__(self, params: ParamStore, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {n: np.zeros(t.shape) for n, t in params.items()}
        self.v = {n: np.zeros(t.shape) for n, t in params.items()}

    def step(self, lr: float) -> None:
        for name, t in self.params.items():
            if t.grad is not None and not np.isfinite(t.grad).all():
                raise FloatingPointError(f"non-finite gradient for parameter {name}")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for name, t in self.params.items():
            g = np.zeros(t.shape) if t.grad is None else t.grad
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            t.data = t.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    n = max(0, epoch - config.decay_start) // config.decay_interval
    return config.lr * config.decay_factor ** n


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    losses: list[float] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    dev_wers: list[float] = field(default_factory=list)
    best_params: dict[str, np.ndarray] | None = None


def _new_checkpoint(config: TrainConfig) -> Checkpoint:
    rng = np.random.default_rng(config.seed)
    params = build_params(config, rng)
    opt = Adam(params)
    return Checkpoint.from_state(config, params, opt, epoch=0, rng=rng)


def train(
    config: TrainConfig,
    dataset: Sequence[LabeledSample],
    dev: Sequence[LabeledSample] | None = None,
    resume: Checkpoint | None = None,
    stop_after: int | None = None,
    on_epoch: Callable[[int, Checkpoint], None] | None = None,
) -> TrainResult:
    """Train from scratch (or ``resume``) up to ``config.epochs``.

    ``stop_after`` ends the run early after that many epochs in total, which
    is how resumable checkpoints are produced in the tests.
    """
    if not dataset:
        raise ValueError("training set is empty")
    ckpt = resume if resume is not None else _new_checkpoint(config)
    if resume is not None and resume.config != config:
        raise ValueError("checkpoint was written with a different configuration")
    params, opt, rng = ckpt.restore()
    result = TrainResult(checkpoint=ckpt)
    best = ckpt.best_dev_wer
    last_epoch = config.epochs if stop_after is None else min(stop_after, config.epochs)

    for epoch in range(ckpt.epoch, last_epoch):
        lr = lr_schedule(epoch, config)
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            params.zero_grad()
            batch_loss = 0.0
            try:
                for i in batch:
                    sample = dataset[int(i)]
                    feats = sample.features
                    if config.augment:
                        factor = AUGMENT_FACTORS[int(rng.integers(len(AUGMENT_FACTORS)))]
                        feats = temporal_rescale(feats, factor)
                    loss = sample_loss(params, feats, sample.labels, config) * (1.0 / len(batch))
                    loss.backward()
                    batch_loss += loss.item()
                if config.l2 > 0:
                    reg = config.l2 * l2_penalty(params)
                    reg.backward()
                    batch_loss += reg.item()
                if not math.isfinite(batch_loss):
                    raise FloatingPointError(f"loss became {batch_loss}")
                opt.step(lr)
            except (FloatingPointError, tn.NonFiniteError) as exc:
                # ckpt is the state at the last epoch boundary, which was finite
                raise DivergenceError(f"epoch {epoch}: {exc}", ckpt) from exc
            result.losses.append(batch_loss)
            epoch_loss += batch_loss * len(batch)
        result.epoch_losses.append(epoch_loss / len(dataset))

        dev_wer = None
        if dev:
            dev_wer = evaluate_params(params, config, dev).wer
            result.dev_wers.append(dev_wer)
            if best is None or dev_wer < best:
                best = dev_wer
                result.best_params = params.snapshot()
        log.info("epoch %d lr %.2e loss %.4f dev WER %s", epoch, lr, result.epoch_losses[-1],
                 "-" if dev_wer is None else f"{100 * dev_wer:.1f}%")
        ckpt = Checkpoint.from_state(config, params, opt, epoch=epoch + 1, rng=rng,
                                     best_dev_wer=best)
        result.checkpoint = ckpt
        if on_epoch is not None:
            on_epoch(epoch, ckpt)
    return result


def evaluate_params(params: ParamStore, config: TrainConfig,
                    dataset: Sequence[LabeledSample]) -> WerReport:
    total = EditStats()
    for sample in dataset:
        total = total + edit_stats(sample.labels, decode(params, sample.features, config))
    return WerReport(total, len(dataset))


def evaluate(checkpoint: Checkpoint, dataset: Sequence[LabeledSample],
             vocab_size: int | None = None) -> WerReport:
    if vocab_size is not None and vocab_size != checkpoint.config.vocab_size:
        raise VocabularyMismatchError(
            f"checkpoint vocabulary has {checkpoint.config.vocab_size} entries, "
            f"dataset vocabulary has {vocab_size}")
    params, _, _ = checkpoint.restore()
    return evaluate_params(params, checkpoint.config, dataset)
