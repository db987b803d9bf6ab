"""Full network: optional mLTSF front end, gloss encoder, classifier, CTC."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import encoder
from .config import TrainConfig
from .ctc import ctc_nll, greedy_decode, min_frames
from .mltsf import init_mltsf_params, mltsf_forward
from .params import ParamStore
from .synth import pad_short_sequence
from .tensor import Tensor, no_grad

TIME_REDUCTION = 4


def build_params(config: TrainConfig, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    if config.use_mltsf:
        init_mltsf_params(store, config.scales, config.channels, rng, config.variant)
    encoder.init_encoder_params(store, config.channels, config.out_channels, config.vocab_size,
                                config.filters, rng)
    return store


def min_input_length(config: TrainConfig, labels: Sequence[int] | None = None) -> int:
    need = TIME_REDUCTION
    if config.use_mltsf:
        need = max(need, config.k_max + 1)
    if labels:
        need = max(need, TIME_REDUCTION * min_frames(labels))
    return need


def prepare_features(features: np.ndarray, config: TrainConfig,
                     labels: Sequence[int] | None = None) -> np.ndarray:
    """Pad so every window is feasible and (given labels) CTC can emit them."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[1] != config.channels:
        raise ValueError(f"features have {feats.shape[1]} channels, model expects {config.channels}")
    return pad_short_sequence(feats, min_input_length(config, labels))


def forward_logits(params: ParamStore, features: np.ndarray, config: TrainConfig) -> Tensor:
    s = Tensor(features)
    x = mltsf_forward(s, params, config.scales, config.variant) if config.use_mltsf else s
    g1 = encoder.level1_forward(x, params)
    g2 = encoder.level2_forward(g1, params)
    return encoder.classify(g2, params)


def sample_loss(params: ParamStore, features: np.ndarray, labels: Sequence[int],
                config: TrainConfig) -> Tensor:
    feats = prepare_features(features, config, labels)
    return ctc_nll(forward_logits(params, feats, config), labels)


def decode(params: ParamStore, features: np.ndarray, config: TrainConfig) -> list[int]:
    with no_grad():
        logits = forward_logits(params, prepare_features(features, config), config)
    return greedy_decode(logits)


def gradient_check(config: TrainConfig, frames: int = 20, eps: float = 1e-4,
                   threshold: float = 1e-4, seed: int = 0):
    """Finite-difference check of every parameter on one random sequence.

    The input is standard normal noise of ``frames`` frames, labelled with two
    random glosses; parameters are the usual initial values for ``seed``.
    """
    from .params import finite_diff_check

    rng = np.random.default_rng(seed)
    params = build_params(config, rng)
    features = rng.standard_normal((frames, config.channels))
    labels = tuple(int(x) for x in rng.integers(1, config.vocab_size, size=2))
    feats = prepare_features(features, config, labels)
    return finite_diff_check(lambda: ctc_nll(forward_logits(params, feats, config), labels),
                             params, eps=eps, threshold=threshold)
