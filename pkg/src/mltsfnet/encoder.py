"""Two-level 1D-convolutional gloss encoder and the gloss classifier.

Level 1: (conv F_a -> ReLU -> maxpool 2/2) then (conv F_b -> ReLU -> maxpool
2/2), shrinking T to floor(floor(T/2)/2). Level 2: conv 3/1/1 -> ReLU, length
preserving. The classifier is a per-position affine map to vocabulary logits.
"""
from __future__ import annotations

import numpy as np

from . import tensor as tn
from .mltsf import ConfigurationError
from .params import ParamStore, uniform_init
from .tensor import GeometryError, Tensor

POOL = 2
LEVEL2_FILTER = 3


def receptive_field(layers) -> int:
    """Receptive field of a stack of (filter_size, stride) layers."""
    rf, jump = 1, 1
    for size, stride in layers:
        rf += (size - 1) * jump
        jump *= stride
    return rf


def level1_receptive_field(filters) -> int:
    fa, fb = filters
    return receptive_field([(fa, 1), (POOL, POOL), (fb, 1), (POOL, POOL)])


def level1_filters_for(k: int) -> tuple[int, int]:
    """Odd filter sizes whose level-1 receptive field equals ``k``.

    The receptive field is F_a + 2 F_b + 1, so k must be even. Among the
    solutions the most balanced pair wins (ties go to the larger F_a);
    k = 16 gives (5, 5).
    """
    best = None
    for fb in range(1, k, 2):
        fa = k - 1 - 2 * fb
        if fa < 1 or fa % 2 == 0:
            continue
        key = (abs(fa - fb), -fa)
        if best is None or key < best[0]:
            best = (key, (fa, fb))
    if best is None:
        raise ConfigurationError(f"no odd level-1 filter pair has receptive field {k}")
    return best[1]


def check_receptive_field(filters, k_max: int | None) -> None:
    for f in filters:
        if f < 1 or f % 2 == 0:
            raise ConfigurationError(f"level-1 filter sizes must be odd and >= 1, got {filters}")
    if k_max is None:
        return
    rf = level1_receptive_field(filters)
    if rf != k_max:
        raise ConfigurationError(
            f"level-1 receptive field {rf} (filters {tuple(filters)}) must equal the "
            f"largest selection radius {k_max}")


def init_encoder_params(store: ParamStore, channels: int, out_channels: int, vocab_size: int,
                        filters, rng: np.random.Generator) -> None:
    C, Co = channels, out_channels
    for j, f in enumerate(filters, start=1):
        store.add(f"encoder.level1.conv{j}.weight", uniform_init(rng, (f, C, C), f * C))
        store.add(f"encoder.level1.conv{j}.bias", np.zeros(C))
    store.add("encoder.level2.conv.weight", uniform_init(rng, (LEVEL2_FILTER, C, Co), LEVEL2_FILTER * C))
    store.add("encoder.level2.conv.bias", np.zeros(Co))
    store.add("classifier.weight", uniform_init(rng, (Co, vocab_size), Co))
    store.add("classifier.bias", np.zeros(vocab_size))


def output_length(T: int) -> int:
    return (T // POOL) // POOL


def level1_forward(x: Tensor, params: ParamStore) -> Tensor:
    if x.shape[0] < POOL * POOL:
        raise GeometryError(f"level-1 encoder needs T >= {POOL * POOL}, got {x.shape[0]}")
    for j in (1, 2):
        w = params[f"encoder.level1.conv{j}.weight"]
        x = tn.conv1d(x, w, stride=1, padding=(w.shape[0] - 1) // 2)
        x = tn.relu(x + params[f"encoder.level1.conv{j}.bias"])
        x = tn.max_pool1d(x, POOL, POOL)
    return x


def level2_forward(g1: Tensor, params: ParamStore) -> Tensor:
    x = tn.conv1d(g1, params["encoder.level2.conv.weight"], stride=1, padding=1)
    return tn.relu(x + params["encoder.level2.conv.bias"])


def classify(g2: Tensor, params: ParamStore) -> Tensor:
    """Unnormalised (T', V) gloss logits."""
    return tn.linear(g2, params["classifier.weight"], params["classifier.bias"])
