"""CTC loss, the collapse mapping and greedy best-path decoding.

The loss runs the usual forward recursion over the blank-interleaved label
[b, y1, b, y2, ..., b] in log space. Each step is a recorded log-sum-exp
node, so gradients come from the same autodiff machinery as the rest of the
model.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as tn
from .synth import BLANK
from .tensor import NEG_LARGE, Tensor


class InfeasibleLabelError(ValueError):
    pass


def collapse(path: Sequence[int], blank: int = BLANK) -> list[int]:
    """Merge runs of equal ids, then drop blanks."""
    out = []
    prev = None
    for tok in path:
        tok = int(tok)
        if tok != prev and tok != blank:
            out.append(tok)
        prev = tok
    return out


def extended_label(labels: Sequence[int], blank: int = BLANK) -> np.ndarray:
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def min_frames(labels: Sequence[int]) -> int:
    """Shortest path length that can emit ``labels``: L plus one per adjacent repeat."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def ctc_nll(logits: Tensor, labels: Sequence[int], blank: int = BLANK) -> Tensor:
    """-log p(labels | logits) summed over all alignments; a scalar Tensor."""
    labels = [int(x) for x in labels]
    if not labels:
        raise InfeasibleLabelError("empty label sequence")
    if any(x == blank for x in labels):
        raise InfeasibleLabelError("labels must not contain the blank id")
    T, V = logits.shape
    if any(not 0 <= x < V for x in labels):
        raise InfeasibleLabelError(f"label id outside vocabulary of size {V}")
    need = min_frames(labels)
    if T < need:
        raise InfeasibleLabelError(f"{T} frames cannot emit {len(labels)} labels (need {need})")

    ext = extended_label(labels, blank)
    S = len(ext)
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    logp = tn.log_softmax_lastdim(logits)
    emit = logp[:, ext]  # (T, S)
    init = np.full(S, NEG_LARGE)
    init[:2] = 0.0
    alpha = emit[0] + init
    for t in range(1, T):
        alpha = tn.ctc_transition(alpha, skip) + emit[t]
    # valid paths end on the last label or the trailing blank
    return -tn.logsumexp(alpha[S - 2:], axis=-1)


def greedy_decode(logits, blank: int = BLANK) -> list[int]:
    """Per-frame argmax (ties to the smaller id) followed by collapse."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return collapse(np.argmax(data, axis=-1), blank)
