"""Multi-scale local-temporal similarity fusion.

Three stages per sequence ``s`` of shape (T, C):

* selection: for every frame t and radius k, keep t itself plus the k-1
  frames inside [t-k, t+k] with the highest similarity to frame t;
* PTC: gather those frames in time order, add a learned embedding of the
  offset p-t, run two conv/LN/ReLU layers over the k axis, max-pool to one
  vector and pass it through a two-layer GELU MLP;
* CMA: mix the per-scale vectors with softmax weights computed from s_t.

Selection is a hard decision made on plain arrays. Gradients flow through the
gathered feature values only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .params import ParamStore, uniform_init
from .tensor import Tensor

SELECTOR_MODES = ("local-topk", "center", "global")
POOL_MODES = ("max", "mean")
AGGREGATOR_MODES = ("dynamic", "average")
PTC_MODES = ("ptc", "sparse-attention")
SIMILARITY_KINDS = ("dot", "cosine")
DIVISORS = ("channels", "sqrt-channels")


class InfeasibleWindowError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class MltsfVariant:
    selector: str = "local-topk"
    use_rpe: bool = True
    use_tcn: bool = True
    pool: str = "max"
    aggregator: str = "dynamic"
    ptc_mode: str = "ptc"
    similarity: str = "dot"
    divisor: str = "channels"

    def __post_init__(self):
        for value, allowed, what in (
            (self.selector, SELECTOR_MODES, "selector"),
            (self.pool, POOL_MODES, "pool"),
            (self.aggregator, AGGREGATOR_MODES, "aggregator"),
            (self.ptc_mode, PTC_MODES, "ptc_mode"),
            (self.similarity, SIMILARITY_KINDS, "similarity"),
            (self.divisor, DIVISORS, "divisor"),
        ):
            if value not in allowed:
                raise ConfigurationError(f"{what} must be one of {allowed}, got {value!r}")


def check_scales(scales) -> tuple[int, ...]:
    scales = tuple(int(k) for k in scales)
    if not scales:
        raise ConfigurationError("at least one selection radius is required")
    if any(k < 1 for k in scales):
        raise ConfigurationError(f"selection radii must be >= 1, got {scales}")
    if len(set(scales)) != len(scales):
        raise ConfigurationError(f"selection radii must be distinct, got {scales}")
    return scales


# ---------------------------------------------------------------------------
# content-aware feature selection


def similarity_scores(s: np.ndarray, similarity: str = "dot", divisor: str = "channels") -> np.ndarray:
    """Pre-softmax pairwise scores s s^T / C (or / sqrt(C))."""
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("features contain non-finite values")
    if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
        raise ValueError(f"features must be (T>=1, C>=1), got {s.shape}")
    C = s.shape[1]
    if similarity == "cosine":
        norm = np.linalg.norm(s, axis=1, keepdims=True)
        s = s / np.maximum(norm, 1e-12)
    scale = C if divisor == "channels" else np.sqrt(C)
    return (s @ s.T) / scale


def similarity_matrix(s: np.ndarray, similarity: str = "dot", divisor: str = "channels") -> np.ndarray:
    """Row-stochastic T x T matrix softmax(s s^T / C)."""
    return tn.softmax_lastdim(Tensor(similarity_scores(s, similarity, divisor))).data


@dataclass(frozen=True)
class Neighborhood:
    center: int
    indices: tuple[int, ...]

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(p - self.center for p in self.indices)


def _ranked_candidates(d: np.ndarray, k: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-row column order (T, T) with out-of-window columns last, plus
    the per-row count of in-window columns."""
    T = d.shape[0]
    t = np.arange(T)[:, None]
    p = np.arange(T)[None, :]
    dist = np.abs(p - t)
    if mode == "global":
        valid = np.ones((T, T), dtype=bool)
    else:
        valid = dist <= k
    if mode == "center":
        primary = np.zeros((T, T))
    else:
        primary = -np.asarray(d, dtype=np.float64)
    primary = np.where(valid, primary, np.inf)
    # the centre frame is always kept, even when a larger-norm neighbour outscores it
    primary = np.where(dist == 0, -np.inf, primary)
    cols = np.broadcast_to(p, (T, T))
    order = np.lexsort((cols, dist, primary), axis=-1)
    return order, valid.sum(axis=1)


def select_all(d: np.ndarray, k: int, mode: str = "local-topk") -> np.ndarray:
    """(T, k) selected indices for every centre, each row ascending.

    The centre t is always selected. The remaining slots are ranked by
    (-score, |p - t|, p): ties go to the nearer frame, then to the earlier
    one. ``center`` mode ignores scores.
    """
    if mode not in SELECTOR_MODES:
        raise ConfigurationError(f"unknown selector mode {mode!r}")
    d = np.asarray(d)
    T = d.shape[0]
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    order, count = _ranked_candidates(d, k, mode)
    if np.any(count < k):
        t = int(np.argmin(count))
        raise InfeasibleWindowError(
            f"window around t={t} holds {int(count[t])} frames, fewer than k={k} (T={T})")
    return np.sort(order[:, :k], axis=1)


def select_neighbors(d: np.ndarray, t: int, k: int, mode: str = "local-topk") -> Neighborhood:
    d = np.asarray(d)
    T = d.shape[0]
    if not 0 <= t < T:
        raise IndexError(f"t={t} outside [0, {T})")
    p = np.arange(T)
    dist = np.abs(p - t)
    valid = np.ones(T, dtype=bool) if mode == "global" else dist <= k
    if valid.sum() < k:
        raise InfeasibleWindowError(f"window around t={t} holds {int(valid.sum())} frames, k={k}")
    primary = np.zeros(T) if mode == "center" else -d[t].astype(np.float64)
    primary = np.where(valid, primary, np.inf)
    primary[t] = -np.inf
    idx = np.sort(np.lexsort((p, dist, primary))[:k])
    return Neighborhood(t, tuple(int(i) for i in idx))


# ---------------------------------------------------------------------------
# parameters


def init_mltsf_params(store: ParamStore, scales, channels: int, rng: np.random.Generator,
                      variant: MltsfVariant = MltsfVariant(), prefix: str = "mltsf") -> None:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, LN (1, 0), zero RPE.

    Only parameters the variant actually uses are created.
    """
    C = channels
    scales = check_scales(scales)
    if variant.ptc_mode == "ptc":
        for i, k in enumerate(scales):
            base = f"{prefix}.scale{i}"
            if variant.use_rpe:
                store.add(f"{base}.rpe", np.zeros((2 * k + 1, C)))
            for j in (1, 2):
                if variant.use_tcn:
                    store.add(f"{base}.conv{j}.weight", uniform_init(rng, (3, C, C), 3 * C))
                    store.add(f"{base}.conv{j}.bias", np.zeros(C))
                    store.add(f"{base}.ln{j}.gamma", np.ones(C))
                    store.add(f"{base}.ln{j}.beta", np.zeros(C))
                store.add(f"{base}.fc{j}.weight", uniform_init(rng, (C, C), C))
                store.add(f"{base}.fc{j}.bias", np.zeros(C))
    if variant.aggregator == "dynamic":
        n = len(scales)
        store.add(f"{prefix}.cma.weight", uniform_init(rng, (C, n), C))
        store.add(f"{prefix}.cma.bias", np.zeros(n))


# ---------------------------------------------------------------------------
# position-aware temporal convolver


def ptc_forward(s: Tensor, idx: np.ndarray, k: int, params: dict[str, Tensor],
                use_rpe: bool = True, use_tcn: bool = True, pool: str = "max") -> Tensor:
    """Per-centre fusion of the selected frames; returns (T, C).

    ``idx`` is (T, k) with ascending rows; ``params`` holds one scale's
    ``rpe``, ``conv{1,2}.*``, ``ln{1,2}.*`` and ``fc{1,2}.*`` tensors.
    """
    idx = np.asarray(idx)
    if idx.ndim != 2 or idx.shape[1] != k:
        raise ConfigurationError(f"every neighbourhood must hold k={k} indices, got {idx.shape}")
    if idx.shape[0] != s.shape[0]:
        raise ConfigurationError("one neighbourhood per timestep is required")
    x = s[idx]  # (T, k, C)
    if use_rpe:
        offsets = idx - np.arange(idx.shape[0])[:, None]
        x = x + params["rpe"][offsets + k]
    if use_tcn:
        for j in (1, 2):
            x = tn.conv1d(x, params[f"conv{j}.weight"], stride=1, padding=1)
            x = x + params[f"conv{j}.bias"]
            x = tn.layer_norm(x, params[f"ln{j}.gamma"], params[f"ln{j}.beta"])
            x = tn.relu(x)
    pooled = x.max(axis=1) if pool == "max" else x.mean(axis=1)
    h = tn.gelu(tn.linear(pooled, params["fc1.weight"], params["fc1.bias"]))
    return tn.linear(h, params["fc2.weight"], params["fc2.bias"])


def sparse_attention_forward(s: Tensor, idx: np.ndarray, similarity: str = "dot",
                             divisor: str = "channels") -> Tensor:
    """Similarity-weighted average of the selected frames (weights renormalised).

    The weights are recomputed on the graph so gradients reach ``s`` through
    them as well; only the choice of ``idx`` is discrete.
    """
    x = s
    if similarity == "cosine":
        x = s / tn.sqrt(tn.tsum(tn.square(s), axis=-1, keepdims=True) + 1e-24)
    C = s.shape[1]
    scale = C if divisor == "channels" else np.sqrt(C)
    d = tn.softmax_lastdim((x @ tn.transpose(x)) * (1.0 / scale))
    rows = np.arange(idx.shape[0])[:, None]
    w = d[rows, idx]
    w = w / w.sum(axis=1, keepdims=True)
    return (s[idx] * w.reshape(w.shape + (1,))).sum(axis=1)


# ---------------------------------------------------------------------------
# content-dependent multi-scale aggregator


def cma_weights(s: Tensor, weight: Tensor | None, bias: Tensor | None, n_scales: int,
                mode: str = "dynamic") -> Tensor:
    if mode == "average":
        return Tensor(np.full((s.shape[0], n_scales), 1.0 / n_scales))
    return tn.softmax_lastdim(tn.linear(s, weight, bias))


def cma_forward(s: Tensor, per_scale: Tensor, weight: Tensor | None, bias: Tensor | None,
                mode: str = "dynamic") -> Tensor:
    """Fuse (T, n_scales, C) outputs with weights softmax(s W + b) per frame."""
    n = per_scale.shape[1]
    if n < 1:
        raise ConfigurationError("need at least one scale to aggregate")
    alpha = cma_weights(s, weight, bias, n, mode)
    return (per_scale * alpha.reshape(alpha.shape + (1,))).sum(axis=1)


# ---------------------------------------------------------------------------
# full module


def mltsf_forward(s: Tensor, params: ParamStore, scales, variant: MltsfVariant = MltsfVariant(),
                  prefix: str = "mltsf", return_selection: bool = False):
    """Run selection, per-scale fusion and aggregation on a (T, C) sequence."""
    scales = check_scales(scales)
    T = s.shape[0]
    if T < max(scales) + 1:
        raise InfeasibleWindowError(f"sequence of {T} frames is shorter than k_max+1={max(scales) + 1}")
    d = similarity_matrix(s.data, variant.similarity, variant.divisor)
    outs = []
    selections = []
    for i, k in enumerate(scales):
        idx = select_all(d, k, variant.selector)
        tn.note_branch(idx)
        selections.append(idx)
        if variant.ptc_mode == "sparse-attention":
            outs.append(sparse_attention_forward(s, idx, variant.similarity, variant.divisor))
        else:
            outs.append(ptc_forward(s, idx, k, params.subset(f"{prefix}.scale{i}"),
                                    variant.use_rpe, variant.use_tcn, variant.pool))
    per_scale = tn.stack(outs, axis=1)
    if variant.aggregator == "dynamic":
        out = cma_forward(s, per_scale, params[f"{prefix}.cma.weight"], params[f"{prefix}.cma.bias"])
    else:
        out = cma_forward(s, per_scale, None, None, mode="average")
    if return_selection:
        return out, selections
    return out
