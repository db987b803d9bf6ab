"""Slow, independent reference implementations used as test oracles.

Nothing here touches the autodiff library: plain Python loops and numpy.
"""
import itertools
import math

import numpy as np


def softmax_rows(x):
    out = np.empty_like(x, dtype=np.float64)
    for i, row in enumerate(x):
        m = max(row)
        e = [math.exp(v - m) for v in row]
        z = sum(e)
        out[i] = [v / z for v in e]
    return out


def similarity_matrix(s, divisor=None):
    T, C = s.shape
    div = C if divisor is None else divisor
    scores = np.zeros((T, T))
    for i in range(T):
        for j in range(T):
            scores[i, j] = sum(s[i, c] * s[j, c] for c in range(C)) / div
    return softmax_rows(scores)


def select(row, t, k, mode):
    """Brute force: list the window, sort it by the documented key, keep k."""
    T = len(row)
    if mode == "global":
        window = list(range(T))
    else:
        window = [p for p in range(T) if abs(p - t) <= k]
    if len(window) < k:
        return None
    rest = [p for p in window if p != t]
    if mode == "center":
        rest.sort(key=lambda p: (abs(p - t), p))
    else:
        rest.sort(key=lambda p: (-row[p], abs(p - t), p))
    return sorted([t] + rest[:k - 1])


def conv1d(x, w, padding):
    L, c_in = x.shape
    F, _, c_out = w.shape
    xp = np.zeros((L + 2 * padding, c_in))
    xp[padding:padding + L] = x
    out = np.zeros((L + 2 * padding - F + 1, c_out))
    for i in range(out.shape[0]):
        for o in range(c_out):
            out[i, o] = sum(xp[i + f, c] * w[f, c, o] for f in range(F) for c in range(c_in))
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    out = np.empty_like(x)
    for i, row in enumerate(x):
        n = len(row)
        mean = sum(row) / n
        var = sum((v - mean) ** 2 for v in row) / n
        out[i] = [(v - mean) / math.sqrt(var + eps) * gamma[c] + beta[c] for c, v in enumerate(row)]
    return out


def gelu(x):
    return np.vectorize(lambda v: 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0))))(x)


def relu(x):
    return np.where(x > 0, x, 0.0)


def ptc_one(s, indices, t, k, p, use_rpe=True, use_tcn=True, pool="max"):
    """Scripted PTC for one centre: gather, add, (conv, LN, ReLU) x2, pool, MLP."""
    x = np.array([s[i] for i in indices], dtype=np.float64)
    if use_rpe:
        x = x + np.array([p["rpe"][i - t + k] for i in indices])
    if use_tcn:
        for j in (1, 2):
            x = conv1d(x, p[f"conv{j}.weight"], 1) + p[f"conv{j}.bias"]
            x = relu(layer_norm(x, p[f"ln{j}.gamma"], p[f"ln{j}.beta"]))
    pooled = x.max(axis=0) if pool == "max" else x.mean(axis=0)
    h = gelu(pooled @ p["fc1.weight"] + p["fc1.bias"])
    return h @ p["fc2.weight"] + p["fc2.bias"]


def cma(s, per_scale, W, b):
    T, n, C = per_scale.shape
    out = np.zeros((T, C))
    for t in range(T):
        logits = [sum(s[t, c] * W[c, j] for c in range(C)) + b[j] for j in range(n)]
        m = max(logits)
        e = [math.exp(v - m) for v in logits]
        alpha = [v / sum(e) for v in e]
        for j in range(n):
            out[t] += alpha[j] * per_scale[t, j]
    return out


def mltsf(s, params, scales, prefix="mltsf"):
    d = similarity_matrix(s)
    T = s.shape[0]
    per_scale = np.zeros((T, len(scales), s.shape[1]))
    for i, k in enumerate(scales):
        p = {n[len(f"{prefix}.scale{i}."):]: v for n, v in params.items()
             if n.startswith(f"{prefix}.scale{i}.")}
        for t in range(T):
            per_scale[t, i] = ptc_one(s, select(d[t], t, k, "local-topk"), t, k, p)
    return cma(s, per_scale, params[f"{prefix}.cma.weight"], params[f"{prefix}.cma.bias"])


def log_add(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def collapse(path, blank=0):
    out, prev = [], None
    for c in path:
        if c != prev and c != blank:
            out.append(c)
        prev = c
    return tuple(out)


def ctc_log_likelihood(logits, labels):
    """log p(labels | logits) by summing over every one of V**T paths."""
    T, V = logits.shape
    logp = [[v - m - math.log(sum(math.exp(u - m) for u in row)) for v in row]
            for row, m in ((r, max(r)) for r in logits.tolist())]
    total = -math.inf
    for path in itertools.product(range(V), repeat=T):
        if collapse(path) == tuple(labels):
            total = log_add(total, sum(logp[t][c] for t, c in enumerate(path)))
    return total


def min_edit_cost(ref, hyp):
    """Minimum over every monotone alignment, enumerated explicitly.

    An alignment chooses m matched pairs (i_1 < ... < i_m, j_1 < ... < j_m);
    its cost is the number of mismatched pairs plus the unpaired tokens on
    both sides. Exhaustive over m and both index subsets.
    """
    n, h = len(ref), len(hyp)
    best = n + h
    for m in range(1, min(n, h) + 1):
        for ri in itertools.combinations(range(n), m):
            for hi in itertools.combinations(range(h), m):
                subs = sum(ref[a] != hyp[b] for a, b in zip(ri, hi))
                best = min(best, subs + (n - m) + (h - m))
    return best


_PAIRINGS: dict = {}


def _pairings(n, h):
    """For every m, all (ref subset, hyp subset) index pairs as two arrays."""
    key = (n, h)
    if key not in _PAIRINGS:
        out = []
        for m in range(1, min(n, h) + 1):
            rs = list(itertools.combinations(range(n), m))
            hs = list(itertools.combinations(range(h), m))
            ri = np.array([r for r in rs for _ in hs], dtype=np.int64).reshape(-1, m)
            hi = np.array([x for _ in rs for x in hs], dtype=np.int64).reshape(-1, m)
            out.append((m, ri, hi))
        _PAIRINGS[key] = out
    return _PAIRINGS[key]


def min_edit_cost_vectorized(ref, hyp):
    """Same enumeration as ``min_edit_cost`` with numpy doing the inner loop."""
    n, h = len(ref), len(hyp)
    best = n + h
    r, y = np.asarray(ref), np.asarray(hyp)
    for m, ri, hi in _pairings(n, h):
        subs = (r[ri] != y[hi]).sum(axis=1).min()
        best = min(best, int(subs) + (n - m) + (h - m))
    return best


def levenshtein(a, b):
    """Distance-only two-row DP."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]
