"""Named parameter storage and finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .tensor import Tensor, no_grad, record_branches


class ParamStore:
    """Mapping from dotted parameter path to a trainable Tensor.

    Iteration is always in lexicographic order of the paths so that every
    consumer (optimiser, checkpoint writer, gradient checker) sees the same
    sequence.
    """

    def __init__(self, tensors: dict[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = {}
        for name, t in (tensors or {}).items():
            self.add(name, t)

    def add(self, name: str, value) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.name = name
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def items(self) -> list[tuple[str, Tensor]]:
        return [(n, self._tensors[n]) for n in self.names()]

    def values(self) -> list[Tensor]:
        return [self._tensors[n] for n in self.names()]

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def subset(self, prefix: str) -> dict[str, Tensor]:
        """Parameters under ``prefix.`` keyed by the remaining path."""
        cut = len(prefix) + 1
        return {n[cut:]: t for n, t in self.items() if n.startswith(prefix + ".")}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self._tensors):
            missing = set(self._tensors) ^ set(arrays)
            raise KeyError(f"parameter sets differ: {sorted(missing)}")
        for n, arr in arrays.items():
            t = self._tensors[n]
            if arr.shape != t.shape:
                raise ValueError(f"{n}: shape {arr.shape} != {t.shape}")
            t.data = np.array(arr, dtype=np.float64)


@dataclass
class GradReport:
    per_param: dict[str, float]
    threshold: float
    worst: dict[str, tuple[int, float, float]] = field(default_factory=dict)
    nudged: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold

    def format(self) -> str:
        lines = []
        for name, err in self.per_param.items():
            flag = "ok" if err < self.threshold else "FAIL"
            moved = self.nudged.get(name, 0)
            note = f" ({moved} nudged)" if moved else ""
            lines.append(f"{name:40s} {err:.3e} {flag}{note}")
        lines.append(f"global max rel. error {self.max_error:.3e} "
                     f"(threshold {self.threshold:g}) -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: ParamStore,
    eps: float = 1e-4,
    threshold: float = 1e-4,
    names: list[str] | None = None,
    nudge: bool = True,
) -> GradReport:
    """Compare backprop gradients of ``fn()`` with central differences.

    ``fn`` closes over ``params`` and must be deterministic. Piecewise-linear
    ops (ReLU, max pooling, top-k selection) have kinks, and a coordinate
    whose ``+-eps`` probes land on different branches gets a meaningless
    difference quotient. With ``nudge`` on, such a coordinate is moved by a
    few multiples of ``eps`` to a spot where the probes and the centre share
    one branch, and both gradients are compared there instead. The number
    of nudged coordinates is reported.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params.zero_grad()
    with record_branches() as base_branches:
        loss = fn()
    _check_scalar(loss.data)
    loss.backward()
    analytic_all = {n: (np.zeros(t.shape) if t.grad is None else t.grad.copy())
                    for n, t in params.items()}

    def probe(flat, i, value):
        flat[i] = value
        with record_branches() as br:
            v = _check_scalar(fn().data)
        return v, br

    per_param: dict[str, float] = {}
    worst: dict[str, tuple[int, float, float]] = {}
    nudged: dict[str, int] = {}
    for name in names or params.names():
        t = params[name]
        analytic = analytic_all[name].reshape(-1).copy()
        numeric = np.empty(t.size)
        flat = t.data.reshape(-1)
        for i in range(t.size):
            orig = flat[i]
            with no_grad():
                fp, bp = probe(flat, i, orig + eps)
                fm, bm = probe(flat, i, orig - eps)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * eps)
            if nudge and not bp == bm == base_branches:
                moved = _nudge(fn, params, name, i, eps, probe)
                if moved is not None:
                    analytic[i], numeric[i] = moved
                    nudged[name] = nudged.get(name, 0) + 1
        err = relative_error(analytic, numeric)
        j = int(np.argmax(err)) if err.size else 0
        per_param[name] = float(err[j]) if err.size else 0.0
        if err.size:
            worst[name] = (j, float(analytic[j]), float(numeric[j]))
    params.zero_grad()
    return GradReport(per_param=per_param, threshold=threshold, worst=worst, nudged=nudged)


_NUDGES = (3.0, -3.0, 10.0, -10.0, 30.0, -30.0, 100.0, -100.0)


def _nudge(fn, params, name, i, eps, probe):
    """(analytic, numeric) at the first kink-free shift of coordinate i, or None."""
    flat = params[name].data.reshape(-1)
    orig = flat[i]
    try:
        for mult in _NUDGES:
            centre = orig + mult * eps
            with no_grad():
                fp, bp = probe(flat, i, centre + eps)
                fm, bm = probe(flat, i, centre - eps)
            if bp != bm:
                continue
            flat[i] = centre
            params.zero_grad()
            with record_branches() as bc:
                loss = fn()
            if bc != bp:
                continue
            loss.backward()
            g = params[name].grad
            return (0.0 if g is None else float(g.reshape(-1)[i])), (fp - fm) / (2.0 * eps)
        return None
    finally:
        flat[i] = orig


def _check_scalar(value: np.ndarray) -> float:
    v = float(np.asarray(value).reshape(-1)[0])
    if not np.isfinite(v):
        raise FloatingPointError("objective became non-finite during the gradient check")
    return v


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initial values."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
