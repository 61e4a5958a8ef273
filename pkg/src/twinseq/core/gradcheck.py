"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Graph, Tensor, backward, no_grad


class NondeterministicError(RuntimeError):
    """The function under test returned different values for identical inputs."""


@dataclass
class GradcheckReport:
    names: list[str]
    analytic: list[np.ndarray]
    numeric: list[np.ndarray]
    rel_errors: list[np.ndarray]
    tolerance: float
    max_rel_error: float = field(init=False)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.max_rel_error = max((float(e.max()) for e in self.rel_errors if e.size), default=0.0)
        self.passed = self.max_rel_error <= self.tolerance

    def worst(self) -> tuple[str, tuple, float]:
        """Name, index and error of the worst entry."""
        best = ("", (), -1.0)
        for name, err in zip(self.names, self.rel_errors):
            if err.size and err.max() > best[2]:
                idx = np.unravel_index(int(err.argmax()), err.shape)
                best = (name, tuple(int(i) for i in idx), float(err.max()))
        return best

    def summary(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        rel = "≤" if self.passed else ">"
        return f"{verdict}, max rel err {self.max_rel_error:.3e} {rel} {self.tolerance:g}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-8), entrywise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of ``f()`` with respect to every entry of ``params``."""
    grads = []
    with no_grad():
        for p in params:
            g = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f().item()
                flat[i] = orig - h
                fm = f().item()
                flat[i] = orig
                gflat[i] = (fp - fm) / (2.0 * h)
            grads.append(g)
    return grads


def analytic_gradient(f: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = True
        p.grad = None
    try:
        with Graph():
            loss = f()
            if loss._node is None:
                # loss does not depend on any parameter
                return [np.zeros_like(p.data) for p in params]
            backward(loss)
        return [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag
            p.grad = None


def gradcheck(f: Callable[[], Tensor], params: Sequence[Tensor], tolerance: float = 1e-4,
              h: float = 1e-5, names: Sequence[str] | None = None) -> GradcheckReport:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` takes no arguments and closes over ``params``; it must be
    deterministic (dropout off or masks frozen).  All parameters must be in
    double precision.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError("gradcheck requires double-precision parameters")
    with no_grad():
        first, second = f().item(), f().item()
    if first != second:
        raise NondeterministicError(f"f returned {first!r} then {second!r} for identical inputs")
    analytic = analytic_gradient(f, params)
    numeric = numeric_gradient(f, params, h)
    errors = [relative_error(a, n) for a, n in zip(analytic, numeric)]
    labels = list(names) if names is not None else [p.name or f"param{i}" for i, p in enumerate(params)]
    return GradcheckReport(labels, analytic, numeric, errors, tolerance)
