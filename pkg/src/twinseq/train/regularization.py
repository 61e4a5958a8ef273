"""Recurrent dropout masks and batch normalisation for feed-forward paths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Tensor, ops

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def recurrent_dropout_mask(hidden_size: int, p: float, rng: np.random.Generator,
                           batch_size: int | None = None, dtype=np.float64) -> np.ndarray:
    """Inverted-dropout mask, drawn once per utterance and reused at every step.

    Entries are 0 or 1/(1-p).  With ``batch_size`` set, one row per utterance.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    shape = (hidden_size,) if batch_size is None else (batch_size, hidden_size)
    if p == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return (keep / (1.0 - p)).astype(dtype)


@dataclass
class BatchNormState:
    """Affine parameters and running statistics for one normalised projection."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS
    updates: int = field(default=0)

    @classmethod
    def create(cls, size: int, dtype=np.float64) -> "BatchNormState":
        return cls(
            gamma=Tensor(np.ones((1, size)), requires_grad=True, dtype=dtype),
            beta=Tensor(np.zeros((1, size)), requires_grad=True, dtype=dtype),
            running_mean=np.zeros((1, size), dtype=dtype),
            running_var=np.ones((1, size), dtype=dtype),
        )


def batch_norm(x: Tensor, state: BatchNormState, training: bool,
               weights: np.ndarray | None = None) -> Tensor:
    """Normalise each column of ``x`` (frames x units).

    In training mode the statistics come from the rows selected by ``weights``
    (all rows by default; at least two are required) and the running
    estimates move by ``momentum``.  In evaluation mode the running
    estimates are used and nothing is updated.
    """
    if not training:
        return ops.batch_norm(x, state.gamma, state.beta, eps=state.eps,
                              running=(state.running_mean, state.running_var))
    stats: dict = {}
    out = ops.batch_norm(x, state.gamma, state.beta, eps=state.eps, weights=weights, stats=stats)
    m = state.momentum
    state.running_mean = (1.0 - m) * state.running_mean + m * stats["mean"]
    state.running_var = (1.0 - m) * state.running_var + m * stats["var"]
    state.updates += 1
    return out
