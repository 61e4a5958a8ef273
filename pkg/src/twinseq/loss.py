"""Training objective: per-direction NLL, the twin penalty and their sum.

For a batch, every quantity is a per-utterance average over that
utterance's real frames, then averaged over utterances with equal weight.
Padded frames carry zero weight.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cells import StackOutput, StateTrajectory
from .core import ShapeError, Tensor, as_tensor, ops

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class LossBreakdown:
    nll_forward: float
    nll_backward: float | None
    omega: float
    lam: float
    total: float
    tensor: Tensor | None = None
    clamped: int = 0


def frame_weights(n_steps: int, batch_size: int = 1, mask: np.ndarray | None = None, dtype=np.float64) -> np.ndarray:
    """(steps * batch, 1) column giving each real frame weight 1 / (N_b * B)."""
    if mask is None:
        mask = np.ones((n_steps, batch_size), dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(n_steps, batch_size)
    lengths = mask.sum(axis=0)
    if (lengths == 0).any():
        raise ValueError("every utterance in a batch needs at least one real frame")
    w = mask / (lengths[None, :] * batch_size)
    return w.reshape(-1, 1).astype(dtype)


def nll(posteriors: Tensor, labels, weights: np.ndarray | None = None) -> Tensor:
    """Negative log-likelihood of ``labels`` under row-wise ``posteriors``.

    Without ``weights`` this is ``-(1/N) sum_t log P(y_t)``.  The log
    argument is floored at 1e-12; floored target entries are logged.
    """
    return _nll(posteriors, labels, weights)[0]


def _nll(posteriors, labels, weights) -> tuple[Tensor, int]:
    posteriors = as_tensor(posteriors)
    labels = np.asarray(labels).reshape(-1)
    n, k = posteriors.shape
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} frames")
    if weights is None:
        weights = np.full((n, 1), 1.0 / n)
    weights = np.asarray(weights, dtype=posteriors.dtype).reshape(n, 1)
    live = weights[:, 0] != 0
    if live.any() and (labels[live].min() < 0 or labels[live].max() >= k):
        raise ValueError(f"label out of range for {k} classes")
    safe = np.where(live, labels, 0)
    picked = np.zeros((n, k), dtype=posteriors.dtype)
    picked[np.arange(n), safe] = weights[:, 0]
    target_p = posteriors.data[np.arange(n), safe]
    clamped = int(np.count_nonzero(live & (target_p < LOG_CLAMP)))
    if clamped:
        log.warning("NLL: %d target probabilities floored at %g", clamped, LOG_CLAMP)
    out = ops.mul(ops.sum(ops.mul(as_tensor(picked), ops.log(posteriors, clamp=LOG_CLAMP))), -1.0)
    return out, clamped


def twin_penalty(fwd: StateTrajectory, bwd: StateTrajectory, weights: np.ndarray | None = None) -> Tensor:
    """Mean squared Euclidean distance between cotemporal states of one layer.

    ``(1/N) sum_t ||h_fwd[t] - h_bwd[t]||^2`` for one utterance; batched
    trajectories are weighted by ``weights`` (see :func:`frame_weights`).
    """
    if len(fwd) != len(bwd):
        raise ShapeError(f"trajectories have {len(fwd)} and {len(bwd)} steps")
    if fwd.hidden_size != bwd.hidden_size:
        raise ShapeError(f"hidden sizes differ: {fwd.hidden_size} vs {bwd.hidden_size}")
    if fwd.batch_size != bwd.batch_size:
        raise ShapeError("trajectories have different batch sizes")
    if weights is None:
        weights = frame_weights(len(fwd), fwd.batch_size, dtype=fwd.hidden[0].dtype)
    sq = ops.square(ops.sub(fwd.stacked(), bwd.stacked()))
    return ops.sum(ops.mul(sq, as_tensor(weights.astype(sq.dtype, copy=False))))


def multi_layer_penalty(penalties) -> Tensor:
    """Arithmetic mean of per-layer penalties."""
    penalties = [as_tensor(p) for p in penalties]
    if not penalties:
        raise ValueError("need at least one layer penalty")
    total = penalties[0]
    for p in penalties[1:]:
        total = ops.add(total, p)
    if len(penalties) == 1:
        return total
    return ops.mul(total, 1.0 / len(penalties))


def _value(x) -> float:
    return x.item() if isinstance(x, Tensor) else float(x)


def composite_loss(nll_fwd, nll_bwd=None, omega=None, lam: float = 0.0) -> LossBreakdown:
    """``nll_fwd + nll_bwd + lam * omega``; only ``nll_fwd`` when the others are absent."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    total = nll_fwd
    if nll_bwd is not None:
        total = total + nll_bwd
        if omega is not None:
            total = total + omega * float(lam)
    return LossBreakdown(
        nll_forward=_value(nll_fwd),
        nll_backward=None if nll_bwd is None else _value(nll_bwd),
        omega=0.0 if omega is None else _value(omega),
        lam=float(lam),
        total=_value(total),
        tensor=total if isinstance(total, Tensor) else None,
    )


def objective(out: StackOutput, labels, mask: np.ndarray | None = None, lam: float = 0.0,
              stop_backward_grad: bool = False) -> LossBreakdown:
    """Loss for one batch produced by :func:`twinseq.cells.run_stack`.

    Twin outputs get both NLL terms and the layer-averaged penalty; every
    other mode uses its single classifier's NLL.  With
    ``stop_backward_grad`` the penalty does not push on the backward branch.
    """
    labels = np.asarray(labels).reshape(-1)
    dtype = out.logits.dtype
    w = frame_weights(out.n_steps, out.batch_size, mask, dtype)
    nll_f, clamped = _nll(out.posteriors, labels, w)
    if out.backward_posteriors is None:
        result = composite_loss(nll_f)
        result.clamped = clamped
        return result
    nll_b, clamped_b = _nll(out.backward_posteriors, labels, w)
    clamped += clamped_b
    layers = []
    for tf, tb in zip(out.forward, out.backward):
        if stop_backward_grad:
            tb = StateTrajectory(tb.direction, [h.detach() for h in tb.hidden], None, tb.batch_size)
        layers.append(twin_penalty(tf, tb, w))
    result = composite_loss(nll_f, nll_b, multi_layer_penalty(layers), lam)
    result.clamped = clamped
    return result
