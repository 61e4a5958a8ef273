"""RMSprop, gradient clipping and the dev-driven learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import NonFiniteError, Tensor

RMS_ALPHA = 0.95
RMS_EPS = 1e-8
SCHEDULE_THRESHOLD = 1e-3
CLIP_NORM = 5.0


def rmsprop_step(param: np.ndarray, grad: np.ndarray, accum: np.ndarray, lr: float,
                 alpha: float = RMS_ALPHA, eps: float = RMS_EPS) -> tuple[np.ndarray, np.ndarray]:
    """One RMSprop update without momentum; returns ``(param, accum)``.

    ``v = alpha * v + (1 - alpha) * g**2`` and
    ``param = param - lr * g / (sqrt(v) + eps)``.  Inputs are not modified.
    """
    grad = np.asarray(grad)
    if grad.shape != np.shape(param) or grad.shape != np.shape(accum):
        raise ValueError(f"shape mismatch: param {np.shape(param)}, grad {grad.shape}, accum {np.shape(accum)}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient passed to rmsprop_step")
    accum = alpha * accum + (1.0 - alpha) * grad * grad
    return param - lr * grad / (np.sqrt(accum) + eps), accum


def relative_improvement(prev: float, curr: float) -> float:
    if prev <= 0:
        raise ValueError(f"previous dev metric must be positive, got {prev}")
    return (prev - curr) / prev


def lr_schedule_update(history, lr: float, threshold: float = SCHEDULE_THRESHOLD) -> float:
    """Halve ``lr`` when the last dev error improved by less than ``threshold``.

    ``history`` is a sequence of dev error rates, oldest first, or of
    ``(epoch, error)`` pairs.  With a single entry there is nothing to
    compare against and ``lr`` is returned unchanged.
    """
    values = [h[-1] if isinstance(h, (tuple, list)) else h for h in history]
    if not values:
        raise ValueError("history needs at least one dev measurement")
    if len(values) == 1:
        return lr
    r = relative_improvement(float(values[-2]), float(values[-1]))
    # an improvement of exactly `threshold` (e.g. 20 -> 19.98) can round to
    # just below it; values within rounding error count as reaching it
    if r < threshold and not math.isclose(r, threshold, rel_tol=1e-9):
        return lr / 2.0
    return lr


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads))


def clip_grad_norm(grads: list[np.ndarray], max_norm: float = CLIP_NORM) -> tuple[list[np.ndarray], float]:
    """Rescale ``grads`` jointly so their global L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NonFiniteError("non-finite gradient norm")
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


@dataclass
class TrainState:
    """Optimiser state: one accumulator per named parameter, the learning rate
    and the per-epoch dev history ``[(epoch, fer), ...]``."""

    lr: float
    initial_lr: float
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    max_epochs: int = 24
    history: list[tuple[int, float]] = field(default_factory=list)
    alpha: float = RMS_ALPHA
    eps: float = RMS_EPS

    @classmethod
    def create(cls, named_params, lr: float, max_epochs: int = 24, alpha: float = RMS_ALPHA,
               eps: float = RMS_EPS) -> "TrainState":
        acc = {}
        ids = set()
        for name, p in named_params:
            if name in acc or id(p) in ids:
                raise ValueError(f"parameter {name!r} registered twice")
            ids.add(id(p))
            acc[name] = np.zeros_like(p.data)
        return cls(lr=lr, initial_lr=lr, accumulators=acc, max_epochs=max_epochs, alpha=alpha, eps=eps)

    def step(self, named_params, grads: dict[str, np.ndarray]) -> None:
        for name, p in named_params:
            g = grads.get(name)
            if g is None:
                continue
            p.data, self.accumulators[name] = rmsprop_step(p.data, g, self.accumulators[name], self.lr,
                                                           self.alpha, self.eps)

    def end_epoch(self, dev_fer: float, threshold: float = SCHEDULE_THRESHOLD) -> float:
        """Record the epoch's dev error, update the learning rate and return it."""
        if self.epoch >= self.max_epochs:
            raise RuntimeError(f"already ran {self.max_epochs} epochs")
        self.epoch += 1
        self.history.append((self.epoch, float(dev_fer)))
        self.lr = lr_schedule_update(self.history, self.lr, threshold)
        return self.lr


@dataclass
class Hyperparams:
    mode: str = "unidir"
    variant: str = "ligru"
    hidden_sizes: tuple[int, ...] = (48,)
    lr: float = 0.004
    lam: float = 0.1
    dropout: float = 0.1
    batch_size: int = 8
    epochs: int = 24
    seed: int = 0
    precision: str = "double"
    twin_stop_backward_grad: bool = False
    twin_init: str = "mirror"
    clip_norm: float = CLIP_NORM
    rms_alpha: float = RMS_ALPHA
    rms_eps: float = RMS_EPS
    schedule_threshold: float = SCHEDULE_THRESHOLD
    batch_norm: bool | None = None

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.validate()

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)

    def validate(self) -> None:
        if self.mode not in ("unidir", "unitwin", "bidir"):
            raise ValueError(f"mode must be unidir, unitwin or bidir, got {self.mode!r}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden sizes must be positive and non-empty")
        if self.twin_init not in ("mirror", "independent"):
            raise ValueError(f"twin_init must be mirror or independent, got {self.twin_init!r}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"precision must be single or double, got {self.precision!r}")


def as_named_grads(named_params: list[tuple[str, Tensor]]) -> dict[str, np.ndarray]:
    """Gradients of ``named_params``; parameters that got none count as zero."""
    return {n: (p.grad if p.grad is not None else np.zeros_like(p.data)) for n, p in named_params}
