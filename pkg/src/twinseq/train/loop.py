"""The epoch loop: shuffle, batch, forward, loss, backward, clip, update, score."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..cells import StackConfig, StackParams, init_stack, run_stack
from ..core import Graph, NonFiniteError, PRECISIONS, backward, precision
from ..data.features import Corpus, make_batches
from ..eval.inference import evaluate
from ..loss import objective
from .optim import Hyperparams, TrainState, as_named_grads, clip_grad_norm
from .regularization import recurrent_dropout_mask

log = logging.getLogger(__name__)

STACK_MODES = {"unidir": "forward", "unitwin": "twin", "bidir": "bidirectional"}

# Independent random streams, keyed by [seed, stream]; 0-2 are used by init_stack.
SHUFFLE_STREAM = 3
DROPOUT_STREAMS = {"forward": 4, "backward": 5}

DEFAULT_LAMBDAS = (0.1, 0.3, 0.6, 1.0)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_fer: float
    omega: float | None
    lr: float


@dataclass
class TrainResult:
    model: StackParams
    history: list[EpochRecord]
    state: TrainState
    hyper: Hyperparams
    trace: list[dict[str, np.ndarray]] = field(default_factory=list)

    @property
    def final_dev_fer(self) -> float:
        return self.history[-1].dev_fer


def stack_config(hp: Hyperparams, input_size: int, n_classes: int) -> StackConfig:
    return StackConfig(input_size=input_size, hidden_sizes=hp.hidden_sizes, n_classes=n_classes,
                       variant=hp.variant, mode=STACK_MODES[hp.mode], dropout=hp.dropout,
                       batch_norm=hp.batch_norm)


def clip_groups(names: Sequence[str], mode: str) -> list[list[str]]:
    """Parameter groups clipped independently.

    The two halves of a twin model are separate networks coupled only by
    the penalty, so each is clipped on its own norm; with the penalty
    switched off the forward half then trains exactly as a lone forward
    model would.  Other modes form a single group.
    """
    if mode != "unitwin":
        return [list(names)]
    bwd = [n for n in names if n.startswith("backward")]
    fwd = [n for n in names if not n.startswith("backward")]
    return [fwd, bwd]


def _dropout_masks(model: StackParams, p: float, batch_size: int, rngs: dict) -> dict | None:
    if p == 0.0:
        return None
    masks = {}
    dtype = model.classifier.W.dtype
    for branch in ("forward", "backward"):
        layers = getattr(model, branch)
        for i, layer in enumerate(layers or []):
            masks[(branch, i)] = recurrent_dropout_mask(layer.hidden_size, p, rngs[branch], batch_size, dtype)
    return masks


def train_run(corpus: Corpus, hp: Hyperparams, *, train_split: str = "train", dev_split: str = "dev",
              record_trace: bool = False, on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train one model from scratch and score it on the dev split every epoch.

    With ``record_trace`` a copy of every parameter is kept after each
    epoch (used to compare parameter trajectories between runs).
    """
    train, dev = corpus.split(train_split), corpus.split(dev_split)
    if not train or not dev:
        raise ValueError("train and dev splits must be non-empty")
    dtype = PRECISIONS[hp.precision]
    with precision(hp.precision):
        config = stack_config(hp, corpus.feature_dim, corpus.n_classes)
        model = init_stack(config, hp.seed, dtype, hp.twin_init)
        named = model.named_parameters()
        state = TrainState.create(named, hp.lr, hp.epochs, hp.rms_alpha, hp.rms_eps)
        groups = clip_groups([n for n, _ in named], hp.mode)
        shuffle_rng = np.random.default_rng([hp.seed, SHUFFLE_STREAM])
        drop_rngs = {b: np.random.default_rng([hp.seed, s]) for b, s in DROPOUT_STREAMS.items()}
        lam = hp.lam if hp.mode == "unitwin" else 0.0
        history, trace = [], []

        for epoch in range(1, hp.epochs + 1):
            loss_sum, n_utts = 0.0, 0
            for step, batch in enumerate(make_batches(train, hp.batch_size, shuffle_rng, dtype)):
                masks = _dropout_masks(model, hp.dropout, batch.size, drop_rngs)
                for _, p in named:
                    p.grad = None
                try:
                    with Graph():
                        out = run_stack(model, batch.frames, training=True, mask=batch.mask,
                                        dropout_masks=masks)
                        loss = objective(out, batch.labels, batch.mask, lam, hp.twin_stop_backward_grad)
                        backward(loss.tensor)
                    grads = as_named_grads(named)
                    for group in groups:
                        clipped, _ = clip_grad_norm([grads[n] for n in group], hp.clip_norm)
                        grads.update(zip(group, clipped))
                except NonFiniteError as exc:
                    raise DivergenceError(
                        f"non-finite values in epoch {epoch}, batch {step} (lr={state.lr:g}, "
                        f"utterances {batch.ids[:3]}...): {exc}") from exc
                state.step(named, grads)
                loss_sum += loss.total * batch.size
                n_utts += batch.size
            dev_result = evaluate(model, dev, max(hp.batch_size, 32))
            lr = state.end_epoch(dev_result.fer, hp.schedule_threshold)
            rec = EpochRecord(epoch, loss_sum / n_utts, dev_result.fer, dev_result.omega, lr)
            history.append(rec)
            if record_trace:
                trace.append({n: p.data.copy() for n, p in named})
            log.info("epoch %d loss %.4f dev FER %.4f lr %g", epoch, rec.train_loss, rec.dev_fer, lr)
            if on_epoch is not None:
                on_epoch(rec)
            if not math.isfinite(rec.train_loss):
                raise DivergenceError(f"train loss became {rec.train_loss} in epoch {epoch}")
    return TrainResult(model, history, state, hp, trace)


@dataclass
class GridResult:
    lam: float
    runs: list[TrainResult]

    @property
    def mean_dev_fer(self) -> float:
        return float(np.mean([r.final_dev_fer for r in self.runs]))


def grid_search(corpus: Corpus, hp: Hyperparams, lambdas: Sequence[float] = DEFAULT_LAMBDAS,
                seeds: Sequence[int] | None = None, **kwargs) -> tuple[GridResult, list[GridResult]]:
    """Train one model per (lambda, seed) and pick the lambda with the lowest
    mean final dev error; returns ``(best, all results)``."""
    if not lambdas:
        raise ValueError("need at least one lambda")
    seeds = [hp.seed] if seeds is None else list(seeds)
    results = []
    for lam in lambdas:
        runs = [train_run(corpus, replace(hp, lam=lam, seed=s), **kwargs) for s in seeds]
        results.append(GridResult(float(lam), runs))
    best = min(results, key=lambda g: g.mean_dev_fer)
    return best, results

