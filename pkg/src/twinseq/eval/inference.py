"""Offline prediction, dev-set scoring and removal of the twin branch."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..cells import StackParams, run_stack
from ..core import no_grad
from ..data.features import FeatureSequence, context_window, make_batches
from ..loss import frame_weights, multi_layer_penalty, twin_penalty
from .metrics import predictions


def strip_backward(model: StackParams) -> StackParams:
    """Forward-only copy of a twin model: its recurrent layers and classifier.

    The copy shares no arrays with ``model``, so later training of the twin
    does not leak into it.
    """
    if model.config.mode != "twin":
        raise ValueError(f"strip_backward needs a twin model, got mode {model.config.mode!r}")
    forward = copy.deepcopy(model.forward)
    classifier = copy.deepcopy(model.classifier)
    return StackParams(model.config.replace(mode="forward"), forward, None, classifier, None)


def predict_offline(model: StackParams, frames: np.ndarray, past: int = 0, future: int = 0) -> np.ndarray:
    """(N, K) posteriors for one utterance, after context windowing."""
    x = context_window(np.asarray(frames), past, future)
    with no_grad():
        return run_stack(model, x.astype(model.classifier.W.dtype)).posteriors.numpy()


@dataclass
class EvalResult:
    fer: float
    omega: float | None
    n_frames: int
    errors: int


def evaluate(model: StackParams, utterances: Sequence[FeatureSequence], batch_size: int = 32) -> EvalResult:
    """Frame error rate of the model's main classifier over ``utterances``.

    In twin mode the main classifier is the forward one, so the score is
    what the deployed forward-only model would get; the twin penalty is
    also reported (averaged per utterance, then over utterances).
    """
    if not utterances:
        raise ValueError("nothing to evaluate")
    dtype = model.classifier.W.dtype
    errors = frames = 0
    omega_sum = 0.0
    twin = model.config.mode == "twin"
    with no_grad():
        for batch in make_batches(utterances, batch_size, None, dtype):
            out = run_stack(model, batch.frames, mask=batch.mask)
            pred = predictions(out.posteriors.data).reshape(batch.n_steps, batch.size)
            errors += int(np.count_nonzero((pred != batch.labels) & batch.mask))
            frames += int(batch.mask.sum())
            if twin:
                w = frame_weights(batch.n_steps, batch.size, batch.mask, dtype)
                omega = multi_layer_penalty([twin_penalty(f, b, w) for f, b in zip(out.forward, out.backward)])
                omega_sum += omega.item() * batch.size
    return EvalResult(errors / frames, omega_sum / len(utterances) if twin else None, frames, errors)
