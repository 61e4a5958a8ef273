"""Finite-difference checks of the training objective on a toy instance.

Every check uses a two-layer, 8-unit stack on 12 frames with 5 classes
and a frozen recurrent-dropout mask.  The per-variant checks run a
forward-only stack under the NLL; the twin check runs a padded
two-utterance batch through both branches and differentiates the full
composite loss (both NLL terms plus the weighted penalty).  A separate
check differentiates the layer-averaged penalty on its own.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .cells import VARIANTS, StackConfig, init_stack, run_stack
from .core import GradcheckReport, gradcheck, precision
from .loss import frame_weights, multi_layer_penalty, objective, twin_penalty

HIDDEN, LAYERS, STEPS, CLASSES, INPUTS = 8, 2, 12, 5, 3
TWIN_VARIANT = "mgru"


def toy_problem(variant: str, mode: str = "forward", seed: int = 0, lam: float = 0.6,
                dropout: float = 0.25, batch: int = 1, penalty_only: bool = False):
    """Model and a closure computing its loss on fixed random data.

    With ``penalty_only`` (twin mode) the closure returns the penalty alone.
    """
    rng = np.random.default_rng([seed, 99])
    cfg = StackConfig(input_size=INPUTS, hidden_sizes=(HIDDEN,) * LAYERS, n_classes=CLASSES,
                      variant=variant, mode=mode, dropout=dropout)
    model = init_stack(cfg, seed)
    X = rng.standard_normal((STEPS, batch, INPUTS))
    labels = rng.integers(0, CLASSES, size=(STEPS, batch))
    mask = np.ones((STEPS, batch), dtype=bool)
    if batch > 1:
        mask[STEPS - 3:, 1] = False
    branches = ("forward", "backward") if mode in ("twin", "bidirectional") else (
        ("backward",) if mode == "backward" else ("forward",))
    masks = None
    if dropout:
        masks = {(b, i): (rng.random((batch, HIDDEN)) >= dropout) / (1.0 - dropout)
                 for b in branches for i in range(LAYERS)}

    def f():
        out = run_stack(model, X, training=True, mask=mask, dropout_masks=masks)
        if penalty_only:
            w = frame_weights(STEPS, batch, mask)
            return multi_layer_penalty([twin_penalty(a, b, w) for a, b in zip(out.forward, out.backward)])
        return objective(out, labels, mask, lam).tensor

    return model, f


def _check(model, f, tolerance: float, skip_classifiers: bool = False) -> GradcheckReport:
    named = model.named_parameters()
    if skip_classifiers:
        named = [(n, p) for n, p in named if "classifier" not in n]
    names, params = zip(*named)
    return gradcheck(f, list(params), tolerance=tolerance, names=list(names))


def check_variant(variant: str, seed: int = 0, tolerance: float = 1e-4) -> GradcheckReport:
    with precision("double"):
        return _check(*toy_problem(variant, "forward", seed), tolerance)


def check_twin(variant: str = TWIN_VARIANT, seed: int = 0, lam: float = 0.6,
               tolerance: float = 1e-4) -> GradcheckReport:
    with precision("double"):
        return _check(*toy_problem(variant, "twin", seed, lam, batch=2), tolerance)


def check_penalty(variant: str = TWIN_VARIANT, seed: int = 0, tolerance: float = 1e-4) -> GradcheckReport:
    """Gradient of the penalty alone; the classifiers do not enter it."""
    with precision("double"):
        return _check(*toy_problem(variant, "twin", seed, batch=2, penalty_only=True), tolerance,
                      skip_classifiers=True)


def gradient_suite(seed: int = 0, tolerance: float = 1e-4) -> Iterator[tuple[str, GradcheckReport]]:
    for variant in VARIANTS:
        yield variant, check_variant(variant, seed, tolerance)
    yield f"penalty ({TWIN_VARIANT})", check_penalty(seed=seed, tolerance=tolerance)
    yield f"twin ({TWIN_VARIANT})", check_twin(seed=seed, tolerance=tolerance)
