"""Initialisation, regularisation, optimisation and the training loop."""

from .init import glorot_init, orthogonal_init
from .regularization import BatchNormState, batch_norm, recurrent_dropout_mask
from .optim import (
    Hyperparams,
    TrainState,
    clip_grad_norm,
    lr_schedule_update,
    relative_improvement,
    rmsprop_step,
)

# The epoch loop needs the cell stack, which itself imports this package,
# so it is loaded on first use.
_LAZY = {"train_run", "grid_search", "TrainResult", "EpochRecord", "DivergenceError", "GridResult"}


def __getattr__(name):
    if name in _LAZY:
        from . import loop
        return getattr(loop, name)
    raise AttributeError(name)
