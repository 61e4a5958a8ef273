"""Gated recurrent cells and direction-aware stacks.

Four cell variants are supported; ``x`` is a row of input features and
``h`` the previous hidden state (row-vector convention, so input weights
are stored ``input x hidden``):

* ``lstm``:  i, f, o = sigmoid(x W + h U + b), g = tanh(...),
  c' = f*c + i*g, h' = o*tanh(c').  No peepholes.
* ``gru``:   z, r = sigmoid(...), cand = tanh(x W_h + (r*h) U_h + b_h),
  h' = z*h + (1-z)*cand.
* ``mgru``:  the GRU with the reset gate fixed to one.
* ``ligru``: the M-GRU with a ReLU candidate and batch-normalised
  input projections (the batch-norm shift replaces the bias).

Batch normalisation only ever touches the input projections; recurrent
products are never normalised.  Hidden and cell states start at zero.

A backward pass over a sequence is the forward recursion run on the
time-reversed input, with the resulting states put back in cotemporal
order.  Padded batches keep a state frozen on padded frames, which is
what makes the padded backward pass start from zero at each utterance's
real last frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import ShapeError, Tensor, as_tensor, default_dtype, ops
from .core.tensor import NonFiniteError
from .train.init import glorot_init, orthogonal_init
from .train.regularization import BatchNormState, batch_norm

VARIANTS = ("lstm", "gru", "mgru", "ligru")
GATES = {
    "lstm": ("i", "f", "o", "g"),
    "gru": ("z", "r", "h"),
    "mgru": ("z", "h"),
    "ligru": ("z", "h"),
}
MODES = ("forward", "backward", "bidirectional", "twin")
DIRECTIONS = ("forward", "backward")


def default_batch_norm(variant: str) -> bool:
    return variant == "ligru"


@dataclass
class CellParams:
    """Weights of one recurrent layer in one direction."""

    variant: str
    W: dict[str, Tensor]
    U: dict[str, Tensor]
    b: dict[str, Tensor] = field(default_factory=dict)
    bn: dict[str, BatchNormState] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def input_size(self) -> int:
        return next(iter(self.W.values())).shape[0]

    @property
    def hidden_size(self) -> int:
        return next(iter(self.U.values())).shape[0]

    @property
    def gates(self) -> tuple[str, ...]:
        return GATES[self.variant]

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown cell variant {self.variant!r}")
        gates = set(self.gates)
        if set(self.W) != gates or set(self.U) != gates:
            raise ValueError(f"{self.variant} needs gates {sorted(gates)}, got W={sorted(self.W)} U={sorted(self.U)}")
        n_in, n_h = self.input_size, self.hidden_size
        for g in self.gates:
            if self.U[g].shape != (n_h, n_h):
                raise ShapeError(f"U_{g} must be {n_h}x{n_h}, got {self.U[g].shape}")
            if self.W[g].shape != (n_in, n_h):
                raise ShapeError(f"W_{g} must be {n_in}x{n_h}, got {self.W[g].shape}")
            if g in self.bn:
                if g in self.b:
                    raise ValueError(f"gate {g} has both a bias and batch norm")
            elif g not in self.b:
                raise ValueError(f"gate {g} needs a bias or batch norm")
            elif self.b[g].shape != (1, n_h):
                raise ShapeError(f"b_{g} must be 1x{n_h}, got {self.b[g].shape}")

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for g in self.gates:
            out.append((f"{prefix}W_{g}", self.W[g]))
            out.append((f"{prefix}U_{g}", self.U[g]))
            if g in self.bn:
                out.append((f"{prefix}bn_{g}.gamma", self.bn[g].gamma))
                out.append((f"{prefix}bn_{g}.beta", self.bn[g].beta))
            else:
                out.append((f"{prefix}b_{g}", self.b[g]))
        return out


def init_cell(variant: str, input_size: int, hidden_size: int, rng: np.random.Generator,
              batch_norm: bool | None = None, dtype=None) -> CellParams:
    """Glorot input weights, orthogonal recurrent weights, zero biases."""
    dtype = dtype or default_dtype()
    use_bn = default_batch_norm(variant) if batch_norm is None else batch_norm
    W, U, b, bn = {}, {}, {}, {}
    for g in GATES[variant]:
        W[g] = Tensor(glorot_init(input_size, hidden_size, rng, dtype), requires_grad=True, dtype=dtype)
        U[g] = Tensor(orthogonal_init(hidden_size, rng, dtype), requires_grad=True, dtype=dtype)
        if use_bn:
            bn[g] = BatchNormState.create(hidden_size, dtype)
        else:
            b[g] = Tensor(np.zeros((1, hidden_size)), requires_grad=True, dtype=dtype)
    return CellParams(variant, W, U, b, bn)


class CellState(NamedTuple):
    h: Tensor
    c: Tensor | None = None


def zero_state(params: CellParams, batch_size: int = 1) -> CellState:
    dtype = next(iter(params.U.values())).dtype
    h = as_tensor(np.zeros((batch_size, params.hidden_size), dtype=dtype))
    c = as_tensor(np.zeros((batch_size, params.hidden_size), dtype=dtype)) if params.variant == "lstm" else None
    return CellState(h, c)


def feedforward(params: CellParams, x: Tensor, training: bool = False,
                weights: np.ndarray | None = None) -> dict[str, Tensor]:
    """Input projections ``x W_g (+ b_g)`` or ``BN(x W_g)`` for every gate.

    ``x`` holds one frame per row, so this can run over a whole padded
    sequence at once; ``weights`` marks the rows that count for batch stats.
    """
    if x.shape[-1] != params.input_size:
        raise ShapeError(f"input has {x.shape[-1]} features, layer expects {params.input_size}")
    out = {}
    for g in params.gates:
        proj = ops.matmul(x, params.W[g])
        if g in params.bn:
            out[g] = batch_norm(proj, params.bn[g], training, weights)
        else:
            out[g] = ops.add(proj, params.b[g])
    return out


def recurrent_step(params: CellParams, ff: dict[str, Tensor], prev: CellState,
                   drop_mask: Tensor | None = None) -> CellState:
    """One recursion step given precomputed input projections ``ff``."""
    U = params.U
    h_prev = prev.h
    hr = h_prev if drop_mask is None else ops.mul(h_prev, drop_mask)
    v = params.variant
    if v == "lstm":
        i = ops.sigmoid(ops.add(ff["i"], ops.matmul(hr, U["i"])))
        f = ops.sigmoid(ops.add(ff["f"], ops.matmul(hr, U["f"])))
        o = ops.sigmoid(ops.add(ff["o"], ops.matmul(hr, U["o"])))
        g = ops.tanh(ops.add(ff["g"], ops.matmul(hr, U["g"])))
        c = ops.add(ops.mul(f, prev.c), ops.mul(i, g))
        return CellState(ops.mul(o, ops.tanh(c)), c)
    z = ops.sigmoid(ops.add(ff["z"], ops.matmul(hr, U["z"])))
    if v == "gru":
        r = ops.sigmoid(ops.add(ff["r"], ops.matmul(hr, U["r"])))
        cand = ops.tanh(ops.add(ff["h"], ops.matmul(ops.mul(r, hr), U["h"])))
    elif v == "mgru":
        cand = ops.tanh(ops.add(ff["h"], ops.matmul(hr, U["h"])))
    else:
        cand = ops.relu(ops.add(ff["h"], ops.matmul(hr, U["h"])))
    # z*h + (1-z)*cand, written with one fewer op
    return CellState(ops.add(cand, ops.mul(z, ops.sub(h_prev, cand))))


def cell_step(params: CellParams, x_t, prev: CellState | None = None,
              drop_mask: Tensor | None = None) -> CellState:
    """Advance one layer by one frame (evaluation-mode batch norm).

    ``x_t`` is a feature vector or a (batch, features) block; ``prev``
    defaults to the zero state.
    """
    dtype = next(iter(params.U.values())).dtype
    x = x_t if isinstance(x_t, Tensor) else as_tensor(np.asarray(x_t, dtype=dtype))
    if x.ndim == 1:
        x = as_tensor(x.data[None, :])
    if prev is None:
        prev = zero_state(params, x.shape[0])
    if prev.h.shape != (x.shape[0], params.hidden_size):
        raise ShapeError(f"previous state has shape {prev.h.shape}, expected {(x.shape[0], params.hidden_size)}")
    return recurrent_step(params, feedforward(params, x), prev, drop_mask)


@dataclass
class StateTrajectory:
    """Hidden (and LSTM cell) states of one layer, in cotemporal order.

    ``hidden[t]`` is the (batch, hidden) state at frame ``t`` whatever the
    direction the layer scanned in.
    """

    direction: str
    hidden: list[Tensor]
    cell: list[Tensor] | None = None
    batch_size: int = 1

    def __len__(self) -> int:
        return len(self.hidden)

    @property
    def hidden_size(self) -> int:
        return self.hidden[0].shape[1]

    def stacked(self) -> Tensor:
        """All states as one (steps * batch, hidden) tensor, time-major."""
        return ops.concat(self.hidden, axis=0)

    def numpy(self) -> np.ndarray:
        """States as a (steps, batch, hidden) array."""
        return np.stack([h.data for h in self.hidden])


class _Sequence:
    """Per-call view of a (possibly padded) time-major batch."""

    def __init__(self, n_steps: int, batch_size: int, mask: np.ndarray | None, dtype):
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.mask = None
        if mask is not None:
            mask = np.asarray(mask, dtype=bool).reshape(n_steps, batch_size)
            if not mask.all():
                self.mask = mask
        self.dtype = dtype

    def weights(self, reverse: bool) -> np.ndarray | None:
        if self.mask is None:
            return None
        m = self.mask[::-1] if reverse else self.mask
        return m.reshape(-1, 1).astype(self.dtype)

    def step_masks(self, reverse: bool):
        if self.mask is None:
            return None
        m = self.mask[::-1] if reverse else self.mask
        keep = [as_tensor(row[:, None].astype(self.dtype)) for row in m]
        hold = [as_tensor((~row[:, None]).astype(self.dtype)) for row in m]
        return list(zip(keep, hold))


def _reverse_rows(x: np.ndarray, n_steps: int, batch_size: int) -> np.ndarray:
    # contiguous copy: a negative-stride view can take a different summation path in matmul
    return np.ascontiguousarray(x.reshape(n_steps, batch_size, -1)[::-1].reshape(n_steps * batch_size, -1))


def _layer_input(source, reverse: bool, seq: _Sequence) -> Tensor:
    """Input rows for one layer in processing order.

    ``source`` is either a constant (steps * batch, features) array or a
    list of per-step state lists whose columns are concatenated.
    """
    if isinstance(source, np.ndarray):
        return as_tensor(_reverse_rows(source, seq.n_steps, seq.batch_size) if reverse else source)
    blocks = []
    for steps in source:
        ordered = steps[::-1] if reverse else steps
        blocks.append(ops.concat(ordered, axis=0))
    return ops.concat(blocks, axis=1)


def _scan(params: CellParams, x: Tensor, seq: _Sequence, reverse: bool, training: bool,
          drop_mask: Tensor | None) -> list[CellState]:
    B = seq.batch_size
    ff_all = feedforward(params, x, training, seq.weights(reverse))
    masks = seq.step_masks(reverse)
    state = zero_state(params, B)
    states = []
    for t in range(seq.n_steps):
        if seq.n_steps == 1:
            ff = ff_all
        else:
            ff = {g: ops.slice_rows(v, t * B, (t + 1) * B) for g, v in ff_all.items()}
        new = recurrent_step(params, ff, state, drop_mask)
        if masks is not None:
            keep, hold = masks[t]
            h = ops.add(ops.mul(keep, new.h), ops.mul(hold, state.h))
            c = None if new.c is None else ops.add(ops.mul(keep, new.c), ops.mul(hold, state.c))
            new = CellState(h, c)
        state = new
        states.append(state)
    return states


def _trajectory(states: list[CellState], direction: str, reverse: bool, batch_size: int) -> StateTrajectory:
    if reverse:
        states = states[::-1]
    hidden = [s.h for s in states]
    cell = [s.c for s in states] if states[0].c is not None else None
    return StateTrajectory(direction, hidden, cell, batch_size)


def run_direction(params: CellParams, X, direction: str = "forward", *, training: bool = False,
                  mask: np.ndarray | None = None, batch_size: int = 1,
                  drop_mask: np.ndarray | Tensor | None = None) -> StateTrajectory:
    """Run one layer over a sequence in ``direction``.

    ``X`` is a (steps * batch, features) array in time-major order, or a
    list of per-step (batch, features) tensors.  ``mask`` marks real frames
    of a padded batch.  The returned trajectory is in cotemporal order.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if isinstance(X, Tensor):
        X = X.data if not X.requires_grad else [ops.slice_rows(X, t * batch_size, (t + 1) * batch_size)
                                               for t in range(X.shape[0] // batch_size)]
    if isinstance(X, np.ndarray):
        X = np.asarray(X, dtype=default_dtype()) if X.dtype.kind != "f" else X
        if X.ndim != 2 or X.shape[0] == 0:
            raise ShapeError(f"need a non-empty (frames, features) sequence, got shape {X.shape}")
        n_steps = X.shape[0] // batch_size
        dtype = X.dtype
        source = X
    else:
        if len(X) == 0:
            raise ShapeError("empty sequence")
        n_steps = len(X)
        dtype = X[0].dtype
        source = [list(X)]
    seq = _Sequence(n_steps, batch_size, mask, dtype)
    reverse = direction == "backward"
    dm = as_tensor(drop_mask) if drop_mask is not None else None
    states = _scan(params, _layer_input(source, reverse, seq), seq, reverse, training, dm)
    return _trajectory(states, direction, reverse, batch_size)


def combine_bidirectional(h_fwd, h_bwd) -> Tensor:
    """Concatenate cotemporal forward and backward states: ``[h_fwd; h_bwd]``."""
    f, b = as_tensor(h_fwd), as_tensor(h_bwd)
    if f.ndim == 1 and b.ndim == 1:
        return as_tensor(np.concatenate([f.data, b.data]))
    if f.ndim != 2 or b.ndim != 2 or f.shape[0] != b.shape[0]:
        raise ShapeError(f"cannot combine states of shape {f.shape} and {b.shape}")
    return ops.concat([f, b], axis=1)


@dataclass(frozen=True)
class StackConfig:
    """Architecture of a recurrent stack and its classifier."""

    input_size: int
    hidden_sizes: tuple[int, ...]
    n_classes: int
    variant: str = "ligru"
    mode: str = "forward"
    dropout: float = 0.0
    batch_norm: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown cell variant {self.variant!r}; expected one of {VARIANTS}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if len(self.hidden_sizes) < 1 or min(self.hidden_sizes) < 1:
            raise ValueError("need at least one layer with a positive hidden size")
        if self.n_classes < 2:
            raise ValueError("need at least two output classes")
        if self.input_size < 1:
            raise ValueError("input size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)

    @property
    def use_batch_norm(self) -> bool:
        return default_batch_norm(self.variant) if self.batch_norm is None else self.batch_norm

    def replace(self, **changes) -> "StackConfig":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class Linear:
    W: Tensor
    b: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.W), self.b)


def init_linear(n_in: int, n_out: int, rng: np.random.Generator, dtype=None) -> Linear:
    dtype = dtype or default_dtype()
    return Linear(Tensor(glorot_init(n_in, n_out, rng, dtype), requires_grad=True, dtype=dtype),
                  Tensor(np.zeros((1, n_out)), requires_grad=True, dtype=dtype))


@dataclass
class StackParams:
    """A full model: recurrent layers per direction plus classifier(s).

    ``backward_classifier`` exists only in twin mode, where the backward
    branch is a training-time helper with its own prediction head.
    """

    config: StackConfig
    forward: list[CellParams] | None
    backward: list[CellParams] | None
    classifier: Linear
    backward_classifier: Linear | None = None

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for branch, layers in (("forward", self.forward), ("backward", self.backward)):
            for i, layer in enumerate(layers or []):
                out.extend(layer.named_parameters(f"{branch}.{i}."))
        out += [("classifier.W", self.classifier.W), ("classifier.b", self.classifier.b)]
        if self.backward_classifier is not None:
            out += [("backward_classifier.W", self.backward_classifier.W),
                    ("backward_classifier.b", self.backward_classifier.b)]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def batch_norm_states(self) -> list[tuple[str, BatchNormState]]:
        out = []
        for branch, layers in (("forward", self.forward), ("backward", self.backward)):
            for i, layer in enumerate(layers or []):
                out.extend((f"{branch}.{i}.bn_{g}", s) for g, s in layer.bn.items())
        return out

    def count_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


TWIN_INITS = ("mirror", "independent")


def _copy_param(t: Tensor) -> Tensor:
    return Tensor(t.data.copy(), requires_grad=True, dtype=t.dtype)


def _copy_cell(cell: CellParams) -> CellParams:
    bn = {g: BatchNormState.create(cell.hidden_size, s.running_mean.dtype) for g, s in cell.bn.items()}
    for g, s in cell.bn.items():
        bn[g].gamma, bn[g].beta = _copy_param(s.gamma), _copy_param(s.beta)
    return CellParams(cell.variant, {g: _copy_param(w) for g, w in cell.W.items()},
                      {g: _copy_param(u) for g, u in cell.U.items()},
                      {g: _copy_param(b) for g, b in cell.b.items()}, bn)


def init_stack(config: StackConfig, seed: int, dtype=None, twin_init: str = "independent") -> StackParams:
    """Initialise a model; each branch draws from its own random stream.

    The forward branch (and, outside bidirectional mode, its classifier)
    uses stream ``[seed, 0]`` and the backward branch stream ``[seed, 1]``,
    so a twin model's forward half starts out identical to a forward-only
    model built with the same seed.  With ``twin_init="mirror"`` the twin
    backward branch and its classifier start as copies of the forward ones
    (the parameters are still separate), so the penalty initially compares
    states expressed in the same units.
    """
    if twin_init not in TWIN_INITS:
        raise ValueError(f"twin_init must be one of {TWIN_INITS}, got {twin_init!r}")
    dtype = dtype or default_dtype()

    def build(rng):
        layers, n_in = [], config.input_size
        for h in config.hidden_sizes:
            layers.append(init_cell(config.variant, n_in, h, rng, config.use_batch_norm, dtype))
            n_in = 2 * h if config.mode == "bidirectional" else h
        return layers

    mode = config.mode
    top = config.hidden_sizes[-1]
    fwd = bwd = clf = bclf = None
    if mode in ("forward", "bidirectional", "twin"):
        rng = np.random.default_rng([seed, 0])
        fwd = build(rng)
        if mode != "bidirectional":
            clf = init_linear(top, config.n_classes, rng, dtype)
    if mode in ("backward", "bidirectional", "twin"):
        rng = np.random.default_rng([seed, 1])
        bwd = build(rng)
        if mode == "backward":
            clf = init_linear(top, config.n_classes, rng, dtype)
        elif mode == "twin":
            bclf = init_linear(top, config.n_classes, rng, dtype)
    if mode == "twin" and twin_init == "mirror":
        bwd = [_copy_cell(layer) for layer in fwd]
        bclf = Linear(_copy_param(clf.W), _copy_param(clf.b))
    if mode == "bidirectional":
        clf = init_linear(2 * top, config.n_classes, np.random.default_rng([seed, 2]), dtype)
    return StackParams(config, fwd, bwd, clf, bclf)


@dataclass
class StackOutput:
    """Result of :func:`run_stack`.  Row ``t * batch + b`` is frame t of utterance b."""

    n_steps: int
    batch_size: int
    forward: list[StateTrajectory] | None
    backward: list[StateTrajectory] | None
    logits: Tensor
    posteriors: Tensor
    backward_logits: Tensor | None = None
    backward_posteriors: Tensor | None = None


def _as_batch(X) -> tuple[np.ndarray, int, int]:
    X = np.asarray(X)
    if X.dtype.kind != "f":
        X = X.astype(default_dtype())
    if X.ndim == 2:
        n, b = X.shape[0], 1
    elif X.ndim == 3:
        n, b = X.shape[0], X.shape[1]
    else:
        raise ShapeError(f"input must be (frames, features) or (frames, batch, features), got {X.shape}")
    if n == 0 or b == 0:
        raise ShapeError("empty sequence")
    return X.reshape(n * b, X.shape[-1]), n, b


def run_stack(model: StackParams, X, *, training: bool = False, mask: np.ndarray | None = None,
              dropout_masks: dict[tuple[str, int], np.ndarray] | None = None) -> StackOutput:
    """Run every layer of ``model`` over ``X`` and classify each frame.

    ``X`` is (frames, features) for one utterance or (frames, batch,
    features) for a padded batch described by ``mask`` (frames, batch).
    ``dropout_masks`` maps ``(branch, layer)`` to a (batch, hidden) mask;
    layers without an entry are not dropped.
    """
    cfg = model.config
    flat, n_steps, B = _as_batch(X)
    if flat.shape[1] != cfg.input_size:
        raise ShapeError(f"input has {flat.shape[1]} features, model expects {cfg.input_size}")
    flat = flat.astype(model.classifier.W.dtype, copy=False)
    seq = _Sequence(n_steps, B, mask, flat.dtype)
    dropout_masks = dropout_masks or {}

    def dm(branch, i):
        m = dropout_masks.get((branch, i))
        if m is None:
            return None
        return as_tensor(np.broadcast_to(m, (B, m.shape[-1])).astype(flat.dtype))

    def run_branch(branch: str, layers: list[CellParams]) -> list[StateTrajectory]:
        reverse = branch == "backward"
        trajs, source = [], flat
        for i, layer in enumerate(layers):
            states = _scan(layer, _layer_input(source, reverse, seq), seq, reverse, training, dm(branch, i))
            trajs.append(_trajectory(states, branch, reverse, B))
            source = [trajs[-1].hidden]
        return trajs

    fwd = bwd = None
    if cfg.mode == "bidirectional":
        fwd, bwd = [], []
        source = flat
        for i, (lf, lb) in enumerate(zip(model.forward, model.backward)):
            sf = _scan(lf, _layer_input(source, False, seq), seq, False, training, dm("forward", i))
            sb = _scan(lb, _layer_input(source, True, seq), seq, True, training, dm("backward", i))
            fwd.append(_trajectory(sf, "forward", False, B))
            bwd.append(_trajectory(sb, "backward", True, B))
            source = [fwd[-1].hidden, bwd[-1].hidden]
        top = combine_bidirectional(fwd[-1].stacked(), bwd[-1].stacked())
        logits = model.classifier(top)
        return StackOutput(n_steps, B, fwd, bwd, logits, ops.softmax_rows(logits))

    if model.forward is not None:
        fwd = run_branch("forward", model.forward)
    if model.backward is not None:
        bwd = run_branch("backward", model.backward)
    if cfg.mode == "twin":
        for i, (tf, tb) in enumerate(zip(fwd, bwd)):
            if tf.hidden_size != tb.hidden_size or len(tf) != len(tb):
                raise ShapeError(f"twin layer {i}: forward {tf.hidden_size} vs backward {tb.hidden_size} units")
    head = fwd if cfg.mode in ("forward", "twin") else bwd
    logits = model.classifier(head[-1].stacked())
    out = StackOutput(n_steps, B, fwd, bwd, logits, ops.softmax_rows(logits))
    if cfg.mode == "twin":
        out.backward_logits = model.backward_classifier(bwd[-1].stacked())
        out.backward_posteriors = ops.softmax_rows(out.backward_logits)
    return out


__all__ = [
    "VARIANTS", "GATES", "MODES", "DIRECTIONS", "CellParams", "CellState", "StateTrajectory",
    "StackConfig", "StackParams", "StackOutput", "Linear", "init_cell", "init_linear",
    "init_stack", "TWIN_INITS", "zero_state", "feedforward", "recurrent_step", "cell_step",
    "run_direction", "run_stack", "combine_bidirectional", "default_batch_norm",
    "NonFiniteError",
]
