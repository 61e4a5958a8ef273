"""Dense tensors with a tape-based reverse-mode differentiation engine.

Every differentiable operation goes through :func:`apply`, which runs the
kernel, checks the result for NaN/Inf, and, when any input requires a
gradient, records a node on the active :class:`Graph`.  :func:`backward`
replays that tape in reverse order and then clears it.

Kernels live in :mod:`twinseq.core.ops`; this module only knows how to
dispatch to them.
"""

from __future__ import annotations

import contextlib
import math
import threading
from collections import Counter
from typing import Callable, Iterator, Sequence

import numpy as np

PRECISIONS = {"double": np.float64, "single": np.float32}


class ShapeError(ValueError):
    """Operand extents do not conform for the requested operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class GraphError(RuntimeError):
    """Backward was requested on something that is not a recorded scalar."""


class _ThreadState(threading.local):
    def __init__(self) -> None:
        self.graphs: list[Graph] = []
        self.default_graph: Graph | None = None
        self.grad_enabled = True
        self.counters: list[Counter] = []


_state = _ThreadState()
_default_dtype = np.float64

# kind -> kernel(*arrays, exact=bool, **attrs) -> (output, grad_fn)
# grad_fn(grad_out, needs) returns one gradient (or None) per input.
_KERNELS: dict[str, Callable] = {}


def register(kind: str):
    def deco(fn):
        _KERNELS[kind] = fn
        return fn
    return deco


def op_kinds() -> tuple[str, ...]:
    return tuple(sorted(_KERNELS))


def set_default_precision(precision: str) -> None:
    """Select ``"double"`` or ``"single"`` for tensors created without a dtype."""
    global _default_dtype
    try:
        _default_dtype = PRECISIONS[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}; expected one of {sorted(PRECISIONS)}")


def default_dtype():
    return _default_dtype


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    previous = _default_dtype
    set_default_precision(name)
    try:
        yield
    finally:
        globals()["_default_dtype"] = previous


class Tensor:
    """A dense array that can take part in gradient computation.

    Parameters
    ----------
    values : array_like
        Initial contents.  Scalars become shape ``()``.
    requires_grad : bool
        Whether gradients should be accumulated into :attr:`grad`.
    dtype : numpy dtype, optional
        Defaults to the process-wide precision (double unless changed).
    name : str, optional
        Free-form label used in error messages and parameter listings.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(self, values, requires_grad: bool = False, dtype=None, name: str | None = None):
        data = np.array(values, dtype=dtype or _default_dtype)
        if 0 in data.shape:
            raise ShapeError(f"tensor extents must be positive, got {data.shape}")
        if not np.isfinite(data).all():
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".rstrip())
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._node = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; every one of these is a recorded op.
    def __add__(self, other):
        return apply("add", self, as_tensor(other, self.dtype))

    def __radd__(self, other):
        return apply("add", as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return apply("sub", self, as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return apply("sub", as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return apply("mul", self, as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return apply("mul", as_tensor(other, self.dtype), self)

    def __neg__(self):
        return apply("mul", self, as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        return apply("matmul", self, other)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=dtype or _default_dtype), False)


class Node:
    __slots__ = ("kind", "inputs", "output", "backward", "graph")

    def __init__(self, kind, inputs, output, backward, graph):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.backward = backward
        self.graph = graph


class Graph:
    """Ordered record of the differentiable operations executed so far.

    Use as a context manager to scope recording to one mini-batch; the tape
    is cleared on exit and after :func:`backward`.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        for node in self.nodes:
            node.output._node = None
            node.inputs = node.output = node.backward = None
        self.nodes = []

    def __enter__(self) -> "Graph":
        _state.graphs.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _state.graphs.pop()
        assert popped is self, "graph contexts exited out of order"
        self.clear()


def current_graph() -> Graph:
    if _state.graphs:
        return _state.graphs[-1]
    if _state.default_graph is None:
        _state.default_graph = Graph()
    return _state.default_graph


def grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording.  Matmuls switch to the row-exact kernel."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextlib.contextmanager
def count_ops() -> Iterator[Counter]:
    """Count executed operations by kind inside the block."""
    counter: Counter = Counter()
    _state.counters.append(counter)
    try:
        yield counter
    finally:
        _state.counters.remove(counter)


def apply(kind: str, *inputs: Tensor, **attrs) -> Tensor:
    """Run the op ``kind`` on ``inputs`` and record it when gradients are needed."""
    try:
        kernel = _KERNELS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    record = _state.grad_enabled and any(t.requires_grad for t in inputs)
    out, grad_fn = kernel(*[t.data for t in inputs], exact=not record, **attrs)
    # a finite sum implies finite entries; an infinite one may just be overflow
    if not math.isfinite(out.sum()) and not np.isfinite(out).all():
        raise NonFiniteError(f"{kind} produced non-finite values")
    for counter in _state.counters:
        counter[kind] += 1
    result = Tensor._wrap(out, record)
    if record:
        graph = current_graph()
        node = Node(kind, inputs, result, grad_fn, graph)
        result._node = node
        graph.record(node)
    return result


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every ``requires_grad`` ancestor of ``loss``.

    Gradients accumulate into existing ``.grad`` arrays, so callers zero
    parameter gradients between steps.  The loss's graph is cleared afterwards.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    node = loss._node
    if node is None or node.graph is None:
        raise GraphError("loss is not attached to a recorded graph")
    graph = node.graph
    loss.grad = np.ones_like(loss.data)
    try:
        for node in reversed(graph.nodes):
            g = node.output.grad
            if g is None:
                continue
            needs = tuple(inp.requires_grad for inp in node.inputs)
            for inp, gi in zip(node.inputs, node.backward(g, needs)):
                if gi is None or not inp.requires_grad:
                    continue
                inp.grad = gi if inp.grad is None else inp.grad + gi
    finally:
        graph.clear()


def parameters_grads(params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of ``params``, substituting zeros where nothing flowed."""
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
