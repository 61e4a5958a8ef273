"""Frame-by-frame inference with a fixed look-ahead.

A session consumes one feature frame at a time.  The prediction for frame
t needs the context window t-past .. t+future, so it is emitted right
after frame t+future arrives; :meth:`StreamingSession.finalize` flushes the
last ``future`` frames using the same edge replication as offline
windowing.  Only forward-only models can be streamed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..cells import StackParams, cell_step
from ..core import ShapeError, no_grad, ops


class SessionClosedError(RuntimeError):
    pass


@dataclass
class Emission:
    t: int
    posteriors: np.ndarray


@dataclass
class StreamingSession:
    model: StackParams
    future: int = 0
    past: int = 0
    buffer: deque = field(init=False)
    consumed: int = field(init=False, default=0)
    emitted: int = field(init=False, default=0)
    finalized: bool = field(init=False, default=False)
    log: list[tuple[int, int]] = field(init=False, default_factory=list)

    def __post_init__(self):
        if self.model.config.mode != "forward":
            raise ValueError("streaming needs a forward-only model (use strip_backward on a twin model)")
        if self.past < 0 or self.future < 0:
            raise ValueError("context sizes must be non-negative")
        width = self.past + self.future + 1
        if self.model.config.input_size % width:
            raise ShapeError(f"model input size {self.model.config.input_size} is not a multiple of window {width}")
        self.frame_dim = self.model.config.input_size // width
        self.buffer = deque(maxlen=width)
        self._states = [None] * self.model.config.n_layers
        self._dtype = self.model.classifier.W.dtype

    @property
    def latency(self) -> int:
        return self.future

    def _window(self, t: int, last: int) -> np.ndarray:
        # buffer holds frames consumed-len(buffer) .. consumed-1
        first = self.consumed - len(self.buffer)
        idx = np.clip(np.arange(t - self.past, t + self.future + 1), 0, last)
        return np.concatenate([self.buffer[i - first] for i in idx])

    def _emit(self, t: int, last: int) -> Emission:
        x = self._window(t, last)[None, :]
        with no_grad():
            h = x
            for i, layer in enumerate(self.model.forward):
                self._states[i] = cell_step(layer, h, self._states[i])
                h = self._states[i].h
            post = ops.softmax_rows(self.model.classifier(h)).data[0]
        self.emitted += 1
        self.log.append((t, self.consumed))
        return Emission(t, post)

    def push(self, frame) -> list[Emission]:
        """Consume one frame; returns the (zero or one) prediction it unlocks."""
        if self.finalized:
            raise SessionClosedError("session already finalized")
        frame = np.asarray(frame, dtype=self._dtype).reshape(-1)
        if frame.shape[0] != self.frame_dim:
            raise ShapeError(f"frame has {frame.shape[0]} features, expected {self.frame_dim}")
        if not np.all(np.isfinite(frame)):
            raise ValueError("frame contains non-finite values")
        self.buffer.append(frame)
        self.consumed += 1
        t = self.consumed - 1 - self.future
        if t < 0:
            return []
        # last real index is unknown yet; the window never reaches past it
        return [self._emit(t, self.consumed - 1)]

    def finalize(self) -> list[Emission]:
        """Flush the pending predictions at the end of the utterance."""
        if self.finalized:
            raise SessionClosedError("session already finalized")
        self.finalized = True
        last = self.consumed - 1
        return [self._emit(t, last) for t in range(self.emitted, self.consumed)]


def streaming_infer(session: StreamingSession, frame) -> list[Emission]:
    return session.push(frame)


def stream_utterance(model: StackParams, frames: np.ndarray, past: int = 0, future: int = 0) -> np.ndarray:
    """Run a whole utterance through a session; (N, K) posteriors."""
    session = StreamingSession(model, future=future, past=past)
    out = []
    for f in frames:
        out.extend(session.push(f))
    out.extend(session.finalize())
    return np.vstack([e.posteriors for e in out])
