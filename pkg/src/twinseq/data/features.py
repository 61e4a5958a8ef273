"""Utterance containers, context windows, label priors and batching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PRIOR_FLOOR = 1e-8


@dataclass
class FeatureSequence:
    """One utterance: ``frames`` is (N, d), ``labels`` holds N class ids."""

    uid: str
    frames: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"{self.uid}: frames must be a non-empty (N, d) array, got {self.frames.shape}")
        if self.labels.shape != (self.frames.shape[0],):
            raise ValueError(f"{self.uid}: {self.labels.shape[0]} labels for {self.frames.shape[0]} frames")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class Corpus:
    name: str
    feature_dim: int
    n_classes: int
    splits: dict[str, list[FeatureSequence]]
    priors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def split(self, name: str) -> list[FeatureSequence]:
        try:
            utts = self.splits[name]
        except KeyError:
            raise KeyError(f"corpus {self.name!r} has no {name!r} split") from None
        return utts

    def utterances(self) -> Iterable[tuple[str, FeatureSequence]]:
        for split, utts in self.splits.items():
            for u in utts:
                yield split, u

    def windowed(self, past: int, future: int) -> "Corpus":
        """Copy of the corpus with every utterance context-windowed."""
        splits = {
            s: [FeatureSequence(u.uid, context_window(u.frames, past, future), u.labels) for u in utts]
            for s, utts in self.splits.items()
        }
        meta = dict(self.meta, window={"past": past, "future": future})
        return Corpus(self.name, self.feature_dim * (past + future + 1), self.n_classes, splits,
                      self.priors, meta)


def context_window(frames: np.ndarray, past: int = 0, future: int = 0) -> np.ndarray:
    """Stack frames t-past .. t+future into row t, replicating edge frames.

    The result is (N, d * (past + future + 1)); the block at offset
    ``past`` is the original frame.  Using ``future`` frames delays every
    prediction by that many frames in an online setting.
    """
    if past < 0 or future < 0:
        raise ValueError(f"context sizes must be non-negative, got past={past}, future={future}")
    frames = np.asarray(frames)
    n = frames.shape[0]
    if past == 0 and future == 0:
        return frames.copy()
    idx = np.clip(np.arange(n)[:, None] + np.arange(-past, future + 1)[None, :], 0, n - 1)
    return frames[idx].reshape(n, -1)


def compute_label_priors(utterances: Sequence[FeatureSequence], n_classes: int,
                         floor: float = PRIOR_FLOOR) -> np.ndarray:
    """Class frequencies over all frames, floored then renormalised."""
    if not utterances:
        raise ValueError("cannot compute priors of an empty corpus")
    counts = np.zeros(n_classes, dtype=np.float64)
    for u in utterances:
        counts += np.bincount(u.labels, minlength=n_classes)[:n_classes]
    total = counts.sum()
    if total == 0:
        raise ValueError("cannot compute priors: no frames")
    priors = np.maximum(counts / total, floor)
    return priors / priors.sum()


@dataclass
class Batch:
    """Padded, time-major mini-batch.

    ``frames`` is (T, B, d), ``labels`` and ``mask`` are (T, B); T is the
    longest utterance in the batch.
    """

    frames: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray
    ids: list[str]
    indices: list[int]

    @property
    def size(self) -> int:
        return self.frames.shape[1]

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0]


def pad_batch(utterances: Sequence[FeatureSequence], indices: Sequence[int] | None = None,
              dtype=np.float64) -> Batch:
    lengths = np.array([len(u) for u in utterances])
    T, B, d = int(lengths.max()), len(utterances), utterances[0].feature_dim
    frames = np.zeros((T, B, d), dtype=dtype)
    labels = np.zeros((T, B), dtype=np.int64)
    mask = np.zeros((T, B), dtype=bool)
    for b, u in enumerate(utterances):
        n = len(u)
        frames[:n, b] = u.frames
        labels[:n, b] = u.labels
        mask[:n, b] = True
    idx = list(indices) if indices is not None else list(range(B))
    return Batch(frames, labels, mask, lengths, [u.uid for u in utterances], idx)


def make_batches(utterances: Sequence[FeatureSequence], batch_size: int,
                 seed: int | np.random.Generator | None = None, dtype=np.float64) -> list[Batch]:
    """Length-bucketed padded batches.

    Utterances are sorted by length (ties in a seed-dependent order) and cut
    into consecutive groups; the order of the groups is then shuffled.  With
    ``seed=None`` nothing is shuffled.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be at least 1, got {batch_size}")
    n = len(utterances)
    rng = seed if isinstance(seed, np.random.Generator) else (
        np.random.default_rng(seed) if seed is not None else None)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    order = sorted(order, key=lambda i: len(utterances[i]))
    groups = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if rng is not None:
        groups = [groups[i] for i in rng.permutation(len(groups))]
    return [pad_batch([utterances[i] for i in g], [int(i) for i in g], dtype) for g in groups]
