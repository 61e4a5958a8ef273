"""Frame error rate, prior normalisation and likelihood emission files."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, TextIO

import numpy as np


def predictions(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ``np.argmax`` already returns the lowest id on ties."""
    return np.argmax(np.asarray(scores), axis=-1)


def frame_error_rate(scores, labels, mask=None) -> float:
    """Fraction of valid frames whose predicted class differs from the label.

    ``scores`` is either an (N, K) matrix of posteriors/scores or a vector
    of N predicted ids.  ``mask`` (N,) excludes padded frames.
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels).reshape(-1)
    pred = predictions(scores) if scores.ndim == 2 else scores.reshape(-1)
    if pred.shape[0] != labels.shape[0]:
        raise ValueError(f"{pred.shape[0]} predictions for {labels.shape[0]} labels")
    valid = np.ones(labels.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if valid.shape[0] != labels.shape[0]:
        raise ValueError("mask length does not match labels")
    n = int(valid.sum())
    if n == 0:
        raise ValueError("no valid frames to score")
    return float(np.count_nonzero((pred != labels) & valid)) / n


def posterior_to_likelihood(posteriors, priors) -> np.ndarray:
    """Scaled log-likelihoods ``log p(y|x) - log p(y)`` for an HMM decoder."""
    posteriors = np.asarray(posteriors, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64).reshape(-1)
    if posteriors.shape[-1] != priors.shape[0]:
        raise ValueError(f"{posteriors.shape[-1]} classes but {priors.shape[0]} priors")
    if (priors <= 0).any():
        raise ValueError("priors must be strictly positive; apply the floor first")
    with np.errstate(divide="ignore"):
        return np.log(posteriors) - np.log(priors)


def write_likelihoods(target, entries: Iterable[tuple[str, np.ndarray]]) -> None:
    """Write ``(utterance id, N x K log-likelihoods)`` blocks.

    Each block is a header line ``id N K`` followed by N tab-separated rows
    printed with 9 significant digits.
    """
    def emit(fh: TextIO):
        for uid, ll in entries:
            ll = np.asarray(ll)
            fh.write(f"{uid} {ll.shape[0]} {ll.shape[1]}\n")
            for row in ll:
                fh.write("\t".join(f"{v:.9g}" for v in row) + "\n")

    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            emit(fh)
    else:
        emit(target)


def read_likelihoods(path) -> list[tuple[str, np.ndarray]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    out, i = [], 0
    while i < len(lines):
        uid, n, k = lines[i].rsplit(" ", 2)
        n, k = int(n), int(k)
        rows = [np.array(line.split("\t"), dtype=np.float64) for line in lines[i + 1:i + 1 + n]]
        if len(rows) != n or any(r.shape != (k,) for r in rows):
            raise ValueError(f"malformed likelihood block for {uid!r}")
        out.append((uid, np.vstack(rows) if rows else np.zeros((0, k))))
        i += n + 1
    return out
