"""Synthetic frame-labelling corpus whose labels depend on the next symbol.

A latent symbol sequence is built from constant segments.  Segment
symbols follow a loose second-order rule (with probability
``successor_prob`` the next symbol continues the step from the previous
two segments), so the past carries some information about what comes
next.  Each frame
mixes the embeddings of the previous, current and next latent symbol (a
crude stand-in for coarticulation) and adds Gaussian noise.  The label is
a context class of the (previous, current, next) symbol triple, so frames
that end a segment cannot be labelled from the past alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .features import Corpus, FeatureSequence, compute_label_priors

PREV_MULT = 3
NEXT_MULT = 5


@dataclass
class SynthSpec:
    n_symbols: int = 8
    n_classes: int = 64
    mix: tuple[float, float, float] = (0.2, 0.5, 0.3)
    successor_prob: float = 0.8
    noise: float = 0.75
    feature_dim: int = 16
    length_range: tuple[int, int] = (30, 60)
    segment_range: tuple[int, int] = (3, 8)
    n_train: int = 400
    n_dev: int = 50
    n_test: int = 50
    seed: int = 0
    name: str = "synth"

    def __post_init__(self):
        self.mix = tuple(float(w) for w in self.mix)
        self.length_range = tuple(int(v) for v in self.length_range)
        self.segment_range = tuple(int(v) for v in self.segment_range)
        self.validate()

    def validate(self) -> None:
        if len(self.mix) != 3 or min(self.mix) < 0 or abs(sum(self.mix) - 1.0) > 1e-9:
            raise ValueError(f"mix weights must be 3 non-negative numbers summing to 1, got {self.mix}")
        if self.mix[2] <= 0:
            raise ValueError("the next-symbol mix weight must be positive")
        if self.n_symbols < 2:
            raise ValueError("need at least two latent symbols")
        if self.n_classes % self.n_symbols or self.n_classes // self.n_symbols < 2:
            raise ValueError("n_classes must be a multiple (at least 2x) of n_symbols")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid length range {self.length_range}")
        lo, hi = self.segment_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid segment range {self.segment_range}")
        if not 0.0 <= self.successor_prob <= 1.0:
            raise ValueError(f"successor_prob must be in [0, 1], got {self.successor_prob}")
        if self.noise < 0 or self.feature_dim < 1:
            raise ValueError("noise must be non-negative and feature_dim positive")
        if min(self.n_train, self.n_dev, self.n_test) < 0 or self.n_train == 0:
            raise ValueError("need a non-empty training split")

    @property
    def groups(self) -> int:
        return self.n_classes // self.n_symbols


def context_class(prev, cur, nxt, n_symbols: int, n_classes: int):
    """Class id of a (previous, current, next) symbol triple."""
    groups = n_classes // n_symbols
    return np.asarray(cur) * groups + (PREV_MULT * np.asarray(prev) + NEXT_MULT * np.asarray(nxt)) % groups


def successor(before: int, cur: int, n_symbols: int) -> int:
    """Preferred symbol after segments ``before`` then ``cur`` (never ``cur``)."""
    return (2 * cur - before) % n_symbols


def segment_choice_probs(before: int | None, cur: int, spec: SynthSpec) -> np.ndarray:
    """Distribution of the next segment's symbol given the last two segments."""
    S = spec.n_symbols
    p = np.full(S, 1.0 / (S - 1))
    if before is not None and spec.successor_prob > 0:
        p *= 1.0 - spec.successor_prob
        p[successor(before, cur, S)] += spec.successor_prob
    p[cur] = 0.0
    return p


def sample_latent(n: int, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.segment_range
    S = spec.n_symbols
    out = np.empty(n, dtype=np.int64)
    t, sym, before = 0, int(rng.integers(S)), None
    while t < n:
        length = int(rng.integers(lo, hi + 1))
        out[t:t + length] = sym
        t += length
        # the next segment always changes symbol
        nxt = int(rng.choice(S, p=segment_choice_probs(before, sym, spec)))
        before, sym = sym, nxt
    return out


def previous_segment(latent: np.ndarray) -> np.ndarray:
    """Symbol of the segment before the one containing t (-1 in the first)."""
    out = np.full(len(latent), -1, dtype=np.int64)
    for t in range(1, len(latent)):
        out[t] = latent[t - 1] if latent[t] != latent[t - 1] else out[t - 1]
    return out


def run_lengths(latent: np.ndarray) -> np.ndarray:
    """Frames spent in the current segment up to and including t."""
    r = np.ones(len(latent), dtype=np.int64)
    for t in range(1, len(latent)):
        if latent[t] == latent[t - 1]:
            r[t] = r[t - 1] + 1
    return r


def switch_probability(run: np.ndarray, segment_range: tuple[int, int]) -> np.ndarray:
    """P(segment ends after this frame | it has lasted ``run`` frames)."""
    lo, hi = segment_range
    run = np.asarray(run)
    return np.where(run < lo, 0.0, 1.0 / np.maximum(hi - run + 1, 1))


def shifted(latent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Previous and next symbols, repeating the boundary symbol at the edges."""
    prev = np.concatenate([latent[:1], latent[:-1]])
    nxt = np.concatenate([latent[1:], latent[-1:]])
    return prev, nxt


def next_label_distribution(latent: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """(N, K) distribution of the label at t given the latent past s_1..s_t.

    The last frame of an utterance has no successor, so its label is
    treated as known.
    """
    n, S, K = len(latent), spec.n_symbols, spec.n_classes
    prev, nxt = shifted(latent)
    hazard = switch_probability(run_lengths(latent), spec.segment_range)
    dist = np.zeros((n, K))
    rows = np.arange(n)
    before = previous_segment(latent)
    choice = np.array([segment_choice_probs(None if b < 0 else int(b), int(c), spec)
                       for b, c in zip(before, latent)])
    for v in range(S):
        p = np.where(v == latent, 1.0 - hazard, hazard * choice[:, v])
        np.add.at(dist, (rows, context_class(prev, latent, v, S, K)), p)
    dist[-1] = 0.0
    dist[-1, context_class(prev[-1], latent[-1], nxt[-1], S, K)] = 1.0
    return dist


def ambiguity_stats(latents: list[np.ndarray], labels: list[np.ndarray], spec: SynthSpec) -> dict:
    """Expected label-change rate under resampling of the next symbol, and
    the accuracy of the best guess given the latent past."""
    change, best, frames = 0.0, 0.0, 0
    for s, y in zip(latents, labels):
        dist = next_label_distribution(s, spec)
        change += float((1.0 - dist[np.arange(len(y)), y]).sum())
        best += float(dist.max(axis=1).sum())
        frames += len(y)
    return {"ambiguity_rate": change / frames, "causal_ceiling": best / frames}


def generate_synthetic_corpus(spec: SynthSpec, return_latents: bool = False):
    """Draw a corpus with train/dev/test splits; identical for identical specs.

    Features are stored in single precision so the corpus survives a round
    trip through the binary container unchanged.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    S, K, d = spec.n_symbols, spec.n_classes, spec.feature_dim
    table = rng.standard_normal((S, d))
    w_prev, w_cur, w_next = spec.mix
    splits: dict[str, list[FeatureSequence]] = {}
    latents: dict[str, list[np.ndarray]] = {}
    for split, count in (("train", spec.n_train), ("dev", spec.n_dev), ("test", spec.n_test)):
        splits[split], latents[split] = [], []
        for i in range(count):
            n = int(rng.integers(spec.length_range[0], spec.length_range[1] + 1))
            s = sample_latent(n, spec, rng)
            prev, nxt = shifted(s)
            x = w_prev * table[prev] + w_cur * table[s] + w_next * table[nxt]
            x = x + spec.noise * rng.standard_normal((n, d))
            y = context_class(prev, s, nxt, S, K)
            splits[split].append(FeatureSequence(f"{spec.name}-{split}-{i:05d}", x.astype(np.float32), y))
            latents[split].append(s)
    all_lat = [s for v in latents.values() for s in v]
    all_lab = [u.labels for v in splits.values() for u in v]
    meta = {"synth": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()}}
    meta.update(ambiguity_stats(all_lat, all_lab, spec))
    corpus = Corpus(spec.name, d, K, splits, compute_label_priors(splits["train"], K), meta)
    if return_latents:
        return corpus, latents
    return corpus
