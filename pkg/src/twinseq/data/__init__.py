"""Corpora: synthetic generation, context windows, priors, batching and I/O."""

from .container import CorpusFormatError, read_corpus, write_corpus
from .features import (
    Batch,
    Corpus,
    FeatureSequence,
    compute_label_priors,
    context_window,
    make_batches,
    pad_batch,
)
from .synth import SynthSpec, context_class, generate_synthetic_corpus

__all__ = [
    "Batch", "Corpus", "CorpusFormatError", "FeatureSequence", "SynthSpec",
    "compute_label_priors", "context_class", "context_window", "generate_synthetic_corpus",
    "make_batches", "pad_batch", "read_corpus", "write_corpus",
]
