"""Scoring, prior normalisation, twin-branch removal and streaming inference."""

from .inference import EvalResult, evaluate, predict_offline, strip_backward
from .metrics import (
    frame_error_rate,
    posterior_to_likelihood,
    predictions,
    read_likelihoods,
    write_likelihoods,
)
from .streaming import Emission, SessionClosedError, StreamingSession, stream_utterance, streaming_infer

__all__ = [
    "EvalResult", "evaluate", "predict_offline", "strip_backward", "frame_error_rate",
    "posterior_to_likelihood", "predictions", "read_likelihoods", "write_likelihoods",
    "Emission", "SessionClosedError", "StreamingSession", "stream_utterance", "streaming_infer",
]
