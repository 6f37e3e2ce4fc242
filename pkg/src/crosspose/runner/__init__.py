"""Prediction sources: files, baselines and external model processes."""

from .predictions import (
    PredictionBatch,
    collect_predictions,
    load_prediction_file,
    oracle_with_noise,
    write_prediction_file,
)
from .session import ExternalSession, external_session, temporal_windows

__all__ = [
    "ExternalSession",
    "PredictionBatch",
    "collect_predictions",
    "external_session",
    "load_prediction_file",
    "oracle_with_noise",
    "temporal_windows",
    "write_prediction_file",
]
