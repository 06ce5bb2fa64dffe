"""Multi-modal few-shot learning: synthetic data, training, evaluation."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    DataError,
    Dataset,
    DimensionError,
    Error,
    NumericError,
    attention_kernel,
    evaluate,
    export_embeddings,
    load_manifest,
    matching_loss,
    protonet_logits,
    set_precision,
    summarize_accuracies,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "Error",
    "NumericError",
    "attention_kernel",
    "evaluate",
    "export_embeddings",
    "generate_synthetic",
    "load_manifest",
    "matching_loss",
    "protonet_logits",
    "set_precision",
    "summarize_accuracies",
    "train",
]


def _as_json(value):
    return value if isinstance(value, str) else _json.dumps(value)


def generate_synthetic(spec=None, **fields):
    """Synthetic dataset from a spec dict (or keyword fields)."""
    return _core.generate_synthetic(_as_json({**(spec or {}), **fields}))


def train(config):
    """Train from a run-config dict; returns a summary dict."""
    return _core.train(_as_json(config))
