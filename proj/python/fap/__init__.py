"""Frequency-aware few-shot learning: wavelet variants, training and evaluation."""

import json as _json

from ._core import (
    ConfigError,
    FapError,
    IoError,
    Model,
    NumericError,
    ShapeError,
    dwt2,
    high_only,
    idwt2,
    low_only,
    mutual_attention,
    noise_variant,
    randn_variant,
    random_conv,
    zeros_variant,
)

__all__ = [
    "ConfigError",
    "FapError",
    "IoError",
    "Model",
    "NumericError",
    "ShapeError",
    "dwt2",
    "effective_config",
    "high_only",
    "idwt2",
    "low_only",
    "mutual_attention",
    "noise_variant",
    "randn_variant",
    "random_conv",
    "robustness",
    "train",
    "zeros_variant",
]


def effective_config(path):
    """The run config at `path` with every default filled in."""
    from ._core import _effective_config

    return _json.loads(_effective_config(str(path)))


def train(config, checkpoint, seed=None, episodes=None):
    """Train per `config`, save the best-validation model to `checkpoint`.

    Returns a summary dict with the per-episode history.
    """
    from ._core import _train

    return _json.loads(_train(str(config), str(checkpoint), seed, episodes))


def robustness(config, checkpoint, episodes=None, pool="test"):
    """Accuracy of a checkpoint on every input variant of the test or probe pool."""
    from ._core import _robustness

    return _json.loads(_robustness(str(config), str(checkpoint), episodes, pool))
