"""Yformer: U-Net-coupled sparse-attention forecasting, C++ core."""

from ._core import (
    Yformer,
    conv1d,
    conv_transpose1d,
    elu,
    forecast_metrics,
    gradient_suite,
    layer_norm,
    maxpool1d,
    positional_encoding,
    presets,
    softmax,
    synth_series,
    time_features,
    __version__,
)

__all__ = [
    "Yformer",
    "conv1d",
    "conv_transpose1d",
    "elu",
    "forecast_metrics",
    "gradient_suite",
    "layer_norm",
    "maxpool1d",
    "positional_encoding",
    "presets",
    "softmax",
    "synth_series",
    "time_features",
    "__version__",
]
