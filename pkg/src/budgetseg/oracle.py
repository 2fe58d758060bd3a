"""Run a symbolic layer list through the reference engine and count MACs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .cost_model import LayerSpec
from .tensor_core import (
    Filterbank,
    MacCounter,
    Tensor,
    conv_depthwise,
    conv_pointwise,
    conv_standard,
    conv_transposed,
)


def run_layer(x: Tensor, layer: LayerSpec, rng: np.random.Generator, counter: MacCounter) -> Tensor:
    kh, kw, ci, nf = layer.kernel_h, layer.kernel_w, layer.in_channels, layer.out_filters
    if layer.kind == "separable":
        return conv_depthwise(x, Filterbank.random("depthwise", kh, kw, ci, ci, rng), layer.stride, layer.pad, counter)
    if layer.kind in ("pointwise", "classifier_1x1"):
        return conv_pointwise(x, Filterbank.random("pointwise", 1, 1, ci, nf, rng), counter)
    if layer.kind == "standard":
        return conv_standard(x, Filterbank.random("standard", kh, kw, ci, nf, rng), layer.stride, layer.pad, counter)
    return conv_transposed(x, Filterbank.random("transposed", kh, kw, ci, nf, rng), layer.stride, layer.pad, counter)


def engine_macs(layers: Sequence[LayerSpec], input_h: int, input_w: int, seed: int = 0) -> list[int]:
    """Per-layer MAC counts measured by executing ``layers`` on random data."""
    if not layers:
        return []
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((input_h, input_w, layers[0].in_channels)))
    counts = []
    for layer in layers:
        counter = MacCounter()
        x = run_layer(x, layer, rng, counter)
        counts.append(counter.macs)
    return counts
