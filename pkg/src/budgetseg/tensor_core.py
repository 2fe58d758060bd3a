"""Naive dense convolution engine with an instrumented MAC counter.

Every convolution here walks the kernel taps one by one and performs the
products for that tap directly. The counter is advanced by the number of
scalar products each step actually evaluated, so it acts as an independent
brute-force check of the analytic formulas in :mod:`budgetseg.cost_model`.

Tensors are stored as float64 arrays in (height, width, channels) order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

FilterKind = Literal["standard", "depthwise", "pointwise", "transposed"]


class ShapeError(ValueError):
    """Raised when tensor/filter shapes are incompatible."""


@dataclass
class MacCounter:
    macs: int = 0

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("MAC increment must be non-negative")
        self.macs += int(n)


@dataclass
class Tensor:
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ShapeError(f"tensor must be 3-D (h, w, c), got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ShapeError(f"all tensor dimensions must be >= 1, got {self.data.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)  # type: ignore[return-value]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def zeros(cls, h: int, w: int, c: int) -> "Tensor":
        return cls(np.zeros((h, w, c)))

    @classmethod
    def from_flat(cls, h: int, w: int, c: int, values) -> "Tensor":
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != h * w * c:
            raise ShapeError(f"expected {h * w * c} values for {h}x{w}x{c}, got {values.size}")
        return cls(values.reshape(h, w, c))


@dataclass
class Filterbank:
    """Convolution weights.

    Layouts by kind:

    - standard / transposed: ``(kernel_h, kernel_w, in_channels, out_channels)``
    - depthwise: ``(kernel_h, kernel_w, in_channels)``
    - pointwise: ``(in_channels, out_channels)``
    """

    kind: FilterKind
    weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected_ndim = {"standard": 4, "transposed": 4, "depthwise": 3, "pointwise": 2}
        if self.kind not in expected_ndim:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.weights.ndim != expected_ndim[self.kind]:
            raise ShapeError(
                f"{self.kind} weights must be {expected_ndim[self.kind]}-D, got shape {self.weights.shape}"
            )
        if min(self.weights.shape) < 1:
            raise ShapeError("filter dimensions must be >= 1")

    @property
    def kernel_h(self) -> int:
        return 1 if self.kind == "pointwise" else self.weights.shape[0]

    @property
    def kernel_w(self) -> int:
        return 1 if self.kind == "pointwise" else self.weights.shape[1]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[-2] if self.kind != "depthwise" else self.weights.shape[2]

    @property
    def out_channels(self) -> int:
        return self.in_channels if self.kind == "depthwise" else self.weights.shape[-1]

    @classmethod
    def random(cls, kind: FilterKind, kernel_h: int, kernel_w: int, in_channels: int,
               out_channels: int, rng: np.random.Generator) -> "Filterbank":
        if kind == "pointwise":
            shape = (in_channels, out_channels)
        elif kind == "depthwise":
            shape = (kernel_h, kernel_w, in_channels)
        else:
            shape = (kernel_h, kernel_w, in_channels, out_channels)
        return cls(kind, rng.standard_normal(shape))


def forward_out_size(i: int, k: int, s: int, p: int) -> int:
    return (i + 2 * p - k) // s + 1


def _check_forward(x: Tensor, f: Filterbank, kind: str, stride: int, pad: int) -> tuple[int, int]:
    if f.kind != kind:
        raise ShapeError(f"expected a {kind} filterbank, got {f.kind}")
    if f.in_channels != x.channels:
        raise ShapeError(f"filter expects {f.in_channels} input channels, tensor has {x.channels}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    out_h = forward_out_size(x.height, f.kernel_h, stride, pad)
    out_w = forward_out_size(x.width, f.kernel_w, stride, pad)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"non-positive output size {out_h}x{out_w}")
    return out_h, out_w


def _tap_view(padded: np.ndarray, ky: int, kx: int, out_h: int, out_w: int, stride: int) -> np.ndarray:
    # input pixels touched by kernel tap (ky, kx) for every output position
    return padded[ky: ky + stride * (out_h - 1) + 1: stride, kx: kx + stride * (out_w - 1) + 1: stride, :]


def _pad(x: Tensor, pad: int) -> np.ndarray:
    return np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))


def conv_depthwise(x: Tensor, f: Filterbank, stride: int, pad: int, counter: MacCounter) -> Tensor:
    out_h, out_w = _check_forward(x, f, "depthwise", stride, pad)
    padded = _pad(x, pad)
    out = np.zeros((out_h, out_w, x.channels))
    for ky in range(f.kernel_h):
        for kx in range(f.kernel_w):
            patch = _tap_view(padded, ky, kx, out_h, out_w, stride)
            prod = patch * f.weights[ky, kx, :]
            out += prod
            counter.add(prod.size)
    return Tensor(out)


def conv_pointwise(x: Tensor, f: Filterbank, counter: MacCounter) -> Tensor:
    if f.kind != "pointwise":
        raise ShapeError(f"expected a pointwise filterbank, got {f.kind}")
    if f.in_channels != x.channels:
        raise ShapeError(f"filter expects {f.in_channels} input channels, tensor has {x.channels}")
    pixels = x.data.reshape(-1, x.channels)
    out = pixels @ f.weights
    counter.add(pixels.shape[0] * pixels.shape[1] * f.weights.shape[1])
    return Tensor(out.reshape(x.height, x.width, f.out_channels))


def conv_standard(x: Tensor, f: Filterbank, stride: int, pad: int, counter: MacCounter) -> Tensor:
    out_h, out_w = _check_forward(x, f, "standard", stride, pad)
    padded = _pad(x, pad)
    out = np.zeros((out_h, out_w, f.out_channels))
    for ky in range(f.kernel_h):
        for kx in range(f.kernel_w):
            patch = _tap_view(padded, ky, kx, out_h, out_w, stride).reshape(-1, x.channels)
            w = f.weights[ky, kx]
            out += (patch @ w).reshape(out_h, out_w, f.out_channels)
            counter.add(patch.shape[0] * patch.shape[1] * w.shape[1])
    return Tensor(out)


def transposed_out_size(i: int, s: int, k: int, p: int) -> int:
    return (i - 1) * s + k - 2 * p


def conv_transposed(x: Tensor, f: Filterbank, stride: int, pad: int, counter: MacCounter) -> Tensor:
    """Scatter-accumulate transposed convolution.

    Each input pixel is multiplied by the whole kernel and added into a
    zero-initialised buffer of side ``(i - 1) * stride + k``; ``pad`` rows and
    columns are then cropped from every side.
    """
    if f.kind != "transposed":
        raise ShapeError(f"expected a transposed filterbank, got {f.kind}")
    if f.in_channels != x.channels:
        raise ShapeError(f"filter expects {f.in_channels} input channels, tensor has {x.channels}")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    out_h = transposed_out_size(x.height, stride, f.kernel_h, pad)
    out_w = transposed_out_size(x.width, stride, f.kernel_w, pad)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"non-positive transposed output size {out_h}x{out_w}")
    full_h = (x.height - 1) * stride + f.kernel_h
    full_w = (x.width - 1) * stride + f.kernel_w
    full = np.zeros((full_h, full_w, f.out_channels))
    pixels = x.data.reshape(-1, x.channels)
    for ky in range(f.kernel_h):
        for kx in range(f.kernel_w):
            w = f.weights[ky, kx]
            contrib = (pixels @ w).reshape(x.height, x.width, f.out_channels)
            full[ky: ky + stride * (x.height - 1) + 1: stride,
                 kx: kx + stride * (x.width - 1) + 1: stride, :] += contrib
            counter.add(pixels.shape[0] * pixels.shape[1] * w.shape[1])
    return Tensor(full[pad: pad + out_h, pad: pad + out_w, :])


# CSV tensor I/O: first line "h,w,c", then h*w*c values in row-major order.

def read_tensor_csv(path: str | Path) -> Tensor:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty tensor file")
    try:
        h, w, c = (int(v) for v in lines[0].split(","))
    except ValueError as exc:
        raise ValueError(f"{path}:1: header must be 'h,w,c' integers") from exc
    values = []
    for lineno, ln in enumerate(lines[1:], start=2):
        for tok in ln.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a number: {tok!r}") from exc
    return Tensor.from_flat(h, w, c, values)


def tensor_to_csv(t: Tensor) -> str:
    buf = io.StringIO()
    h, w, c = t.shape
    buf.write(f"{h},{w},{c}\n")
    for v in t.data.ravel():
        buf.write(f"{v:.17g}\n")
    return buf.getvalue()


def write_tensor_csv(t: Tensor, path: str | Path) -> None:
    Path(path).write_text(tensor_to_csv(t))
