"""Bilinear kernel banks for transposed-convolution upsampling."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .cost_model import upsample_params
from .tensor_core import Filterbank, MacCounter, Tensor, conv_transposed

BankMode = Literal["full_paper", "diagonal"]


def find_params(size: int) -> tuple[int, float]:
    """Return ``(divisor, center)`` of the tent profile for a kernel side."""
    if size < 1:
        raise ValueError("kernel size must be >= 1")
    divisor = (size + 1) // 2
    center = divisor - 0.5 if size % 2 == 0 else divisor - 1.0
    return divisor, center


@dataclass
class BilinearPlane:
    height: int
    width: int
    divisor_h: float
    divisor_w: float
    center_h: float
    center_w: float
    coefficients: np.ndarray


def bilinear_plane(height: int, width: int) -> BilinearPlane:
    divisor_h, center_h = find_params(height)
    divisor_w, center_w = find_params(width)
    ys, xs = np.ogrid[:height, :width]
    coeffs = (1.0 - np.abs(ys - center_h) / divisor_h) * (1.0 - np.abs(xs - center_w) / divisor_w)
    return BilinearPlane(height, width, divisor_h, divisor_w, center_h, center_w, coeffs)


@dataclass
class KernelBank:
    height: int
    width: int
    num_classes: int
    mode: BankMode
    planes: np.ndarray  # (height, width, num_classes, num_classes)

    def filterbank(self) -> Filterbank:
        return Filterbank("transposed", self.planes)


def create_bilinear_kernels(num_classes: int, kernel_dims: tuple[int, int] = (64, 64),
                            mode: BankMode = "full_paper") -> KernelBank:
    """Build the upsampler weight tensor.

    ``full_paper`` copies the bilinear plane into every (input, output) class
    pair, so class logits are summed while upsampling. ``diagonal`` fills only
    the matching pairs, which makes the layer a per-class bilinear upsampler.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    height, width = kernel_dims
    plane = bilinear_plane(height, width).coefficients
    planes = np.zeros((height, width, num_classes, num_classes))
    if mode == "full_paper":
        planes[:] = plane[:, :, None, None]
    elif mode == "diagonal":
        for i in range(num_classes):
            planes[:, :, i, i] = plane
    else:
        raise ValueError(f"unknown bank mode {mode!r}")
    return KernelBank(height, width, num_classes, mode, planes)


def upsample_with_bank(x: Tensor, factor: int, mode: BankMode = "diagonal",
                       counter: MacCounter | None = None) -> Tensor:
    params = upsample_params(factor)
    bank = create_bilinear_kernels(x.channels, (params.kernel, params.kernel), mode)
    return conv_transposed(x, bank.filterbank(), params.stride, params.pad, counter or MacCounter())


def _tent_upsample_axis(values: np.ndarray, x: int, axis: int) -> np.ndarray:
    # sample i sits at output coordinate x*i + (x-1)/2; missing neighbours count as zero
    n = values.shape[axis]
    out_shape = list(values.shape)
    out_shape[axis] = n * x
    out = np.zeros(out_shape)
    moved_in = np.moveaxis(values, axis, 0)
    moved_out = np.moveaxis(out, axis, 0)
    for q in range(n * x):
        for i in range(n):
            dist = abs(q - (x * i + (x - 1) / 2.0))
            if dist < x:
                moved_out[q] += (1.0 - dist / x) * moved_in[i]
    return out


def bilinear_upsample_reference(x: Tensor, factor: int) -> Tensor:
    """Per-channel bilinear upsampling by direct coordinate interpolation.

    Independent of the transposed-convolution path; border pixels follow the
    zero-extension convention, so only interiors are true interpolants.
    """
    if factor < 2 or factor % 2:
        raise ValueError(f"upsampling factor must be even and >= 2, got {factor}")
    rows = _tent_upsample_axis(x.data, factor, axis=0)
    return Tensor(_tent_upsample_axis(rows, factor, axis=1))


def interior_slice(n: int, factor: int) -> slice:
    """Output indices along one axis that have two contributing input samples."""
    return slice(factor // 2, factor * (n - 1) + factor // 2)


def kernels_to_csv(bank: KernelBank) -> str:
    buf = io.StringIO()
    buf.write(f"{bank.height},{bank.width},{bank.num_classes},{bank.mode}\n")
    # i -> j -> y -> x nesting
    for v in np.transpose(bank.planes, (2, 3, 0, 1)).ravel():
        buf.write(f"{v:.17g}\n")
    return buf.getvalue()


def write_kernels_csv(bank: KernelBank, path: str | Path) -> None:
    Path(path).write_text(kernels_to_csv(bank))


def read_kernels_csv(path: str | Path) -> KernelBank:
    lines = Path(path).read_text().split()
    h, w, n, mode = lines[0].split(",")
    h, w, n = int(h), int(w), int(n)
    vals = np.array([float(v) for v in lines[1:]])
    planes = np.transpose(vals.reshape(n, n, h, w), (2, 3, 0, 1))
    return KernelBank(h, w, n, mode, planes)  # type: ignore[arg-type]
