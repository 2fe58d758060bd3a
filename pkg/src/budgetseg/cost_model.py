"""Analytic multiply-accumulate accounting for layers and symbolic networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

LayerKind = Literal["separable", "pointwise", "classifier_1x1", "transposed_upsample", "standard"]
LAYER_KINDS = ("separable", "pointwise", "classifier_1x1", "transposed_upsample", "standard")

# per-image downsampling the head upsampler must undo
BACKBONE_STRIDE = 32


class StructureError(ValueError):
    """A layer list that cannot be chained or sized."""

    def __init__(self, message: str, layer_index: int | None = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


@dataclass(frozen=True)
class LayerSpec:
    """One symbolic layer.

    ``separable`` is the depthwise half of a depthwise-separable block: it
    keeps the channel count, so ``out_filters`` must equal ``in_channels``.
    """

    kind: LayerKind
    kernel_h: int
    kernel_w: int
    stride: int
    pad: int
    in_channels: int
    out_filters: int

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        for name in ("kernel_h", "kernel_w", "stride", "in_channels", "out_filters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")
        if self.kind in ("pointwise", "classifier_1x1") and (self.kernel_h, self.kernel_w) != (1, 1):
            raise ValueError(f"{self.kind} layers must have a 1x1 kernel")
        if self.kind == "separable" and self.out_filters != self.in_channels:
            raise ValueError("separable (depthwise) layers preserve the channel count")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class UpsampleParams:
    factor: int
    stride: int
    kernel: int
    pad: int


@dataclass
class LayerCost:
    index: int
    out_h: int
    out_w: int
    macs: int


@dataclass
class CostReport:
    per_layer: list[LayerCost] = field(default_factory=list)
    total_macs: int = 0
    total_ops: int = 0
    megaops: float = 0.0

    def to_dict(self) -> dict:
        return {
            "per_layer": [asdict(c) for c in self.per_layer],
            "total_macs": self.total_macs,
            "total_ops": self.total_ops,
            "megaops": self.megaops,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostReport":
        return cls(
            per_layer=[LayerCost(**c) for c in d["per_layer"]],
            total_macs=int(d["total_macs"]),
            total_ops=int(d["total_ops"]),
            megaops=float(d["megaops"]),
        )


def mac_separable(out_h: int, out_w: int, c_i: int, h_f: int, w_f: int) -> int:
    return out_h * out_w * c_i * h_f * w_f


def mac_pointwise(out_h: int, out_w: int, c_i: int, n_f: int) -> int:
    return out_h * out_w * c_i * n_f


def mac_dsp(out_h: int, out_w: int, c_i: int, h_f: int, w_f: int, n_f: int) -> int:
    return out_h * out_w * c_i * (h_f * w_f + n_f)


def mac_standard(out_h: int, out_w: int, c_i: int, h_f: int, w_f: int, n_f: int) -> int:
    return out_h * out_w * c_i * h_f * w_f * n_f


def mac_transposed(in_h: int, in_w: int, c_i: int, h_f: int, w_f: int, n_f: int) -> int:
    # every input pixel is scattered through the whole kernel, cropped border included
    return in_h * in_w * c_i * h_f * w_f * n_f


def reduction_factor(h_f: int, w_f: int, n_f: int) -> float:
    """Ratio of classical-convolution to depthwise-separable operations."""
    return (h_f * w_f * n_f) / (h_f * w_f + n_f)


def transposed_out_size(i: int, s: int, k: int, p: int) -> int:
    o = (i - 1) * s + k - 2 * p
    if o < 1:
        raise ValueError(f"transposed output size {o} is not positive (i={i}, s={s}, k={k}, p={p})")
    return o


def forward_out_size(i: int, k: int, s: int, p: int) -> int:
    o = (i + 2 * p - k) // s + 1
    if o < 1:
        raise ValueError(f"output size {o} is not positive (i={i}, k={k}, s={s}, p={p})")
    return o


def same_pad(kernel: int) -> int:
    if kernel % 2 == 0:
        raise ValueError(f"SAME padding needs an odd kernel, got {kernel}")
    return (kernel - 1) // 2


def upsample_params(x: int) -> UpsampleParams:
    """Stride, kernel and pad of a transposed convolution that upsamples by ``x``."""
    if x < 2 or x % 2:
        raise ValueError(f"upsampling factor must be even and >= 2, got {x}")
    return UpsampleParams(factor=x, stride=x, kernel=2 * x, pad=x // 2)


def layer_cost(layer: LayerSpec, in_h: int, in_w: int) -> tuple[int, int, int]:
    """Return ``(out_h, out_w, macs)`` for one layer applied to an ``in_h x in_w`` map."""
    if layer.kind == "transposed_upsample":
        out_h = transposed_out_size(in_h, layer.stride, layer.kernel_h, layer.pad)
        out_w = transposed_out_size(in_w, layer.stride, layer.kernel_w, layer.pad)
        macs = mac_transposed(in_h, in_w, layer.in_channels, layer.kernel_h, layer.kernel_w, layer.out_filters)
        return out_h, out_w, macs
    out_h = forward_out_size(in_h, layer.kernel_h, layer.stride, layer.pad)
    out_w = forward_out_size(in_w, layer.kernel_w, layer.stride, layer.pad)
    if layer.kind == "separable":
        macs = mac_separable(out_h, out_w, layer.in_channels, layer.kernel_h, layer.kernel_w)
    elif layer.kind in ("pointwise", "classifier_1x1"):
        macs = mac_pointwise(out_h, out_w, layer.in_channels, layer.out_filters)
    else:
        macs = mac_standard(out_h, out_w, layer.in_channels, layer.kernel_h, layer.kernel_w, layer.out_filters)
    return out_h, out_w, macs


def network_cost(layers: Sequence[LayerSpec], input_h: int, input_w: int) -> CostReport:
    """Propagate spatial sizes through ``layers`` and total their MACs.

    A ``transposed_upsample`` layer must undo exactly the cumulative stride of
    the forward layers before it.
    """
    report = CostReport()
    h, w = input_h, input_w
    cumulative_stride = 1
    prev_channels = None
    for idx, layer in enumerate(layers):
        if prev_channels is not None and layer.in_channels != prev_channels:
            raise StructureError(
                f"expects {layer.in_channels} input channels but previous layer produces {prev_channels}", idx
            )
        if layer.kind == "transposed_upsample":
            if layer.stride != cumulative_stride:
                raise StructureError(
                    f"upsampler stride {layer.stride} does not match cumulative downsampling "
                    f"{cumulative_stride}", idx
                )
            cumulative_stride = 1
        else:
            cumulative_stride *= layer.stride
        try:
            h, w, macs = layer_cost(layer, h, w)
        except ValueError as exc:
            raise StructureError(str(exc), idx) from exc
        report.per_layer.append(LayerCost(idx, h, w, macs))
        report.total_macs += macs
        prev_channels = layer.out_filters
    report.total_ops = 2 * report.total_macs
    report.megaops = report.total_macs / 1e6
    return report


def format_report(report: CostReport, layers: Sequence[LayerSpec] | None = None) -> str:
    rows = [("idx", "kind", "out_h", "out_w", "MACs")]
    for c in report.per_layer:
        kind = layers[c.index].kind if layers is not None else ""
        rows.append((str(c.index), kind, str(c.out_h), str(c.out_w), f"{c.macs:,}"))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(v.rjust(widths[i]) if i != 1 else v.ljust(widths[i]) for i, v in enumerate(r)) for r in rows]
    lines.append(f"total MACs {report.total_macs:,}  ops {report.total_ops:,}  megaops {report.megaops:.3f}")
    return "\n".join(lines)
