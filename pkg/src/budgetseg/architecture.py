"""Symbolic segmentation models: backbone block specs plus the FCN head."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cost_model import BACKBONE_STRIDE, LayerSpec, StructureError, network_cost, same_pad, upsample_params

WIDTH_MULTIPLIERS = (0.25, 0.5, 0.75, 1.0, 1.25)
CLASSIFIER_DEPTHS = (512, 1024, 1536, 2048)
CLASSIFIER_KERNELS = (3, 5, 7, 9, 11)

HEAD_UPSAMPLE = upsample_params(BACKBONE_STRIDE)


class SchemaError(ValueError):
    """A config file that does not parse or does not match its schema."""


def _format_validation_error(source: str, exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{source}: {loc}: {err['msg']}")
    return "\n".join(parts)


def load_json_model(model_cls, path: str | Path):
    """Parse a JSON file into a strict pydantic model, with positioned errors."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return model_cls.model_validate(raw)
    except ValidationError as exc:
        raise SchemaError(_format_validation_error(str(path), exc)) from exc


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class InputShape(_Strict):
    h: int = Field(ge=1)
    w: int = Field(ge=1)
    c: int = Field(default=3, ge=1)


class BlockEntry(_Strict):
    """One backbone entry.

    ``separable`` expands to a depthwise ``kernel x kernel`` layer carrying the
    stride, followed by a pointwise layer to ``out_channels``.
    """

    kind: Literal["separable", "pointwise", "standard"]
    kernel: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)
    out_channels: int = Field(ge=1)

    @model_validator(mode="after")
    def _kernel_matches_kind(self):
        if self.kind == "pointwise" and self.kernel != 1:
            raise ValueError("pointwise entries must use kernel 1")
        if self.kind != "pointwise" and self.kernel % 2 == 0:
            raise ValueError("spatial kernels must be odd")
        if self.kind == "pointwise" and self.stride != 1:
            raise ValueError("pointwise entries must use stride 1")
        return self


class BlockSpecs(_Strict):
    id: str = Field(min_length=1)
    input: InputShape
    layers: list[BlockEntry] = Field(min_length=1)
    cumulative_stride: int

    @model_validator(mode="after")
    def _stride_product(self):
        product = math.prod(e.stride for e in self.layers)
        if product != self.cumulative_stride:
            raise ValueError(
                f"cumulative_stride {self.cumulative_stride} != product of layer strides {product}"
            )
        if self.cumulative_stride != BACKBONE_STRIDE:
            raise ValueError(f"cumulative_stride must be {BACKBONE_STRIDE}, got {self.cumulative_stride}")
        return self

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels


def load_block_specs(path: str | Path) -> BlockSpecs:
    return load_json_model(BlockSpecs, path)


class ModelConfig(_Strict):
    width_multiplier: float
    classifier_depth: int
    classifier_kernel: int
    num_classes: int = Field(ge=1)
    block_specs_id: str

    @field_validator("width_multiplier")
    @classmethod
    def _m_on_grid(cls, v):
        if v not in WIDTH_MULTIPLIERS:
            raise ValueError(f"width_multiplier must be one of {WIDTH_MULTIPLIERS}")
        return v

    @field_validator("classifier_depth")
    @classmethod
    def _d_on_grid(cls, v):
        if v not in CLASSIFIER_DEPTHS:
            raise ValueError(f"classifier_depth must be one of {CLASSIFIER_DEPTHS}")
        return v

    @field_validator("classifier_kernel")
    @classmethod
    def _k_on_grid(cls, v):
        if v not in CLASSIFIER_KERNELS:
            raise ValueError(f"classifier_kernel must be one of {CLASSIFIER_KERNELS}")
        return v


@dataclass(frozen=True)
class SymbolicModel:
    layers: tuple[LayerSpec, ...]
    input_h: int
    input_w: int
    block_specs_id: str
    config: ModelConfig

    def cost(self):
        return network_cost(self.layers, self.input_h, self.input_w)


def scale_channels(base: int, m: float) -> int:
    """Scale a channel count by ``m``, rounded to the nearest multiple of 8 (min 8)."""
    if base < 1 or m <= 0:
        raise ValueError("base must be >= 1 and multiplier > 0")
    return max(8, int(math.floor(base * m / 8 + 0.5)) * 8)


def expand_entries(entries, in_channels: int, m: float = 1.0) -> list[LayerSpec]:
    """Turn block entries into layer specs, scaling every output width by ``m``."""
    layers: list[LayerSpec] = []
    c = in_channels
    for e in entries:
        out = scale_channels(e.out_channels, m)
        if e.kind == "separable":
            pad = same_pad(e.kernel)
            layers.append(LayerSpec("separable", e.kernel, e.kernel, e.stride, pad, c, c))
            layers.append(LayerSpec("pointwise", 1, 1, 1, 0, c, out))
        elif e.kind == "pointwise":
            layers.append(LayerSpec("pointwise", 1, 1, 1, 0, c, out))
        else:
            layers.append(LayerSpec("standard", e.kernel, e.kernel, e.stride, same_pad(e.kernel), c, out))
        c = out
    return layers


def build_fcn_head(backbone_out_channels: int, cfg: ModelConfig) -> list[LayerSpec]:
    c, d, k, n = backbone_out_channels, cfg.classifier_depth, cfg.classifier_kernel, cfg.num_classes
    if c < 1:
        raise ValueError("backbone_out_channels must be >= 1")
    up = HEAD_UPSAMPLE
    return [
        LayerSpec("separable", k, k, 1, same_pad(k), c, c),
        LayerSpec("pointwise", 1, 1, 1, 0, c, d),
        LayerSpec("classifier_1x1", 1, 1, 1, 0, d, n),
        LayerSpec("transposed_upsample", up.kernel, up.kernel, up.stride, up.pad, n, n),
    ]


def build_model(specs: BlockSpecs, cfg: ModelConfig, input_hw: tuple[int, int] | None = None) -> SymbolicModel:
    if specs.id != cfg.block_specs_id:
        raise StructureError(f"config asks for block specs {cfg.block_specs_id!r}, got {specs.id!r}")
    h, w = input_hw or (specs.input.h, specs.input.w)
    if h % BACKBONE_STRIDE or w % BACKBONE_STRIDE:
        raise StructureError(f"input {h}x{w} is not divisible by {BACKBONE_STRIDE}")
    backbone = expand_entries(specs.layers, specs.input.c, cfg.width_multiplier)
    stride = math.prod(layer.stride for layer in backbone)
    if stride != BACKBONE_STRIDE:
        raise StructureError(f"backbone downsamples by {stride}, expected {BACKBONE_STRIDE}")
    head = build_fcn_head(backbone[-1].out_filters, cfg)
    return SymbolicModel(tuple(backbone + head), h, w, specs.id, cfg)


def rescale_block_specs(specs: BlockSpecs, factor: float, keep_last: bool = False) -> BlockSpecs:
    """Multiply every base channel count by ``factor`` (multiples of 8)."""
    entries = []
    for i, e in enumerate(specs.layers):
        if keep_last and i == len(specs.layers) - 1:
            entries.append(e)
        else:
            entries.append(e.model_copy(update={"out_channels": scale_channels(e.out_channels, factor)}))
    return specs.model_copy(update={"layers": entries})


def calibrate_block_specs(specs: BlockSpecs, cfg: ModelConfig, target_megaops: float,
                          factors=None, keep_last: bool = False) -> tuple[BlockSpecs, float]:
    """Pick the channel rescale whose model cost under ``cfg`` is closest to ``target_megaops``.

    Used to produce the shipped reference backbones; returns the rescaled specs
    and the chosen factor.
    """
    if factors is None:
        factors = [0.5 + 0.01 * i for i in range(151)]
    best = None
    for f in factors:
        candidate = rescale_block_specs(specs, f, keep_last)
        err = abs(build_model(candidate, cfg).cost().megaops - target_megaops)
        if best is None or err < best[0]:
            best = (err, candidate, f)
    return best[1], best[2]


def make_cost_fn(block_specs: dict[str, BlockSpecs], input_hw: tuple[int, int] | None = None):
    """Per-image megaops of a grid configuration, memoised per config."""
    cache: dict[ModelConfig, float] = {}

    def cost_fn(cfg: ModelConfig) -> float:
        if cfg not in cache:
            cache[cfg] = build_model(block_specs[cfg.block_specs_id], cfg, input_hw).cost().megaops
        return cache[cfg]

    return cost_fn
