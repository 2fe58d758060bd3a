"""Deployment scenarios: cameras, frame rate, classes and compute budget."""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator

from .architecture import BACKBONE_STRIDE, _Strict, load_json_model

BUILTIN_SCENARIOS = ("parking", "urban", "rural")
BUILTIN_BLOCK_SPECS = ("reference_large", "reference_small")


class ScenarioSpec(_Strict):
    name: str
    num_classes: int = Field(ge=1)
    n_cameras: int = Field(ge=1)
    fps_per_camera: int = Field(ge=1)
    required_accuracy: Literal["low", "medium", "high"] = "medium"
    budget_gops: float = Field(gt=0)
    max_iterations: int = Field(default=200, ge=1)
    input_h: int = Field(default=512, ge=BACKBONE_STRIDE)
    input_w: int = Field(default=1024, ge=BACKBONE_STRIDE)

    @field_validator("input_h", "input_w")
    @classmethod
    def _divisible(cls, v):
        if v % BACKBONE_STRIDE:
            raise ValueError(f"must be divisible by {BACKBONE_STRIDE}")
        return v

    @property
    def images_per_second(self) -> int:
        return self.n_cameras * self.fps_per_camera


def data_path(*parts: str) -> Path:
    return Path(__file__).parent.joinpath("data", *parts)


def resolve(path_or_name: str | Path, kind: str) -> Path:
    """Map a builtin name (``rural``, ``reference_large``) to its packaged file."""
    p = Path(path_or_name)
    if p.exists() or p.suffix:
        return p
    return data_path(kind, f"{path_or_name}.json")


def load_scenario(path: str | Path) -> ScenarioSpec:
    return load_json_model(ScenarioSpec, resolve(path, "scenarios"))
