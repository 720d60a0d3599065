"""Segmentation architectures and a kind-keyed factory used by training and inference."""

from __future__ import annotations

import torch.nn as nn

from ..errors import ConfigError
from .baseline import BaselineConfig, BaselineUNet, baseline_downsampling, build_baseline, toy_baseline_config
from .blocks import ModelOutput
from .trabs import TraBS, TraBSConfig, build_trabs, count_downsampling, parameter_count, toy_trabs_config

MODEL_KINDS = ("trabs", "baseline")


def config_from_dict(kind: str, params: dict | None = None):
    params = dict(params or {})
    if kind == "trabs":
        return TraBSConfig(**params)
    if kind == "baseline":
        return BaselineConfig(**params)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def toy_config(kind: str):
    if kind == "trabs":
        return toy_trabs_config()
    if kind == "baseline":
        return toy_baseline_config()
    raise ConfigError(f"unknown model kind {kind!r}")


def build_model(kind: str, cfg=None) -> nn.Module:
    if kind == "trabs":
        return build_trabs(cfg)
    if kind == "baseline":
        return build_baseline(cfg)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_downsampling(model: nn.Module) -> tuple[int, int]:
    return model.downsampling


__all__ = [
    "BaselineConfig", "BaselineUNet", "MODEL_KINDS", "ModelOutput", "TraBS", "TraBSConfig",
    "baseline_downsampling", "build_baseline", "build_model", "build_trabs", "config_from_dict",
    "count_downsampling", "model_downsampling", "parameter_count", "toy_baseline_config", "toy_config",
    "toy_trabs_config",
]
