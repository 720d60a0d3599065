"""nnUNet-style 3D U-Net baseline.

``pooling_schedule`` holds one ``(stride, kernel)`` pair per downsampling step.
The stride drives the max-pooling; the kernel is the convolution kernel used at
the resolution level that pooling produces (level 0 uses the first entry's
kernel). The default schedule keeps depth through the first two poolings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError, ShapeError
from .blocks import ModelOutput, PlainBlock, Triple, UpBlock

DEFAULT_SCHEDULE: tuple[tuple[Triple, Triple], ...] = (
    ((1, 2, 2), (1, 3, 3)),
    ((1, 2, 2), (1, 3, 3)),
    ((2, 2, 2), (3, 3, 3)),
    ((2, 2, 2), (3, 3, 3)),
)


@dataclass
class BaselineConfig:
    in_channels: int = 2
    num_classes: int = 2
    base_features: int = 32
    pooling_schedule: tuple[tuple[Triple, Triple], ...] = DEFAULT_SCHEDULE
    deep_supervision_levels: int = 2
    max_features: int = 320

    def __post_init__(self):
        self.pooling_schedule = tuple(
            (tuple(int(v) for v in s), tuple(int(v) for v in k)) for s, k in self.pooling_schedule
        )

    def validate(self) -> "BaselineConfig":
        if not self.pooling_schedule:
            raise ConfigError("pooling_schedule must be nonempty")
        for stride, kernel in self.pooling_schedule:
            if len(stride) != 3 or any(s not in (1, 2) for s in stride):
                raise ConfigError(f"strides must be 1 or 2 per axis, got {stride}")
            if len(kernel) != 3 or any(k < 1 or k % 2 == 0 for k in kernel):
                raise ConfigError(f"kernels must be odd and positive, got {kernel}")
        if not 0 <= self.deep_supervision_levels <= len(self.pooling_schedule):
            raise ConfigError("deep_supervision_levels exceeds the number of decoder levels")
        if self.base_features < 1 or self.num_classes < 2:
            raise ConfigError("base_features >= 1 and num_classes >= 2 required")
        return self

    @property
    def features(self) -> list[int]:
        return [min(self.base_features * 2**i, self.max_features) for i in range(len(self.pooling_schedule) + 1)]

    def to_dict(self) -> dict:
        return asdict(self)


def toy_baseline_config(**overrides) -> BaselineConfig:
    params = dict(base_features=8, pooling_schedule=DEFAULT_SCHEDULE[:2])
    params.update(overrides)
    return BaselineConfig(**params)


def baseline_downsampling(cfg: BaselineConfig) -> tuple[int, int]:
    depth = inplane = 1
    for stride, _ in cfg.pooling_schedule:
        depth *= stride[0]
        inplane *= stride[1]
    return depth, inplane


class BaselineUNet(nn.Module):
    def __init__(self, cfg: BaselineConfig):
        super().__init__()
        self.cfg = cfg.validate()
        feats = cfg.features
        strides = [s for s, _ in cfg.pooling_schedule]
        kernels = [cfg.pooling_schedule[0][1]] + [k for _, k in cfg.pooling_schedule]

        self.encoders = nn.ModuleList([PlainBlock(cfg.in_channels, feats[0], kernels[0])])
        self.pools = nn.ModuleList()
        for i, stride in enumerate(strides):
            self.pools.append(nn.MaxPool3d(kernel_size=stride, stride=stride))
            self.encoders.append(PlainBlock(feats[i], feats[i + 1], kernels[i + 1]))
        self.decoders = nn.ModuleList(
            UpBlock(feats[i + 1], feats[i], strides[i], kernels[i], residual=False) for i in range(len(strides))
        )
        self.head = nn.Conv3d(feats[0], cfg.num_classes, kernel_size=1)
        # aux head k sits on decoder level k + 1; the deepest level is the bottleneck itself
        self.aux_heads = nn.ModuleList(
            nn.Conv3d(feats[k + 1], cfg.num_classes, kernel_size=1) for k in range(cfg.deep_supervision_levels)
        )

    @property
    def downsampling(self) -> tuple[int, int]:
        return baseline_downsampling(self.cfg)

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected (B, {self.cfg.in_channels}, D, H, W), got {tuple(x.shape)}")
        fd, fi = self.downsampling
        d, h, w = x.shape[2:]
        if d % fd or h % fi or w % fi:
            raise ShapeError(f"spatial shape {(d, h, w)} not divisible by ({fd}, {fi}, {fi})")

    def forward(self, x: torch.Tensor) -> ModelOutput:
        self.check_input(x)
        skips = [self.encoders[0](x)]
        for pool, enc in zip(self.pools, self.encoders[1:]):
            skips.append(enc(pool(skips[-1])))
        y = skips[-1]
        decoded = [None] * (len(skips) - 1) + [y]
        for i in reversed(range(len(self.decoders))):
            y = self.decoders[i](y, skips[i])
            decoded[i] = y
        aux = [head(decoded[k + 1]) for k, head in enumerate(self.aux_heads)]
        return ModelOutput(self.head(y), aux)


def build_baseline(cfg: BaselineConfig | None = None) -> BaselineUNet:
    return BaselineUNet(cfg or BaselineConfig())
