"""Convolutional building blocks shared by both architectures."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

Triple = tuple[int, int, int]


@dataclass
class ModelOutput:
    """``main_logits`` at input resolution; ``aux_logits[k]`` at in-plane scale ``1 / 2**(k+1)``."""

    main_logits: torch.Tensor
    aux_logits: list[torch.Tensor] = field(default_factory=list)


def _pad(kernel: Triple) -> Triple:
    return tuple(k // 2 for k in kernel)


class ConvNormAct(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int, kernel: Triple, act: bool = True):
        layers = [
            nn.Conv3d(in_ch, out_ch, kernel, padding=_pad(kernel), bias=False),
            nn.InstanceNorm3d(out_ch, affine=True),
        ]
        if act:
            layers.append(nn.LeakyReLU(0.01, inplace=True))
        super().__init__(*layers)


class ResidualBlock(nn.Module):
    """Two conv-norm layers with a residual path; 1x1x1 projection when widths differ."""

    def __init__(self, in_ch: int, out_ch: int, kernel: Triple):
        super().__init__()
        self.conv1 = ConvNormAct(in_ch, out_ch, kernel)
        self.conv2 = ConvNormAct(out_ch, out_ch, kernel, act=False)
        self.skip = None if in_ch == out_ch else ConvNormAct(in_ch, out_ch, (1, 1, 1), act=False)
        self.act = nn.LeakyReLU(0.01, inplace=True)

    def forward(self, x):
        residual = x if self.skip is None else self.skip(x)
        return self.act(self.conv2(self.conv1(x)) + residual)


class PlainBlock(nn.Sequential):
    """nnUNet-style stack of two conv-norm-LeakyReLU layers."""

    def __init__(self, in_ch: int, out_ch: int, kernel: Triple):
        super().__init__(ConvNormAct(in_ch, out_ch, kernel), ConvNormAct(out_ch, out_ch, kernel))


class UpBlock(nn.Module):
    """Transposed-conv upsampling, concatenation with the skip, then a conv block."""

    def __init__(self, in_ch: int, out_ch: int, factor: Triple, kernel: Triple, residual: bool = True):
        super().__init__()
        self.up = nn.ConvTranspose3d(in_ch, out_ch, kernel_size=factor, stride=factor, bias=False)
        block = ResidualBlock if residual else PlainBlock
        self.block = block(2 * out_ch, out_ch, kernel)

    def forward(self, x, skip):
        return self.block(torch.cat([self.up(x), skip], dim=1))


def kernel_for(factor: Triple) -> Triple:
    """1x3x3 where a level keeps depth, 3x3x3 once depth is downsampled too."""
    return tuple(3 if f > 1 else (1 if i == 0 else 3) for i, f in enumerate(factor))
