"""Windowed-attention encoder/decoder for FGT segmentation (SwinUNETR lineage).

Differences from the isotropic SwinUNETR layout:

* the patch embedding and the first patch merging use 1x2x2 geometry, so the
  slice axis keeps full resolution through the first two stages, and the
  convolutional blocks at those levels use 1x3x3 kernels;
* 1x1x1 convolution heads emit auxiliary logits from the two highest-resolution
  decoder levels for multi-scale supervision.

Tensors inside transformer stages are channels-last ``(B, D, H, W, C)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import reduce

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, ShapeError
from .blocks import ModelOutput, ResidualBlock, Triple, UpBlock, kernel_for

NON_ISOTROPIC: tuple[Triple, ...] = ((1, 2, 2), (1, 2, 2), (2, 2, 2), (2, 2, 2))
ISOTROPIC: tuple[Triple, ...] = ((2, 2, 2),) * 4


@dataclass
class TraBSConfig:
    in_channels: int = 2
    num_classes: int = 2
    embed_features: tuple[int, ...] = (24, 48, 96, 192)
    num_heads: tuple[int, ...] = (2, 4, 8, 8)
    window_size: Triple = (2, 7, 7)
    blocks_per_stage: int = 2
    deep_supervision_levels: int = 2
    # Patch-embedding factor followed by one merging factor per later stage.
    downsample_factors: tuple[Triple, ...] = NON_ISOTROPIC
    mlp_ratio: float = 4.0

    def __post_init__(self):
        self.embed_features = tuple(int(f) for f in self.embed_features)
        self.num_heads = tuple(int(h) for h in self.num_heads)
        self.window_size = tuple(int(w) for w in self.window_size)
        self.downsample_factors = tuple(tuple(int(v) for v in f) for f in self.downsample_factors)

    def validate(self) -> "TraBSConfig":
        n = len(self.embed_features)
        if n < 1:
            raise ConfigError("need at least one stage")
        if len(self.num_heads) != n or len(self.downsample_factors) != n:
            raise ConfigError("embed_features, num_heads and downsample_factors must have one entry per stage")
        for a, b in zip(self.embed_features, self.embed_features[1:]):
            if b != 2 * a:
                raise ConfigError(f"embed_features must double between stages, got {self.embed_features}")
        for f, h in zip(self.embed_features, self.num_heads):
            if h < 1 or f % h:
                raise ConfigError(f"{f} features not divisible by {h} heads")
        if len(self.window_size) != 3 or min(self.window_size) < 1:
            raise ConfigError(f"bad window_size {self.window_size}")
        for fac in self.downsample_factors:
            if len(fac) != 3 or any(v not in (1, 2) for v in fac):
                raise ConfigError(f"downsample factors must be 1 or 2 per axis, got {fac}")
        if not 0 <= self.deep_supervision_levels <= n - 1:
            raise ConfigError(f"deep_supervision_levels must be in [0, {n - 1}]")
        if self.blocks_per_stage < 1 or self.in_channels < 1 or self.num_classes < 2:
            raise ConfigError("blocks_per_stage, in_channels >= 1 and num_classes >= 2 required")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def toy_trabs_config(**overrides) -> TraBSConfig:
    """Small preset for CPU tests and desk-scale experiments (windows of 8x64x64)."""
    params = dict(embed_features=(8, 16, 32, 64), num_heads=(1, 2, 4, 4), window_size=(2, 4, 4))
    params.update(overrides)
    return TraBSConfig(**params)


def count_downsampling(cfg: TraBSConfig) -> tuple[int, int]:
    """Total (depth, in-plane) downsampling factor of the encoder."""
    depth = reduce(lambda a, f: a * f[0], cfg.downsample_factors, 1)
    inplane = reduce(lambda a, f: a * f[1], cfg.downsample_factors, 1)
    return depth, inplane


def window_partition(x: torch.Tensor, ws: Triple) -> torch.Tensor:
    b, d, h, w, c = x.shape
    x = x.view(b, d // ws[0], ws[0], h // ws[1], ws[1], w // ws[2], ws[2], c)
    return x.permute(0, 1, 3, 5, 2, 4, 6, 7).reshape(-1, ws[0] * ws[1] * ws[2], c)


def window_reverse(windows: torch.Tensor, ws: Triple, b: int, d: int, h: int, w: int) -> torch.Tensor:
    x = windows.view(b, d // ws[0], h // ws[1], w // ws[2], ws[0], ws[1], ws[2], -1)
    return x.permute(0, 1, 4, 2, 5, 3, 6, 7).reshape(b, d, h, w, -1)


class WindowAttention(nn.Module):
    """Multi-head self-attention within windows, with a learned relative position bias.

    The bias table is sized for the configured window. When a feature map is
    smaller than the window, the effective window shrinks and indexes the
    central part of the same table.
    """

    def __init__(self, dim: int, num_heads: int, window_size: Triple):
        super().__init__()
        self.num_heads = num_heads
        self.window_size = window_size
        self.scale = (dim // num_heads) ** -0.5
        table = reduce(lambda a, w: a * (2 * w - 1), window_size, 1)
        self.relative_position_bias = nn.Parameter(torch.zeros(table, num_heads))
        nn.init.trunc_normal_(self.relative_position_bias, std=0.02)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self._index_cache: dict[Triple, torch.Tensor] = {}

    def _relative_index(self, ws: Triple) -> torch.Tensor:
        if ws not in self._index_cache:
            coords = torch.stack(torch.meshgrid(*[torch.arange(n) for n in ws], indexing="ij")).flatten(1)
            rel = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0)
            full = self.window_size
            rel = rel + torch.tensor([f - 1 for f in full])
            strides = torch.tensor([(2 * full[1] - 1) * (2 * full[2] - 1), 2 * full[2] - 1, 1])
            self._index_cache[ws] = (rel * strides).sum(-1)
        return self._index_cache[ws]

    def forward(self, x: torch.Tensor, ws: Triple, mask: torch.Tensor | None = None) -> torch.Tensor:
        bw, n, c = x.shape
        qkv = self.qkv(x).reshape(bw, n, 3, self.num_heads, c // self.num_heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        index = self._relative_index(ws).to(x.device)
        bias = self.relative_position_bias[index.reshape(-1)].reshape(n, n, -1).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.num_heads, n, n) + mask[None, :, None]
            attn = attn.view(-1, self.num_heads, n, n)
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        return self.proj(out)


def _shift_mask(padded: Triple, ws: Triple, shift: Triple, device) -> torch.Tensor:
    img = torch.zeros((1, *padded, 1), device=device)
    cnt = 0
    ranges = []
    for w, s in zip(ws, shift):
        ranges.append((slice(0, -w), slice(-w, -s), slice(-s, None)) if s else (slice(None),))
    for sd in ranges[0]:
        for sh in ranges[1]:
            for sw in ranges[2]:
                img[:, sd, sh, sw, :] = cnt
                cnt += 1
    windows = window_partition(img, ws).squeeze(-1)
    mask = windows.unsqueeze(1) - windows.unsqueeze(2)
    return mask.masked_fill(mask != 0, -100.0).masked_fill(mask == 0, 0.0)


class SwinBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, window_size: Triple, shifted: bool, mlp_ratio: float = 4.0):
        super().__init__()
        self.window_size = window_size
        self.shifted = shifted
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window_size)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def _attend(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        size = (d, h, w)
        ws = tuple(min(wn, sn) for wn, sn in zip(self.window_size, size))
        shift = tuple(
            wn // 2 if self.shifted and sn > wn else 0 for wn, sn in zip(self.window_size, size)
        )
        pads = [(-sn) % wn for sn, wn in zip(size, ws)]
        x = F.pad(x, (0, 0, 0, pads[2], 0, pads[1], 0, pads[0]))
        padded = (d + pads[0], h + pads[1], w + pads[2])
        mask = None
        if any(shift):
            x = torch.roll(x, shifts=tuple(-s for s in shift), dims=(1, 2, 3))
            mask = _shift_mask(padded, ws, shift, x.device)
        windows = self.attn(window_partition(x, ws), ws, mask)
        x = window_reverse(windows, ws, b, *padded)
        if any(shift):
            x = torch.roll(x, shifts=shift, dims=(1, 2, 3))
        return x[:, :d, :h, :w].contiguous()

    def forward(self, x):
        x = x + self._attend(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """Concatenate each ``factor`` neighbourhood and project to ``out_dim`` features."""

    def __init__(self, dim: int, out_dim: int, factor: Triple):
        super().__init__()
        self.factor = factor
        n = factor[0] * factor[1] * factor[2]
        self.norm = nn.LayerNorm(n * dim)
        self.reduction = nn.Linear(n * dim, out_dim, bias=False)

    def forward(self, x):
        b, d, h, w, c = x.shape
        fd, fh, fw = self.factor
        x = x.view(b, d // fd, fd, h // fh, fh, w // fw, fw, c)
        x = x.permute(0, 1, 3, 5, 2, 4, 6, 7).reshape(b, d // fd, h // fh, w // fw, fd * fh * fw * c)
        return self.reduction(self.norm(x))


class SwinStage(nn.Module):
    def __init__(self, dim: int, depth: int, num_heads: int, window_size: Triple, mlp_ratio: float):
        super().__init__()
        self.blocks = nn.ModuleList(
            SwinBlock(dim, num_heads, window_size, shifted=bool(i % 2), mlp_ratio=mlp_ratio) for i in range(depth)
        )
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)


class TraBS(nn.Module):
    def __init__(self, cfg: TraBSConfig):
        super().__init__()
        self.cfg = cfg.validate()
        feats = cfg.embed_features
        factors = cfg.downsample_factors
        kernels = [kernel_for(f) for f in factors]
        n = len(feats)

        self.patch_embed = nn.Conv3d(cfg.in_channels, feats[0], kernel_size=factors[0], stride=factors[0])
        self.embed_norm = nn.LayerNorm(feats[0])
        self.merges = nn.ModuleList(PatchMerging(feats[i - 1], feats[i], factors[i]) for i in range(1, n))
        self.stages = nn.ModuleList(
            SwinStage(feats[i], cfg.blocks_per_stage, cfg.num_heads[i], cfg.window_size, cfg.mlp_ratio)
            for i in range(n)
        )

        # Convolutional encoder path: one residual block on the raw input and one per stage output.
        self.input_encoder = ResidualBlock(cfg.in_channels, feats[0], kernels[0])
        self.stage_encoders = nn.ModuleList(ResidualBlock(feats[i], feats[i], kernels[i]) for i in range(n))

        # Decoder: stage i+1 -> stage i, then stage 0 -> full resolution.
        self.decoders = nn.ModuleList(
            UpBlock(feats[i + 1], feats[i], factors[i + 1], kernels[i]) for i in range(n - 1)
        )
        self.final_decoder = UpBlock(feats[0], feats[0], factors[0], kernels[0])
        self.head = nn.Conv3d(feats[0], cfg.num_classes, kernel_size=1)
        self.aux_heads = nn.ModuleList(
            nn.Conv3d(feats[k], cfg.num_classes, kernel_size=1) for k in range(cfg.deep_supervision_levels)
        )

    @property
    def downsampling(self) -> tuple[int, int]:
        return count_downsampling(self.cfg)

    def check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"expected (B, {self.cfg.in_channels}, D, H, W), got {tuple(x.shape)}")
        fd, fi = self.downsampling
        d, h, w = x.shape[2:]
        if d % fd or h % fi or w % fi:
            raise ShapeError(f"spatial shape {(d, h, w)} not divisible by ({fd}, {fi}, {fi})")

    def forward(self, x: torch.Tensor) -> ModelOutput:
        self.check_input(x)
        enc_input = self.input_encoder(x)
        h = self.embed_norm(self.patch_embed(x).permute(0, 2, 3, 4, 1))
        skips = []
        for i, stage in enumerate(self.stages):
            if i > 0:
                h = self.merges[i - 1](h)
            h = stage(h)
            skips.append(self.stage_encoders[i](h.permute(0, 4, 1, 2, 3).contiguous()))

        y = skips[-1]
        decoded = [None] * len(skips)
        for i in reversed(range(len(skips) - 1)):
            y = self.decoders[i](y, skips[i])
            decoded[i] = y
        y = self.final_decoder(y, enc_input)
        aux = [head(decoded[k]) for k, head in enumerate(self.aux_heads)]
        return ModelOutput(self.head(y), aux)


def build_trabs(cfg: TraBSConfig | None = None) -> TraBS:
    return TraBS(cfg or TraBSConfig())


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
