"""Spatial-spectral reinforcement gate modules, 2-D and 3-D."""

from __future__ import annotations

import torch.nn as nn

from .blocks import ChannelAttention, Gate, PartialConv, StripConv, StripConv3d
from .core import ModelConfig


class WPGB(nn.Module):
    """Wide-bound perception gate: vertical x horizontal strips, then partial conv."""

    def __init__(self, channels: int, k: int = 15, ratio: float = 0.25, groups="depthwise"):
        super().__init__()
        self.vertical = StripConv(channels, k, "vertical", groups)
        self.horizontal = StripConv(channels, k, "horizontal", groups)
        self.gate = Gate()
        self.partial = PartialConv(channels, ratio)

    def forward(self, x):
        return self.partial(self.gate(self.vertical(x), self.horizontal(x)))


class SEGB(nn.Module):
    """Spectrum enhancement gate: vertical strip x pointwise, then channel attention."""

    def __init__(self, channels: int, k: int = 15, reduction: int = 4, groups="depthwise", negative_slope=0.2):
        super().__init__()
        self.vertical = StripConv(channels, k, "vertical", groups)
        self.pointwise = nn.Conv2d(channels, channels, 1)
        self.gate = Gate()
        self.attention = ChannelAttention(channels, reduction, negative_slope)

    def forward(self, x):
        return self.attention(self.gate(self.vertical(x), self.pointwise(x)))


class SSRGMBlock(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        n = cfg.n_feats
        self.wpgb = WPGB(n, cfg.strip_kernel, cfg.partial_ratio, cfg.strip_groups)
        self.segb = SEGB(n, cfg.strip_kernel, cfg.ca_reduction, cfg.strip_groups, cfg.negative_slope)

    def forward(self, x):
        return x + self.segb(self.wpgb(x))


class SSRGM(nn.Sequential):
    def __init__(self, cfg: ModelConfig, blocks: int = None):
        blocks = cfg.ssrgm_blocks if blocks is None else blocks
        if blocks < 1:
            raise ValueError("SSRGM needs at least one block")
        super().__init__(*[SSRGMBlock(cfg) for _ in range(blocks)])


class SSRGM3dBlock(nn.Module):
    """The gate block lifted to volumes ``[B, F, D, H, W]``.

    Height and width strips are gated and passed through a partial 3-D
    conv; the depth strip of that result is gated with a pointwise 3-D map
    and rescaled by channel attention over ``F``. Residual around the whole.
    """

    def __init__(self, feats: int, k: int, ratio: float = 0.25, reduction: int = 4, negative_slope=0.2):
        super().__init__()
        self.height = StripConv3d(feats, k, "height")
        self.width = StripConv3d(feats, k, "width")
        self.gate_hw = Gate()
        self.partial = PartialConv(feats, ratio, dims=3)
        self.depth = StripConv3d(feats, k, "depth")
        self.pointwise = nn.Conv3d(feats, feats, 1)
        self.gate_d = Gate()
        self.attention = ChannelAttention(feats, reduction, negative_slope)

    def forward(self, v):
        wb = self.partial(self.gate_hw(self.height(v), self.width(v)))
        return v + self.attention(self.gate_d(self.depth(wb), self.pointwise(wb)))


class SSRGM3d(nn.Module):
    """Expand ``[B, C, H, W]`` to a volume, refine, squeeze back."""

    def __init__(self, cfg: ModelConfig, blocks: int = None):
        super().__init__()
        blocks = cfg.ssrgm3d_blocks if blocks is None else blocks
        if blocks < 1:
            raise ValueError("3-D SSRGM needs at least one block")
        f = cfg.feats_3d
        self.lift = nn.Conv3d(1, f, 3, padding=1)
        self.body = nn.Sequential(
            *[
                SSRGM3dBlock(f, cfg.strip_kernel, cfg.partial_ratio, cfg.ca_reduction, cfg.negative_slope)
                for _ in range(blocks)
            ]
        )
        self.squeeze = nn.Conv3d(f, 1, 3, padding=1)

    def forward(self, x):
        return self.squeeze(self.body(self.lift(x.unsqueeze(1)))).squeeze(1)


def wpgb_forward(x, module: WPGB):
    return module(x)


def segb_forward(x, module: SEGB):
    return module(x)


def ssrgm_forward(x, module: SSRGM):
    return module(x)


def ssrgm3d_forward(x, module: SSRGM3d):
    return module(x)
