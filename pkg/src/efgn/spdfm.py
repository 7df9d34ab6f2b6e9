"""Shuffled and progressive dilated fusion: feedback from the previous band group."""

from __future__ import annotations

import torch
import torch.nn as nn

from .blocks import DilatedStack, channel_shuffle
from .core import ModelConfig


class SPDFM(nn.Module):
    """Build a group's updated input from its LR bands and two feedback guidances.

    The channel guidance is the previous group's raw bands passed through a
    parameter-free channel shuffle; the spatial guidance is the previous
    group's extracted feature passed through a dilated convolution stack.
    Both are concatenated with the current bands and fused by a 3x3 conv
    (no activation) into ``n_feats`` channels.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.bands = cfg.bands_per_group
        self.n_feats = cfg.n_feats
        self.pieces = cfg.shuffle_pieces
        self.dilated = DilatedStack(cfg.n_feats, cfg.dilation_rates, cfg.negative_slope)
        self.fuse = nn.Conv2d(2 * cfg.bands_per_group + cfg.n_feats, cfg.n_feats, 3, padding=1)

    @property
    def in_channels(self) -> int:
        return self.fuse.in_channels

    def guidance(self, prev_bands, prev_feature):
        return channel_shuffle(prev_bands, self.pieces), self.dilated(prev_feature)

    def forward(self, bands, prev_bands=None, prev_feature=None):
        b, p, h, w = bands.shape
        if p != self.bands:
            raise ValueError(f"expected {self.bands} bands per group, got {p}")
        if prev_bands is None and prev_feature is None:
            # first group: feedback guidances start at zero
            f_c = bands.new_zeros(b, p, h, w)
            f_d = bands.new_zeros(b, self.n_feats, h, w)
        else:
            if prev_bands.shape != bands.shape:
                raise ValueError("previous group bands differ in shape from current bands")
            if prev_feature.shape != (b, self.n_feats, h, w):
                raise ValueError(f"previous feature has shape {tuple(prev_feature.shape)}")
            f_c, f_d = self.guidance(prev_bands, prev_feature)
        return self.fuse(torch.cat([bands, f_c, f_d], dim=1))


def spdfm_forward(I_g, I_prev, F_e_prev, module: SPDFM) -> torch.Tensor:
    return module(I_g, I_prev, F_e_prev)
