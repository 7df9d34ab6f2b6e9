"""Differentiable building blocks shared by the feedback and gate modules."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def channel_shuffle(x: torch.Tensor, pieces: int) -> torch.Tensor:
    """Reshape channels to ``(pieces, C // pieces)``, transpose, flatten."""
    b, c = x.shape[:2]
    if c % pieces:
        raise ValueError(f"{c} channels cannot be split into {pieces} pieces")
    rest = x.shape[2:]
    return x.reshape(b, pieces, c // pieces, *rest).transpose(1, 2).reshape(b, c, *rest)


def shuffle_permutation(c: int, pieces: int) -> list:
    """Source channel of every output channel of :func:`channel_shuffle`."""
    return channel_shuffle(torch.arange(c).view(1, c), pieces).view(-1).tolist()


def channel_unshuffle(x: torch.Tensor, pieces: int) -> torch.Tensor:
    return channel_shuffle(x, x.shape[1] // pieces)


class ChannelShuffle(nn.Module):
    def __init__(self, pieces: int):
        super().__init__()
        self.pieces = pieces

    def forward(self, x):
        return channel_shuffle(x, self.pieces)


class Gate(nn.Module):
    """Elementwise product of two branches."""

    def forward(self, a, b):
        if a.shape != b.shape:
            raise ValueError(f"gate operands differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
        return a * b


def gate(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return Gate()(a, b)


class DilatedStack(nn.Module):
    """3x3 convolutions with growing dilation, each followed by a leaky ReLU."""

    def __init__(self, channels: int, rates=(1, 2, 3), negative_slope: float = 0.2):
        super().__init__()
        rates = list(rates)
        if not rates or rates != sorted(rates):
            raise ValueError("dilation rates must be nonempty and ascending")
        layers = []
        for r in rates:
            layers.append(nn.Conv2d(channels, channels, 3, padding=r, dilation=r))
            layers.append(nn.LeakyReLU(negative_slope))
        self.body = nn.Sequential(*layers)
        self.rates = rates

    @property
    def receptive_field(self) -> int:
        return 1 + sum(2 * r for r in self.rates)

    def forward(self, x):
        return self.body(x)


def _strip_groups(channels: int, groups) -> int:
    return channels if groups == "depthwise" else int(groups)


class StripConv(nn.Module):
    """``1 x k`` (horizontal) or ``k x 1`` (vertical) grouped convolution."""

    def __init__(self, channels: int, k: int, axis: str, groups="depthwise"):
        super().__init__()
        if k % 2 != 1:
            raise ValueError("strip kernel size must be odd")
        if axis == "horizontal":
            kernel, pad = (1, k), (0, k // 2)
        elif axis == "vertical":
            kernel, pad = (k, 1), (k // 2, 0)
        else:
            raise ValueError(f"unknown axis {axis!r}")
        self.axis = axis
        self.conv = nn.Conv2d(channels, channels, kernel, padding=pad, groups=_strip_groups(channels, groups))

    def forward(self, x):
        return self.conv(x)


class StripConv3d(nn.Module):
    """Depthwise strip 3-D convolution along ``depth``, ``height`` or ``width``."""

    def __init__(self, channels: int, k: int, axis: str):
        super().__init__()
        if k % 2 != 1:
            raise ValueError("strip kernel size must be odd")
        kernels = {"depth": (k, 1, 1), "height": (1, k, 1), "width": (1, 1, k)}
        if axis not in kernels:
            raise ValueError(f"unknown axis {axis!r}")
        kernel = kernels[axis]
        self.axis = axis
        self.conv = nn.Conv3d(channels, channels, kernel, padding=tuple(i // 2 for i in kernel), groups=channels)

    def forward(self, x):
        return self.conv(x)


class PartialConv(nn.Module):
    """3x3 (or 3x3x3) convolution on the leading ``floor(C * ratio)`` channels.

    The remaining channels are passed through untouched.
    """

    def __init__(self, channels: int, ratio: float = 0.25, dims: int = 2):
        super().__init__()
        if not 0 < ratio <= 1:
            raise ValueError("partial ratio must lie in (0, 1]")
        self.n_conv = int(channels * ratio)
        if self.n_conv < 1:
            raise ValueError(f"ratio {ratio} leaves no channel to convolve out of {channels}")
        conv = nn.Conv2d if dims == 2 else nn.Conv3d
        self.conv = conv(self.n_conv, self.n_conv, 3, padding=1)

    def forward(self, x):
        head, tail = x[:, : self.n_conv], x[:, self.n_conv :]
        return torch.cat([self.conv(head), tail], dim=1)


class ChannelAttention(nn.Module):
    """Squeeze-and-excitation rescaling; works on 4-D and 5-D maps."""

    def __init__(self, channels: int, reduction: int = 4, negative_slope: float = 0.2):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"reduction {reduction} does not divide {channels} channels")
        hidden = channels // reduction
        self.down = nn.Linear(channels, hidden)
        self.act = nn.LeakyReLU(negative_slope)
        self.up = nn.Linear(hidden, channels)

    def weights(self, x):
        pooled = x.flatten(2).mean(dim=2)
        return torch.sigmoid(self.up(self.act(self.down(pooled))))

    def forward(self, x):
        w = self.weights(x)
        return x * w.view(*w.shape, *([1] * (x.dim() - 2)))


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Depth-to-space: channel ``c*r*r + i*r + j`` lands at offset ``(i, j)``."""
    c = x.shape[1]
    if c % (r * r):
        raise ValueError(f"{c} channels not divisible by {r * r}")
    return F.pixel_shuffle(x, r)


class PixelShuffle(nn.Module):
    def __init__(self, r: int):
        super().__init__()
        self.r = r

    def forward(self, x):
        return pixel_shuffle(x, self.r)


class Upsampler(nn.Sequential):
    """Sub-pixel upsampling by 2 or 4, built from x2 stages of conv + depth-to-space."""

    def __init__(self, channels: int, r: int):
        if r not in (2, 4):
            raise ValueError(f"unsupported upsampling factor {r}")
        layers = []
        for _ in range(r.bit_length() - 1):
            layers.append(nn.Conv2d(channels, 4 * channels, 3, padding=1))
            layers.append(PixelShuffle(2))
        super().__init__(*layers)
        self.r = r


def upsample(x: torch.Tensor, r: int, module: Upsampler = None) -> torch.Tensor:
    module = module if module is not None else Upsampler(x.shape[1], r).to(x.dtype)
    return module(x)
