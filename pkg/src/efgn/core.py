"""Shared data model: cubes, band partitions, configs and shape contracts.

Layout is channel-first everywhere: a cube is ``[C, H, W]`` and batched
feature maps are ``[B, C, H, W]``. The 3-D refinement stage works on
``[B, F, D, H, W]`` volumes where the depth axis is the spectrum.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class HSICube:
    """A single hyperspectral image, ``data`` shaped ``[C, H, W]``."""

    data: np.ndarray
    wavelength_nm: Optional[tuple] = None
    value_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"cube must be 3-D [C, H, W], got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"cube dimensions must be >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube contains NaN or Inf")
        if self.wavelength_nm is not None and len(self.wavelength_nm) != data.shape[0]:
            raise ValueError("wavelength_nm length does not match band count")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.wavelength_nm is not None:
            object.__setattr__(self, "wavelength_nm", tuple(float(w) for w in self.wavelength_nm))
        object.__setattr__(self, "value_range", (float(self.value_range[0]), float(self.value_range[1])))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "HSICube":
        return HSICube(data, self.wavelength_nm, self.value_range)


def normalize(cube: HSICube) -> HSICube:
    """Scale a cube by its maximum so values land in [0, 1].

    The original ``(0, max)`` range is kept in ``value_range`` so
    :func:`denormalize` can invert it.
    """
    data = np.asarray(cube.data, dtype=np.float64)
    lo = float(data.min())
    if lo < 0:
        raise ValueError("normalization expects nonnegative reflectance")
    hi = float(data.max())
    scale = hi if hi > 0 else 1.0
    return HSICube(data / scale, cube.wavelength_nm, (0.0, scale))


def denormalize(cube: HSICube) -> HSICube:
    return HSICube(np.asarray(cube.data) * cube.value_range[1], cube.wavelength_nm, (0.0, 1.0))


@dataclass(frozen=True)
class GroupPartition:
    """Mapping from the band axis to groups of ``P`` consecutive bands."""

    C: int
    P: int
    groups: tuple
    merge_weight: np.ndarray = field(repr=False)

    @property
    def G(self) -> int:
        return len(self.groups)

    def coverage(self) -> np.ndarray:
        counts = np.zeros(self.C, dtype=np.int64)
        for g in self.groups:
            counts[g.start : g.stop] += 1
        return counts

    def split(self, x: np.ndarray, axis: int = 0) -> list:
        """Slice ``x`` into per-group band blocks along ``axis``."""
        index = [slice(None)] * x.ndim
        out = []
        for g in self.groups:
            index[axis] = g
            out.append(x[tuple(index)])
        return out

    def merge(self, parts: Sequence[np.ndarray], axis: int = 0) -> np.ndarray:
        """Inverse of :meth:`split`; overlapped bands are averaged."""
        first = np.asarray(parts[0])
        shape = list(first.shape)
        shape[axis] = self.C
        out = np.zeros(shape, dtype=np.result_type(first.dtype, np.float64))
        index = [slice(None)] * out.ndim
        wshape = [1] * out.ndim
        wshape[axis] = self.P
        for g, part in zip(self.groups, parts):
            index[axis] = g
            out[tuple(index)] += np.asarray(part) * self.merge_weight[g].reshape(wshape)
        return out


def make_partition(C: int, P: int) -> GroupPartition:
    """Split ``C`` bands into ``ceil(C/P)`` groups of exactly ``P`` bands.

    Groups are consecutive and disjoint except the last one, which always
    takes the final ``P`` bands and so overlaps its predecessor when
    ``C % P != 0``. ``merge_weight[b]`` is 1 over the number of groups
    holding band ``b``.
    """
    if P < 1:
        raise ValueError("group size must be >= 1")
    if C < P:
        raise ValueError("cube has fewer bands than group size")
    G = math.ceil(C / P)
    groups = [range(g * P, g * P + P) for g in range(G - 1)]
    groups.append(range(C - P, C))
    counts = np.zeros(C, dtype=np.int64)
    for g in groups:
        counts[g.start : g.stop] += 1
    weight = 1.0 / counts
    weight.setflags(write=False)
    return GroupPartition(C=C, P=P, groups=tuple(groups), merge_weight=weight)


@dataclass(frozen=True)
class ModelConfig:
    scale: int = 4
    bands_per_group: int = 4
    n_feats: int = 64
    strip_kernel: int = 15
    shuffle_pieces: int = 4
    ssrgm_blocks: int = 1
    ssrgm3d_blocks: int = 6
    dilation_rates: tuple = (1, 2, 3)
    partial_ratio: float = 0.25
    ca_reduction: int = 4
    # "depthwise" or an integer group count for the strip convolutions
    strip_groups: object = "depthwise"
    feats_3d: int = 16
    share_branch_weights: bool = True
    # skip and tail convs start as identity so the untrained net returns bicubic
    identity_tail: bool = True
    negative_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "dilation_rates", tuple(int(r) for r in self.dilation_rates))
        self.validate()

    def validate(self) -> None:
        if self.scale % 2 != 0:
            raise ValueError("scale must be even")
        if self.scale not in (4, 8):
            raise ValueError(f"unsupported scale {self.scale}; expected 4 or 8")
        if self.strip_kernel % 2 != 1:
            raise ValueError("strip kernel size must be odd")
        if self.bands_per_group < 1 or self.n_feats < 1 or self.feats_3d < 1:
            raise ValueError("channel counts must be positive")
        if self.n_feats % self.shuffle_pieces != 0:
            raise ValueError("shuffle_pieces must divide n_feats")
        if self.bands_per_group % self.shuffle_pieces != 0:
            raise ValueError("shuffle_pieces must divide bands_per_group")
        if not 0 < self.partial_ratio <= 1:
            raise ValueError("partial_ratio must lie in (0, 1]")
        if self.ssrgm_blocks < 1 or self.ssrgm3d_blocks < 1:
            raise ValueError("block counts must be >= 1")
        if not self.dilation_rates or list(self.dilation_rates) != sorted(self.dilation_rates):
            raise ValueError("dilation_rates must be nonempty and ascending")
        if self.n_feats % self.ca_reduction != 0 or self.feats_3d % self.ca_reduction != 0:
            raise ValueError("ca_reduction must divide n_feats and feats_3d")
        if self.strip_groups != "depthwise":
            n = int(self.strip_groups)
            if n < 1 or self.n_feats % n != 0:
                raise ValueError("strip group count must divide n_feats")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilation_rates"] = list(self.dilation_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 70
    batch_size: int = 16
    lr0: float = 1e-4
    lr_decay_epochs: int = 30
    lr_decay_factor: float = 0.1
    loss_weights: tuple = (0.5, 0.1, 1e-3)
    seed: int = 0
    grad_clip: Optional[float] = None
    max_steps: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "loss_weights", tuple(float(w) for w in self.loss_weights))
        if self.epochs < 1 or self.batch_size < 1 or self.lr_decay_epochs < 1:
            raise ValueError("epochs, batch_size and lr_decay_epochs must be positive")
        if not (self.lr0 > 0 and self.lr_decay_factor > 0):
            raise ValueError("lr0 and lr_decay_factor must be positive")
        if len(self.loss_weights) != 3 or not all(math.isfinite(w) for w in self.loss_weights):
            raise ValueError("loss_weights must be three finite reals")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_weights"] = list(self.loss_weights)
        return d


@dataclass(frozen=True)
class ShapeReport:
    partition: GroupPartition
    shapes: dict

    @property
    def output(self) -> tuple:
        return self.shapes["output"]


def validate_shapes(cfg: ModelConfig, cube: HSICube) -> ShapeReport:
    """Expected shape of every intermediate tensor for one forward pass."""
    cfg.validate()
    C, H, W = cube.shape
    s = cfg.scale
    part = make_partition(C, cfg.bands_per_group)
    P, n = cfg.bands_per_group, cfg.n_feats
    h2, w2 = H * (s // 2), W * (s // 2)
    shapes = {
        "group_input": (P, H, W),
        "group_feature": (n, H, W),
        "group_upsampled": (n, h2, w2),
        "group_reduced": (P, h2, w2),
        "concat": (part.G * P, h2, w2),
        "merged": (C, h2, w2),
        "volume": (cfg.feats_3d, C, h2, w2),
        "refined": (C, h2, w2),
        "upsampled": (C, H * s, W * s),
        "bicubic": (C, H * s, W * s),
        "output": (C, H * s, W * s),
    }
    return ShapeReport(partition=part, shapes=shapes)
