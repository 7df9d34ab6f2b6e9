"""Training losses on batched cubes ``[B, C, H, W]``.

Every term is a mean over all elements it sums, so the balancing weights
do not depend on patch size or batch size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.5, 0.1, 1e-3)
COS_EPS = 1e-7


def _check(sr, hr):
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {tuple(sr.shape)} vs {tuple(hr.shape)}")


def l1_loss(sr, hr):
    _check(sr, hr)
    return (sr - hr).abs().mean()


def spectral_loss(sr, hr, use_arccos: bool = True):
    """Mean per-pixel spectral angle divided by pi, in [0, 1].

    With ``use_arccos=False`` the clamped cosine itself is averaged and
    divided by pi instead. Pixels where either spectrum has zero norm are
    skipped.
    """
    _check(sr, hr)
    dot = (sr * hr).sum(dim=1)
    sq_sr, sq_hr = (sr * sr).sum(dim=1), (hr * hr).sum(dim=1)
    valid = (sq_sr > 0) & (sq_hr > 0)
    n_bad = int((~valid).sum())
    if n_bad:
        log.warning("spectral loss skipped %d zero-norm pixel(s)", n_bad)
    if not bool(valid.any()):
        return sr.sum() * 0.0
    # mask before the sqrt so zero spectra never reach its infinite slope
    cos = dot[valid] / torch.sqrt(sq_sr[valid] * sq_hr[valid])
    cos = cos.clamp(-1 + COS_EPS, 1 - COS_EPS)
    term = torch.arccos(cos) if use_arccos else cos
    return term.mean() / math.pi


def forward_diff(x, dim: int):
    """``x[i+1] - x[i]`` along ``dim`` with a zero last slice (replicate edge)."""
    d = torch.diff(x, dim=dim)
    pad_shape = list(x.shape)
    pad_shape[dim] = 1
    return torch.cat([d, x.new_zeros(pad_shape)], dim=dim)


def spatial_spectral_diffs(x):
    """Forward differences along height, width and band of ``[B, C, H, W]``."""
    return forward_diff(x, 2), forward_diff(x, 3), forward_diff(x, 1)


def gradient_map(x):
    """Pointwise magnitude of the 3-axis forward-difference gradient."""
    dh, dw, dc = spatial_spectral_diffs(x)
    sq = dh * dh + dw * dw + dc * dc
    pos = sq > 0
    # sqrt has an infinite slope at 0; route those entries around it
    return torch.where(pos, torch.sqrt(torch.where(pos, sq, torch.ones_like(sq))), torch.zeros_like(sq))


def gradient_loss(sr, hr):
    _check(sr, hr)
    return (gradient_map(sr) - gradient_map(hr)).abs().mean()


def sstv_loss(sr):
    dh, dw, dc = spatial_spectral_diffs(sr)
    return (dh.abs().sum() + dw.abs().sum() + dc.abs().sum()) / sr.numel()


@dataclass
class LossReport:
    l1: torch.Tensor
    l_spe: torch.Tensor
    l_gra: torch.Tensor
    l_sstv: torch.Tensor
    total: torch.Tensor

    @classmethod
    def combine(cls, l1, l_spe, l_gra, l_sstv, weights=DEFAULT_WEIGHTS) -> "LossReport":
        w1, w2, w3 = weights
        if not all(math.isfinite(float(w)) for w in weights):
            raise ValueError("loss weights must be finite")
        return cls(l1, l_spe, l_gra, l_sstv, l1 + w1 * l_spe + w2 * l_gra + w3 * l_sstv)

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("l1", "l_spe", "l_gra", "l_sstv", "total")}


def total_loss(sr, hr, weights=DEFAULT_WEIGHTS, use_arccos: bool = True) -> LossReport:
    return LossReport.combine(
        l1_loss(sr, hr),
        spectral_loss(sr, hr, use_arccos),
        gradient_loss(sr, hr),
        sstv_loss(sr),
        weights,
    )
