"""PSNR, SSIM, SAM, RMSE and ERGAS for cubes shaped ``[C, H, W]``."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _pair(sr, hr):
    sr = np.asarray(getattr(sr, "data", sr), dtype=np.float64)
    hr = np.asarray(getattr(hr, "data", hr), dtype=np.float64)
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {sr.shape} vs {hr.shape}")
    if sr.ndim != 3:
        raise ValueError(f"expected [C, H, W] cubes, got {sr.ndim}-D")
    return sr, hr


def psnr_per_band(sr, hr, peak: float = 1.0) -> np.ndarray:
    sr, hr = _pair(sr, hr)
    mse = ((sr - hr) ** 2).mean(axis=(1, 2))
    out = np.full(mse.shape, PSNR_CAP)
    nz = mse > 0
    out[nz] = np.minimum(10 * np.log10(peak**2 / mse[nz]), PSNR_CAP)
    return out


def psnr(sr, hr, peak: float = 1.0) -> float:
    return float(psnr_per_band(sr, hr, peak).mean())


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_terms(mx, my, vx, vy, cxy, c1, c2):
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))


def ssim_band(x: np.ndarray, y: np.ndarray, peak: float = 1.0) -> float:
    c1, c2 = (SSIM_K1 * peak) ** 2, (SSIM_K2 * peak) ** 2
    if min(x.shape) < SSIM_WINDOW:
        warnings.warn(
            f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window; using global statistics",
            stacklevel=3,
        )
        mx, my = x.mean(), y.mean()
        vx, vy = x.var(), y.var()
        cxy = ((x - mx) * (y - my)).mean()
        return float(_ssim_terms(mx, my, vx, vy, cxy, c1, c2))
    w = gaussian_window()

    def filt(a):
        return np.einsum("ijkl,kl->ij", sliding_window_view(a, w.shape), w)

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx**2
    vy = filt(y * y) - my**2
    cxy = filt(x * y) - mx * my
    return float(_ssim_terms(mx, my, vx, vy, cxy, c1, c2).mean())


def ssim_per_band(sr, hr, peak: float = 1.0) -> np.ndarray:
    sr, hr = _pair(sr, hr)
    return np.array([ssim_band(sr[b], hr[b], peak) for b in range(sr.shape[0])])


def ssim(sr, hr, peak: float = 1.0) -> float:
    return float(ssim_per_band(sr, hr, peak).mean())


def sam(sr, hr) -> float:
    """Mean spectral angle in degrees; pixels with a zero spectrum are skipped."""
    sr, hr = _pair(sr, hr)
    dot = (sr * hr).sum(axis=0)
    norms = np.linalg.norm(sr, axis=0) * np.linalg.norm(hr, axis=0)
    valid = norms > 0
    if not valid.any():
        raise ValueError("every pixel has a zero-norm spectrum")
    cos = np.clip(dot[valid] / norms[valid], -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


def rmse(sr, hr) -> float:
    sr, hr = _pair(sr, hr)
    return float(np.sqrt(((sr - hr) ** 2).mean()))


def ergas(sr, hr, s: int) -> float:
    sr, hr = _pair(sr, hr)
    mse = ((sr - hr) ** 2).mean(axis=(1, 2))
    mu = hr.mean(axis=(1, 2))
    zero = np.flatnonzero(mu == 0)
    if zero.size:
        raise ValueError(f"band {int(zero[0])} has zero mean")
    return float(100.0 / s * np.sqrt((mse / mu**2).mean()))


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    sam_deg: float
    rmse: float
    ergas: float
    per_band_psnr: list
    per_band_abs_err: list

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as f:
                f.write(text + "\n")
        return text

    def headline(self) -> dict:
        return {k: getattr(self, k) for k in ("psnr_db", "ssim", "sam_deg", "rmse", "ergas")}


def evaluate_pair(sr, hr, s: int, peak: float = 1.0) -> MetricReport:
    sr, hr = _pair(sr, hr)
    per_psnr = psnr_per_band(sr, hr, peak)
    return MetricReport(
        psnr_db=float(per_psnr.mean()),
        ssim=ssim(sr, hr, peak),
        sam_deg=sam(sr, hr),
        rmse=rmse(sr, hr),
        ergas=ergas(sr, hr, s),
        per_band_psnr=per_psnr.tolist(),
        per_band_abs_err=np.abs(sr - hr).mean(axis=(1, 2)).tolist(),
    )


def write_band_csv(values, path, header=("band_index", "value")) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])
