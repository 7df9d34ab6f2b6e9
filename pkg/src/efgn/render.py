"""File-emitting figures: pseudo-RGB renders, mean error maps, spectral difference curves.

PNG encoder settings are pinned so the same inputs give the same bytes.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .metrics import write_band_csv

PNG_OPTS = {"format": "PNG", "optimize": False, "compress_level": 6}
ERROR_RANGE = (0.0, 0.1)
CHIKUSEI_RGB = (70, 100, 36)


def _data(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _stretch(band: np.ndarray) -> np.ndarray:
    lo, hi = band.min(), band.max()
    if hi <= lo:
        return np.zeros(band.shape, dtype=np.uint8)
    return np.round(255 * (band - lo) / (hi - lo)).astype(np.uint8)


def pseudo_rgb(cube, bands=CHIKUSEI_RGB) -> np.ndarray:
    data = _data(cube)
    for b in bands:
        if not 0 <= b < data.shape[0]:
            raise ValueError(f"band {b} out of range for a {data.shape[0]}-band cube")
    return np.stack([_stretch(data[b]) for b in bands], axis=-1)


def render_pseudo_rgb(cube, bands, path) -> np.ndarray:
    """Write an 8-bit PNG, each channel min-max stretched on its own."""
    rgb = pseudo_rgb(cube, bands)
    Image.fromarray(rgb).save(path, **PNG_OPTS)
    return rgb


def mean_error_field(sr, hr) -> np.ndarray:
    sr, hr = _data(sr), _data(hr)
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {sr.shape} vs {hr.shape}")
    return np.abs(sr - hr).mean(axis=0)


def blue_red(values: np.ndarray, vrange=ERROR_RANGE) -> np.ndarray:
    """Linear blend from pure blue (low) to pure red (high), clipped to ``vrange``."""
    lo, hi = vrange
    t = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    rgb = np.zeros(values.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = np.round(255 * t)
    rgb[..., 2] = np.round(255 * (1 - t))
    return rgb


def render_error_map(sr, hr, path) -> np.ndarray:
    rgb = blue_red(mean_error_field(sr, hr))
    Image.fromarray(rgb).save(path, **PNG_OPTS)
    return rgb


def spectral_difference_curve(srs, hrs) -> np.ndarray:
    """Per-band mean absolute difference, averaged over pixels then images."""
    if len(srs) != len(hrs) or not srs:
        raise ValueError("need matching, nonempty lists of SR and HR cubes")
    curves = []
    for sr, hr in zip(srs, hrs):
        sr, hr = _data(sr), _data(hr)
        if sr.shape != hr.shape:
            raise ValueError(f"shape mismatch: {sr.shape} vs {hr.shape}")
        curves.append(np.abs(sr - hr).mean(axis=(1, 2)))
    return np.mean(curves, axis=0)


def render_spectral_curve(srs, hrs, csv_path, png_path=None) -> np.ndarray:
    curve = spectral_difference_curve(srs, hrs)
    write_band_csv(curve, csv_path)
    if png_path is not None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 3.5), dpi=100)
        ax.plot(np.arange(len(curve)), curve, color="tab:red", linewidth=1.2)
        ax.set_xlabel("band")
        ax.set_ylabel("mean |SR - HR|")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(png_path, format="png", metadata={"Software": None})
        plt.close(fig)
    return curve
