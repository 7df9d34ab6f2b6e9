"""Deterministic synthetic cubes for desk-scale experiments and tests."""

from __future__ import annotations

import numpy as np

from .core import HSICube


def textured_cube(bands: int, height: int, width: int, seed: int = 0, n_materials: int = 4) -> HSICube:
    """Mix of a few smooth endmember spectra with oriented sinusoidal abundances.

    Values land in [0.05, 0.95]; wavelengths span 400-1000 nm.
    """
    rng = np.random.default_rng(seed)
    wl = np.linspace(400.0, 1000.0, bands)
    t = np.linspace(0.0, 1.0, bands)
    spectra = []
    for _ in range(n_materials):
        centre, width_ = rng.uniform(0, 1), rng.uniform(0.15, 0.5)
        base = rng.uniform(0.2, 0.5)
        spectra.append(base + 0.5 * np.exp(-((t - centre) ** 2) / (2 * width_**2)))
    spectra = np.stack(spectra)

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    fields = []
    for _ in range(n_materials):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.03, 0.11)
        phase = rng.uniform(0, 2 * np.pi)
        u = xx * np.cos(theta) + yy * np.sin(theta)
        fields.append(np.exp(1.5 * np.sin(2 * np.pi * freq * u + phase)))
    abundance = np.stack(fields)
    abundance /= abundance.sum(axis=0, keepdims=True)

    data = np.einsum("mc,mhw->chw", spectra, abundance)
    lo, hi = data.min(), data.max()
    data = 0.05 + 0.9 * (data - lo) / (hi - lo)
    return HSICube(data, tuple(wl), (0.0, 1.0))
