"""Cube I/O, bicubic degradation, patch extraction and LR/HR pairing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import HSICube

CATMULL_ROM_A = -0.5


def cubic_kernel(x, a: float = CATMULL_ROM_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def reflect_index(i: int, n: int) -> int:
    """Whole-sample reflection (``-1 -> 1``, ``n -> n-2``)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i %= period
    return period - i if i >= n else i


@lru_cache(maxsize=128)
def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in), dtype=np.float64)
    ratio = n_in / n_out
    for j in range(n_out):
        src = (j + 0.5) * ratio - 0.5
        base = math.floor(src)
        for tap in range(base - 1, base + 3):
            m[j, reflect_index(tap, n_in)] += float(cubic_kernel(src - tap))
    m.setflags(write=False)
    return m


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense ``[n_out, n_in]`` matrix of 1-D Catmull-Rom resampling.

    Pixel centres are aligned (half-pixel convention) and the border is
    handled by whole-sample reflection. No antialiasing prefilter.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("sizes must be >= 1")
    return _resize_matrix(int(n_in), int(n_out))


def bicubic_array(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes of ``data``; leading axes are independent."""
    data = np.asarray(data, dtype=np.float64)
    mh = resize_matrix(data.shape[-2], out_h)
    mw = resize_matrix(data.shape[-1], out_w)
    return np.einsum("ih,...hw,jw->...ij", mh, data, mw, optimize=True)


def bicubic_resize(cube: HSICube, out_h: int, out_w: int) -> HSICube:
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    return cube.with_data(bicubic_array(cube.data, out_h, out_w))


def degrade(hr: HSICube, s: int) -> HSICube:
    if s < 1:
        raise ValueError("scale must be >= 1")
    if hr.height % s or hr.width % s:
        raise ValueError(f"spatial size {hr.height}x{hr.width} is not divisible by scale {s}")
    if s == 1:
        return hr
    return bicubic_resize(hr, hr.height // s, hr.width // s)


def window_origins(n: int, p: int, stride: int) -> list:
    origins = list(range(0, n - p + 1, stride))
    if origins[-1] != n - p:
        origins.append(n - p)
    return origins


def extract_patches(cube: HSICube, p: int, stride: int) -> list:
    """Raster-order sliding windows; the last row/column is clamped to the edge."""
    if p > cube.height or p > cube.width:
        raise ValueError(f"patch size {p} exceeds cube size {cube.height}x{cube.width}")
    if not 1 <= stride <= p:
        raise ValueError("stride must lie in [1, patch size]")
    out = []
    for y in window_origins(cube.height, p, stride):
        for x in window_origins(cube.width, p, stride):
            out.append(cube.with_data(cube.data[:, y : y + p, x : x + p].copy()))
    return out


@dataclass
class PatchSet:
    hr_patches: list
    lr_patches: list
    patch_size: int
    stride: int
    scale: int

    def __post_init__(self):
        if len(self.hr_patches) != len(self.lr_patches):
            raise ValueError("hr and lr patch counts differ")
        if self.patch_size % self.scale:
            raise ValueError("patch size must be divisible by scale")

    def __len__(self):
        return len(self.hr_patches)

    def _stack(self, cubes, size) -> np.ndarray:
        if not cubes:
            return np.zeros((0, 0, size, size))
        return np.stack([c.data for c in cubes])

    def hr_array(self) -> np.ndarray:
        return self._stack(self.hr_patches, self.patch_size)

    def lr_array(self) -> np.ndarray:
        return self._stack(self.lr_patches, self.patch_size // self.scale)

    def check_pairs(self, atol: float = 0.0) -> bool:
        """Re-derive every LR patch from its HR partner."""
        for hr, lr in zip(self.hr_patches, self.lr_patches):
            if not np.allclose(degrade(hr, self.scale).data, lr.data, rtol=0, atol=atol):
                return False
        return True

    def save(self, path) -> None:
        np.savez(
            path,
            hr=self.hr_array().astype(np.float32),
            lr=self.lr_array().astype(np.float32),
            meta=np.array([self.patch_size, self.stride, self.scale]),
        )

    @classmethod
    def load(cls, path) -> "PatchSet":
        with np.load(path) as z:
            hr, lr, meta = z["hr"], z["lr"], z["meta"]
        return cls(
            hr_patches=[HSICube(h) for h in hr],
            lr_patches=[HSICube(l) for l in lr],
            patch_size=int(meta[0]),
            stride=int(meta[1]),
            scale=int(meta[2]),
        )


def make_pairs(cubes, p: int, stride: int, s: int, holdout_frac: float, seed: int = 0):
    """Patch every cube, shuffle with ``seed`` and split off a validation share."""
    if not cubes:
        raise ValueError("no input cubes")
    if not 0 <= holdout_frac < 1:
        raise ValueError("holdout_frac must lie in [0, 1)")
    if p % s:
        raise ValueError(f"patch size {p} is not divisible by scale {s}")
    patches = [patch for cube in cubes for patch in extract_patches(cube, p, stride)]
    order = np.random.default_rng(seed).permutation(len(patches))
    n_val = int(round(len(patches) * holdout_frac))
    val_idx, train_idx = order[:n_val], order[n_val:]

    def build(idx):
        hr = [patches[i] for i in idx]
        return PatchSet(hr, [degrade(h, s) for h in hr], p, stride, s)

    return build(train_idx), build(val_idx)


# Cube file: one line of UTF-8 JSON header, newline, then the raw
# little-endian payload in band-sequential [C, H, W] row-major order.

_DTYPES = {"f32": "<f4", "f64": "<f8"}


def save_cube(cube: HSICube, path, dtype: str = "f32") -> None:
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    header = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": dtype,
        "value_range": list(cube.value_range),
    }
    if cube.wavelength_nm is not None:
        header["wavelengths"] = list(cube.wavelength_nm)
    payload = np.ascontiguousarray(cube.data, dtype=_DTYPES[dtype]).tobytes()
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(payload)


def load_cube(path) -> HSICube:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    if end < 0:
        raise ValueError("malformed header: no terminator")
    try:
        header = json.loads(raw[:end].decode("utf-8"))
        h, w, c = int(header["height"]), int(header["width"]), int(header["bands"])
        dtype = _DTYPES[header["dtype"]]
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise ValueError(f"malformed header: {exc}") from exc
    if min(h, w, c) < 1:
        raise ValueError("malformed header: dimensions must be >= 1")
    payload = raw[end + 1 :]
    expected = h * w * c * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise ValueError(f"payload length mismatch: expected {expected} bytes, got {len(payload)}")
    data = np.frombuffer(payload, dtype=dtype).reshape(c, h, w).astype(np.dtype(dtype).newbyteorder("="))
    return HSICube(
        data,
        header.get("wavelengths"),
        tuple(header.get("value_range", (0.0, 1.0))),
    )
