"""Image quality metrics: RMSE on the 0-255 scale and SSIM.

SSIM follows the reference formulation: 11x11 Gaussian window with sigma 1.5,
K1 = 0.01, K2 = 0.03, dynamic range 1.0 in normalized space, weighted local
statistics (no sample-variance correction), map averaged over window positions
fully inside the image and over channels.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["rmse", "ssim"]


def _as_planes(img, name: str) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError(f"{name}: expected (H, W) or (H, W, C) array, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite values")
    return arr


def rmse(a, b) -> float:
    """Root mean squared error on the 0-255 scale between [0, 1] images."""
    a = _as_planes(a, "a")
    b = _as_planes(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = 255.0 * (a - b)
    return float(np.sqrt(np.mean(diff * diff)))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _local_mean(plane: np.ndarray, kern2d: np.ndarray) -> np.ndarray:
    # 'valid' windows only: positions where the full window fits.
    size = kern2d.shape[0]
    win = sliding_window_view(plane, (size, size))
    return np.tensordot(win, kern2d, axes=([2, 3], [0, 1]))


def ssim(
    a,
    b,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> float:
    """Mean structural similarity between two images in [0, 1].

    Requires ``min(H, W) >= window``. Multi-channel inputs are scored per
    channel and averaged.
    """
    a = _as_planes(a, "a")
    b = _as_planes(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    h, w = a.shape[:2]
    if min(h, w) < window:
        raise ValueError(f"image too small for {window}x{window} window: {(h, w)}")

    k1d = _gaussian_kernel(window, sigma)
    kern2d = np.outer(k1d, k1d)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    vals = []
    for c in range(a.shape[2]):
        pa = a[..., c]
        pb = b[..., c]
        mu_a = _local_mean(pa, kern2d)
        mu_b = _local_mean(pb, kern2d)
        e_aa = _local_mean(pa * pa, kern2d)
        e_bb = _local_mean(pb * pb, kern2d)
        e_ab = _local_mean(pa * pb, kern2d)
        var_a = e_aa - mu_a * mu_a
        var_b = e_bb - mu_b * mu_b
        cov = e_ab - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))
