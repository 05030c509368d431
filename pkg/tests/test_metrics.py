import math

import numpy as np
import pytest

from layerforge.metrics import rmse, ssim


def rmse_oracle(a, b):
    """Element-by-element scalar loop, independent of the vectorized path."""
    total = 0.0
    count = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for c in range(a.shape[2]):
                d = 255.0 * (a[i, j, c] - b[i, j, c])
                total += d * d
                count += 1
    return math.sqrt(total / count)


def ssim_oracle(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct per-window evaluation of the definition (no sliding tricks)."""
    half = (window - 1) / 2.0
    x = np.arange(window) - half
    k1d = np.exp(-(x * x) / (2 * sigma * sigma))
    k1d /= k1d.sum()
    kern = np.outer(k1d, k1d)
    c1 = k1 * k1
    c2 = k2 * k2
    vals = []
    for c in range(a.shape[2]):
        pa, pb = a[..., c], b[..., c]
        for i in range(a.shape[0] - window + 1):
            for j in range(a.shape[1] - window + 1):
                wa = pa[i : i + window, j : j + window]
                wb = pb[i : i + window, j : j + window]
                mu_a = (kern * wa).sum()
                mu_b = (kern * wb).sum()
                va = (kern * (wa - mu_a) ** 2).sum()
                vb = (kern * (wb - mu_b) ** 2).sum()
                cov = (kern * (wa - mu_a) * (wb - mu_b)).sum()
                vals.append(
                    ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                    / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
                )
    return float(np.mean(vals))


def test_rmse_identity(rng):
    a = rng.random((16, 16, 3))
    assert rmse(a, a) == 0.0


def test_rmse_constant_offset():
    a = np.full((16, 16, 3), 0.5)
    b = np.full((16, 16, 3), 0.5 + 10.0 / 255.0)
    assert rmse(a, b) == pytest.approx(10.0, abs=1e-9)


def test_rmse_matches_scalar_oracle(rng):
    a = rng.random((12, 9, 3))
    b = rng.random((12, 9, 3))
    assert rmse(a, b) == pytest.approx(rmse_oracle(a, b), abs=1e-9)


def test_rmse_metric_properties(rng):
    a, b, c = (rng.random((8, 8, 3)) for _ in range(3))
    assert rmse(a, b) == pytest.approx(rmse(b, a), abs=1e-12)
    assert rmse(a, a) == 0.0
    assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-9


def test_rmse_shape_mismatch(rng):
    with pytest.raises(ValueError):
        rmse(rng.random((8, 8, 3)), rng.random((8, 9, 3)))


def test_ssim_identity(rng):
    a = rng.random((16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)


def test_ssim_anticorrelated_checkerboard():
    yy, xx = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    a = ((yy + xx) % 2).astype(np.float64)[..., None] * np.ones(3)
    assert ssim(a, 1.0 - a) < 0.0


def test_ssim_constant_images_closed_form():
    mu_a, mu_b = 0.3, 0.6
    a = np.full((16, 16, 3), mu_a)
    b = np.full((16, 16, 3), mu_b)
    c1 = 0.01**2
    expected = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-9)


def test_ssim_matches_windowed_oracle(rng):
    a = rng.random((14, 14, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_oracle(a, b), abs=1e-6)


def test_ssim_symmetry(rng):
    a = rng.random((16, 16, 3))
    b = rng.random((16, 16, 3))
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_too_small_image(rng):
    with pytest.raises(ValueError, match="too small"):
        ssim(rng.random((8, 8, 3)), rng.random((8, 8, 3)))


def test_metrics_accept_single_plane(rng):
    a = rng.random((16, 16))
    assert rmse(a, a) == 0.0
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)
