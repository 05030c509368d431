"""Input checking helpers shared across the package.

Images are plain numpy arrays: ``(H, W, 3)`` for RGB, ``(H, W, 4)`` for RGBA,
``(H, W)`` for alpha maps, all float in ``[0, 1]``.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "as_image",
    "as_alpha",
    "check_same_extent",
    "derive_seed",
]

MASK64 = (1 << 64) - 1


def as_image(img, channels: int | None = None, name: str = "image") -> np.ndarray:
    """Validate an image array and return it as float64.

    Rejects anything that is not an ``(H, W, C)`` array with ``C`` in ``{3, 4}``,
    finite values, and range ``[0, 1]``.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(
            f"{name}: expected (H, W, 3) or (H, W, 4) array, got shape {arr.shape}"
        )
    if channels is not None and arr.shape[2] != channels:
        raise ValueError(
            f"{name}: expected {channels} channels, got {arr.shape[2]}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name}: empty spatial extent {arr.shape[:2]}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: values outside [0, 1]")
    return arr


def as_alpha(alpha, extent: tuple[int, int] | None = None, name: str = "alpha") -> np.ndarray:
    """Validate a per-pixel alpha map ``(H, W)`` in ``[0, 1]``."""
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected (H, W) array, got shape {arr.shape}")
    if extent is not None and arr.shape != tuple(extent):
        raise ValueError(f"{name}: extent {arr.shape} does not match {tuple(extent)}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: values outside [0, 1]")
    return arr


def check_same_extent(a: np.ndarray, b: np.ndarray, names: tuple[str, str] = ("a", "b")) -> None:
    """Require identical spatial extent (H, W) for two arrays."""
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(
            f"{names[0]} extent {a.shape[:2]} does not match {names[1]} extent {b.shape[:2]}"
        )


def derive_seed(root: int, label: str) -> int:
    """Derive a per-stage / per-record 64-bit seed from a root seed and a label.

    Uses blake2b rather than ``hash()`` so results are stable across processes
    (``hash()`` is salted by PYTHONHASHSEED).
    """
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return (int(root) ^ int.from_bytes(digest, "little")) & MASK64
