"""Patch tokenizer, 2-D sinusoidal position encodings, and the cloning rule.

The tokenizer is a bijective space-to-depth rearrangement: a ``(H, W, C)``
image becomes ``(H/p)*(W/p)`` tokens of ``p*p*C`` values each, optionally
followed by a linear projection. With an invertible projection (or none) the
pixel -> token -> pixel roundtrip is exact, which is what lets it stand in
for a learned latent encoder at small scale.

Position encoding cloning: the composite's encoding is injected into both the
composite and background token streams so the two share one coordinate frame,
while foreground tokens live in a horizontally offset frame (or carry no
encoding at all). Sharing the frame preserves token-pair differences exactly:
(c_y + PE) - (c_z + PE) = c_y - c_z.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

__all__ = [
    "TokenSequence",
    "PosEncoding",
    "patchify",
    "unpatchify",
    "make_pe",
    "zero_pe",
    "clone_position_encodings",
    "image_to_latent",
    "latent_to_image",
]

STREAMS = ("composite", "foreground", "background", "prompt")


@dataclass
class TokenSequence:
    """Ordered tokens of one stream, tiling a patch grid row-major."""

    tokens: np.ndarray  # (rows*cols, dim)
    rows: int
    cols: int
    stream: str = "composite"

    def __post_init__(self) -> None:
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.stream not in STREAMS:
            raise ValueError(f"unknown stream {self.stream!r}")
        if self.tokens.ndim != 2 or self.tokens.shape[0] != self.rows * self.cols:
            raise ValueError(
                f"tokens shape {self.tokens.shape} does not tile a "
                f"{self.rows}x{self.cols} grid"
            )

    @property
    def grid(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def grid_coords(self) -> np.ndarray:
        """(n, 2) array of (row, col) per token, row-major."""
        rr, cc = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return np.stack([rr.ravel(), cc.ravel()], axis=1)


@dataclass(frozen=True)
class PosEncoding:
    """Per-grid-cell encoding vectors in a given coordinate frame."""

    values: np.ndarray  # (rows*cols, dim)
    rows: int
    cols: int
    frame_offset: tuple[int, int] = (0, 0)


def patchify(img, patch: int, proj: np.ndarray | None = None, stream: str = "composite") -> TokenSequence:
    """Split an ``(H, W, C)`` array into flattened ``patch x patch`` tokens.

    Accepts images as well as scaled latents (no range check), but requires
    finite values and extents divisible by ``patch``. ``proj``, if given,
    right-multiplies the raw ``(n, patch*patch*C)`` token matrix.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C) array, got shape {arr.shape}")
    if patch < 1:
        raise ValueError(f"patch must be >= 1, got {patch}")
    h, w, c = arr.shape
    if h % patch or w % patch:
        raise ValueError(f"extent {(h, w)} not divisible by patch {patch}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    rows, cols = h // patch, w // patch
    tokens = (
        arr.reshape(rows, patch, cols, patch, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * cols, patch * patch * c)
    )
    if proj is not None:
        tokens = tokens @ np.asarray(proj, dtype=np.float64)
    return TokenSequence(tokens, rows, cols, stream)


def unpatchify(
    seq: TokenSequence,
    patch: int,
    channels: int,
    inv_proj: np.ndarray | None = None,
) -> np.ndarray:
    """Inverse of :func:`patchify`; exact when ``inv_proj @ proj == I``."""
    tokens = seq.tokens
    if inv_proj is not None:
        tokens = tokens @ np.asarray(inv_proj, dtype=np.float64)
    expected = patch * patch * channels
    if tokens.shape[1] != expected:
        raise ValueError(
            f"token dim {tokens.shape[1]} does not match patch {patch} x "
            f"{patch} x {channels} = {expected}"
        )
    rows, cols = seq.rows, seq.cols
    return (
        tokens.reshape(rows, cols, patch, patch, channels)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * patch, cols * patch, channels)
    )


def _encode_axis(pos: np.ndarray, dim: int) -> np.ndarray:
    """Classic sinusoidal ladder along one axis: sin on even slots, cos on odd."""
    n_sin = (dim + 1) // 2
    freqs = np.exp(np.arange(n_sin, dtype=np.float64) * (-np.log(10000.0) * 2.0 / dim))
    ang = pos[:, None] * freqs[None, :]
    out = np.zeros((len(pos), dim))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang[:, : dim // 2])
    return out


@lru_cache(maxsize=64)
def _pe_values(rows: int, cols: int, d: int, off_r: int, off_c: int) -> np.ndarray:
    rr, cc = np.meshgrid(
        np.arange(rows, dtype=np.float64) + off_r,
        np.arange(cols, dtype=np.float64) + off_c,
        indexing="ij",
    )
    half = d // 2
    values = np.concatenate(
        [_encode_axis(rr.ravel(), half), _encode_axis(cc.ravel(), d - half)], axis=1
    )
    values.setflags(write=False)
    return values


def make_pe(grid: tuple[int, int], d: int, frame_offset: tuple[int, int] = (0, 0)) -> PosEncoding:
    """2-D sinusoidal encoding of (row + off_r, col + off_c), half the channels per axis."""
    if d % 2:
        raise ValueError(f"encoding dim must be even, got {d}")
    rows, cols = grid
    values = _pe_values(rows, cols, d, int(frame_offset[0]), int(frame_offset[1]))
    return PosEncoding(values, rows, cols, (int(frame_offset[0]), int(frame_offset[1])))


def zero_pe(grid: tuple[int, int], d: int) -> PosEncoding:
    """All-zero encoding; used when foreground tokens carry no position signal."""
    rows, cols = grid
    return PosEncoding(np.zeros((rows * cols, d)), rows, cols, (0, 0))


def image_to_latent(img, patch: int, stream: str = "composite") -> TokenSequence:
    """Tokenize a [0, 1] image into the model's latent convention ([-1, 1])."""
    arr = np.asarray(img, dtype=np.float64)
    return patchify(2.0 * arr - 1.0, patch, stream=stream)


def latent_to_image(seq: TokenSequence, patch: int, channels: int) -> np.ndarray:
    """Decode latent tokens back to a [0, 1] image, clamping out-of-range values."""
    img = unpatchify(seq, patch, channels)
    return np.clip((img + 1.0) / 2.0, 0.0, 1.0)


def clone_position_encodings(
    c_y: TokenSequence,
    c_z: TokenSequence,
    c_x: TokenSequence,
    pe_z: PosEncoding,
    pe_x: PosEncoding,
) -> tuple[TokenSequence, TokenSequence, TokenSequence]:
    """Inject the composite-frame encoding into background and composite tokens.

    Returns ``(c_y + pe_z, c_z + pe_z, c_x + pe_x)`` as new sequences. Passing
    a :func:`zero_pe` for ``pe_x`` recovers the untouched-foreground rule
    bitwise.
    """
    for seq, pe, name in ((c_y, pe_z, "background"), (c_z, pe_z, "composite"), (c_x, pe_x, "foreground")):
        if seq.grid != (pe.rows, pe.cols):
            raise ValueError(f"{name} grid {seq.grid} does not match encoding grid {(pe.rows, pe.cols)}")
        if seq.tokens.shape[1] != pe.values.shape[1]:
            raise ValueError(
                f"{name} token dim {seq.tokens.shape[1]} does not match encoding dim {pe.values.shape[1]}"
            )
    return (
        replace(c_y, tokens=c_y.tokens + pe_z.values),
        replace(c_z, tokens=c_z.tokens + pe_z.values),
        replace(c_x, tokens=c_x.tokens + pe_x.values),
    )
