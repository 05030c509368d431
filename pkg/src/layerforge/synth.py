"""Deterministic synthesis of blend-triplet datasets.

Generates (foreground RGBA, background RGB, composite RGB) triplets for each
subtask, either procedurally or from user-supplied image corpora, and writes
them as 8-bit PNGs plus a JSON-lines manifest. Dataset content is a pure
function of the SynthSpec: per-record seeds are ``seed XOR blake2b(record id)``,
so any record can be regenerated independently and re-runs are byte-identical.

The stored composite is computed from the *quantized* foreground/background,
then quantized itself, which keeps every record within half a quantization
step of exact re-composition.

Procedural foregrounds are stylized stand-ins (glyph strokes, radial flares,
fog fields, soft ellipses, vessel outlines, tool silhouettes); the manifest
marks them with ``"source": "procedural"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .blends import BlendMode, compose
from .validation import derive_seed

__all__ = [
    "SynthSpec",
    "gen_procedural_background",
    "gen_procedural_foreground",
    "build_dataset",
    "read_manifest",
    "load_triplet",
    "quantize",
    "dequantize",
    "save_png",
    "load_png",
]

SUBTASKS = ("xray", "glass", "watermark", "cell", "occlusion", "flare")

# Watermark opacity is hard-capped: anything above reads as a solid overlay
# rather than a faint mark.
WATERMARK_ALPHA_CAP = 0.25

_DEFAULT_ALPHA = {
    "xray": (0.3, 0.7),
    "glass": (0.5, 0.8),
    "watermark": (0.08, WATERMARK_ALPHA_CAP),
    "cell": (0.3, 0.6),
    "occlusion": (0.35, 0.65),
    "flare": (0.5, 0.9),
}
# Glyph boxes follow the 96-128 px at 512 px convention, i.e. 18.75% - 25%
# of the image width, scaled to whatever resolution is requested.
_DEFAULT_FG_SIZE = {
    "xray": (0.25, 0.5),
    "glass": (0.35, 0.65),
    "watermark": (96.0 / 512.0, 128.0 / 512.0),
    "cell": (0.15, 0.35),
    "occlusion": (0.1, 0.3),
    "flare": (0.3, 0.6),
}


@dataclass
class SynthSpec:
    """Everything that determines a dataset; content is a pure function of it."""

    subtask: str
    width: int = 32
    height: int = 32
    count_train: int = 8
    count_test: int = 2
    alpha_range: tuple[float, float] | None = None
    fg_size_range: tuple[float, float] | None = None
    source: str = "procedural"
    corpus_fg: str | None = None
    corpus_bg: str | None = None
    seed: int = 0
    patch: int = 4

    def validate(self) -> None:
        if self.subtask not in SUBTASKS:
            raise ValueError(f"unknown subtask {self.subtask!r}; known: {SUBTASKS}")
        if self.count_train < 1 or self.count_test < 1:
            raise ValueError("count_train and count_test must be > 0")
        if self.width < 4 or self.height < 4:
            raise ValueError(f"resolution too small: {self.width}x{self.height}")
        if self.patch < 1 or self.width % self.patch or self.height % self.patch:
            raise ValueError(
                f"resolution {self.width}x{self.height} must be a multiple of patch {self.patch}"
            )
        for rng_name, rng_val in (("alpha_range", self.alpha_range), ("fg_size_range", self.fg_size_range)):
            if rng_val is not None:
                lo, hi = rng_val
                if not (0.0 <= lo <= hi <= 1.0):
                    raise ValueError(f"{rng_name} must satisfy 0 <= lo <= hi <= 1, got {rng_val}")
        if self.source not in ("procedural", "corpus"):
            raise ValueError(f"source must be 'procedural' or 'corpus', got {self.source!r}")
        if self.source == "corpus" and not (self.corpus_fg and self.corpus_bg):
            raise ValueError("corpus source requires corpus_fg and corpus_bg directories")

    @property
    def resolved_alpha_range(self) -> tuple[float, float]:
        lo, hi = self.alpha_range if self.alpha_range is not None else _DEFAULT_ALPHA[self.subtask]
        if self.subtask == "watermark":
            hi = min(hi, WATERMARK_ALPHA_CAP)
            lo = min(lo, hi)
        return lo, hi

    @property
    def resolved_fg_size_range(self) -> tuple[float, float]:
        return self.fg_size_range if self.fg_size_range is not None else _DEFAULT_FG_SIZE[self.subtask]


# ---------------------------------------------------------------------------
# 8-bit storage
# ---------------------------------------------------------------------------


def quantize(img: np.ndarray) -> np.ndarray:
    """Round-half-up to 8 bits."""
    return np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)


def dequantize(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / 255.0


def save_png(path, img: np.ndarray) -> int:
    """Quantize and write a PNG; returns the byte count written."""
    q = quantize(img) if img.dtype != np.uint8 else img
    mode = "RGB" if q.shape[2] == 3 else "RGBA"
    Image.fromarray(np.ascontiguousarray(q), mode).save(path)
    return Path(path).stat().st_size


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 3 or arr.shape[2] not in (3, 4):
        raise ValueError(f"{path}: expected RGB or RGBA PNG, got shape {arr.shape}")
    return dequantize(arr)


# ---------------------------------------------------------------------------
# Drawing primitives
# ---------------------------------------------------------------------------


def _bilinear_resize(src: np.ndarray, h: int, w: int) -> np.ndarray:
    hs, ws = src.shape[:2]
    ys = np.linspace(0.0, hs - 1.0, h)
    xs = np.linspace(0.0, ws - 1.0, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, hs - 1)
    x1 = np.minimum(x0 + 1, ws - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = src[y0[:, None], x0[None, :]] * (1 - fx) + src[y0[:, None], x1[None, :]] * fx
    bot = src[y1[:, None], x0[None, :]] * (1 - fx) + src[y1[:, None], x1[None, :]] * fx
    return top * (1 - fy) + bot * fy


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")


def _value_noise(rng: np.random.Generator, h: int, w: int, channels: int, scales=(4, 8, 16)) -> np.ndarray:
    out = np.zeros((h, w, channels))
    total = 0.0
    weight = 1.0
    for cells in scales:
        cy = min(cells, h) + 1
        cx = min(cells, w) + 1
        coarse = rng.random((cy, cx, channels))
        out += weight * _bilinear_resize(coarse, h, w)
        total += weight
        weight *= 0.5
    out /= total
    lo, hi = out.min(), out.max()
    return (out - lo) / max(hi - lo, 1e-9)


def _segment_field(h: int, w: int, p0, p1) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (distance along segment in [0,1], perpendicular distance)."""
    yy, xx = _grid(h, w)
    dy, dx = p1[0] - p0[0], p1[1] - p0[1]
    length2 = max(dy * dy + dx * dx, 1e-9)
    tt = ((yy - p0[0]) * dy + (xx - p0[1]) * dx) / length2
    tc = np.clip(tt, 0.0, 1.0)
    py = p0[0] + tc * dy
    px = p0[1] + tc * dx
    perp = np.sqrt((yy - py) ** 2 + (xx - px) ** 2)
    return tc, perp


def _stroke_mask(h: int, w: int, p0, p1, thickness: float) -> np.ndarray:
    _, perp = _segment_field(h, w, p0, p1)
    return perp <= thickness / 2.0


# ---------------------------------------------------------------------------
# Procedural sources
# ---------------------------------------------------------------------------


def gen_procedural_background(seed: int, resolution: tuple[int, int]) -> np.ndarray:
    """Smooth multi-scale value-noise gradient plus 2-5 random solid shapes.

    ``resolution`` is (width, height); the result is an (H, W, 3) array.
    Bitwise deterministic in the seed.
    """
    w, h = int(resolution[0]), int(resolution[1])
    if w < 1 or h < 1:
        raise ValueError(f"invalid resolution {resolution}")
    rng = np.random.default_rng(np.random.PCG64(seed))
    img = 0.05 + 0.9 * _value_noise(rng, h, w, 3)
    yy, xx = _grid(h, w)
    for _ in range(int(rng.integers(2, 6))):
        color = rng.random(3)
        cy, cx = rng.random() * h, rng.random() * w
        size = (0.08 + 0.25 * rng.random()) * min(h, w)
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= size * size
        else:
            mask = (np.abs(yy - cy) <= size) & (np.abs(xx - cx) <= size * (0.5 + rng.random()))
        img[mask] = color
    return np.clip(img, 0.0, 1.0)


def gen_procedural_foreground(
    seed: int,
    resolution: tuple[int, int],
    subtask: str,
    alpha_range: tuple[float, float] | None = None,
    fg_size_range: tuple[float, float] | None = None,
    shape_count: int | None = None,
) -> np.ndarray:
    """Subtask-shaped RGBA foreground, deterministic in the seed.

    ``shape_count`` forces the number of drawn elements where that makes
    sense (cells, x-ray silhouettes); ``shape_count=0`` yields an all-clear
    foreground.
    """
    if subtask not in SUBTASKS:
        raise ValueError(f"unknown subtask {subtask!r}; known: {SUBTASKS}")
    w, h = int(resolution[0]), int(resolution[1])
    spec = SynthSpec(subtask=subtask, width=max(w, 4), height=max(h, 4),
                     alpha_range=alpha_range, fg_size_range=fg_size_range, patch=1)
    a_lo, a_hi = spec.resolved_alpha_range
    s_lo, s_hi = spec.resolved_fg_size_range
    rng = np.random.default_rng(np.random.PCG64(seed))
    gen = _FOREGROUNDS[subtask]
    fg = gen(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count)
    return np.clip(fg, 0.0, 1.0)


def _fg_watermark(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count):
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    box = max(4, int(round(rng.uniform(s_lo, s_hi) * w)))
    box = min(box, min(h, w))
    by = int(rng.integers(0, h - box + 1))
    bx = int(rng.integers(0, w - box + 1))
    opacity = rng.uniform(a_lo, min(a_hi, WATERMARK_ALPHA_CAP))
    shade = rng.uniform(0.75, 1.0)
    color = np.clip(shade + rng.uniform(-0.05, 0.05, size=3), 0.0, 1.0)
    n_glyphs = int(rng.integers(2, 5)) if shape_count is None else shape_count
    glyph_w = box / max(n_glyphs, 1)
    thickness = max(1.0, box / 10.0)
    for g in range(n_glyphs):
        gx0 = bx + g * glyph_w
        for _ in range(int(rng.integers(2, 5))):
            p0 = (by + rng.random() * box, gx0 + rng.random() * glyph_w)
            p1 = (by + rng.random() * box, gx0 + rng.random() * glyph_w)
            mask = _stroke_mask(h, w, p0, p1, thickness)
            alpha[mask] = opacity
            rgb[mask] = color
    return np.concatenate([rgb, alpha[..., None]], axis=-1)


def _fg_flare(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count):
    yy, xx = _grid(h, w)
    field = np.zeros((h, w))
    # broad base glow keeps every quadrant lit
    d0 = np.sqrt((yy - h / 2.0) ** 2 + (xx - w / 2.0) ** 2)
    field += 0.12 * np.exp(-(d0**2) / (2.0 * (0.9 * w) ** 2))
    n_blobs = int(rng.integers(1, 4)) if shape_count is None else max(shape_count, 1)
    centers = []
    for _ in range(n_blobs):
        cy, cx = rng.random() * h, rng.random() * w
        sigma = rng.uniform(0.25, 0.5) * w
        amp = rng.uniform(0.5, 1.0)
        centers.append((cy, cx))
        field += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
    for _ in range(int(rng.integers(1, 3))):
        cy, cx = centers[int(rng.integers(0, len(centers)))]
        ang = rng.random() * np.pi
        length = rng.uniform(s_lo, s_hi) * w * 2.0
        p0 = (cy - np.sin(ang) * length, cx - np.cos(ang) * length)
        p1 = (cy + np.sin(ang) * length, cx + np.cos(ang) * length)
        _, perp = _segment_field(h, w, p0, p1)
        field += 0.5 * np.exp(-(perp**2) / (2.0 * (w / 30.0 + 1.0) ** 2))
    peak = rng.uniform(a_lo, a_hi)
    alpha = field / max(field.max(), 1e-9) * peak
    warm = np.array([1.0, 0.93, 0.78]) + rng.uniform(-0.05, 0.05, size=3)
    rgb = np.clip(warm, 0.0, 1.0)[None, None, :] * np.ones((h, w, 1))
    return np.concatenate([rgb, alpha[..., None]], axis=-1)


def _fg_occlusion(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count):
    fog = _value_noise(rng, h, w, 1, scales=(3, 6, 12))[..., 0]
    alpha = a_lo + (a_hi - a_lo) * fog
    yy, xx = _grid(h, w)
    n_drops = int(rng.integers(3, 9)) if shape_count is None else shape_count
    for _ in range(n_drops):
        cy, cx = rng.random() * h, rng.random() * w
        r = rng.uniform(0.05, max(s_lo, 0.06)) * w
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * r * r))
        alpha = np.maximum(alpha, a_hi * bump)
    shade = rng.uniform(0.78, 0.95)
    tint = _value_noise(rng, h, w, 3, scales=(4, 8))
    rgb = np.clip(shade + 0.08 * (tint - 0.5), 0.0, 1.0)
    return np.concatenate([rgb, alpha[..., None]], axis=-1)


def _fg_cell(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count):
    yy, xx = _grid(h, w)
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    n = int(rng.integers(2, 7)) if shape_count is None else shape_count
    for _ in range(n):
        cy, cx = rng.random() * h, rng.random() * w
        ay = rng.uniform(s_lo, s_hi) * w / 2.0
        bx_ = rng.uniform(s_lo, s_hi) * w / 2.0
        theta = rng.random() * np.pi
        ct, st = np.cos(theta), np.sin(theta)
        u = (yy - cy) * ct + (xx - cx) * st
        v = -(yy - cy) * st + (xx - cx) * ct
        d = np.sqrt((u / max(ay, 1.0)) ** 2 + (v / max(bx_, 1.0)) ** 2)
        profile = np.clip(1.2 * (1.0 - d), 0.0, 1.0) ** 1.5
        amp = rng.uniform(a_lo, a_hi)
        stain = np.array([rng.uniform(0.3, 0.5), rng.uniform(0.05, 0.2), rng.uniform(0.25, 0.45)])
        rgb = np.maximum(rgb, profile[..., None] * stain[None, None, :])
        alpha = np.maximum(alpha, amp * profile)
    return np.concatenate([rgb, alpha[..., None]], axis=-1)


def _fg_glass(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count):
    yy, xx = _grid(h, w)
    cy, cx = h / 2.0 + rng.uniform(-0.1, 0.1) * h, w / 2.0 + rng.uniform(-0.1, 0.1) * w
    ry = rng.uniform(s_lo, s_hi) * h / 2.0 + 2.0
    rx = rng.uniform(s_lo, s_hi) * w / 2.0 + 2.0
    d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    rim_width = rng.uniform(0.08, 0.18)
    rim = np.exp(-((d - 1.0) ** 2) / (2.0 * rim_width**2))
    interior = (d < 1.0).astype(np.float64)
    rim_alpha = rng.uniform(max(a_lo, 0.4), a_hi)
    inner_alpha = rng.uniform(0.05, 0.15)
    alpha = np.maximum(rim * rim_alpha, interior * inner_alpha)
    # interior color near 1 leaves the background through the multiply
    # branch almost untouched; the rim is hazier and slightly blue.
    rgb = np.ones((h, w, 3)) * 0.97
    rim_color = np.array([0.75, 0.82, 0.92]) + rng.uniform(-0.04, 0.04, size=3)
    rgb = rgb * (1.0 - rim[..., None]) + np.clip(rim_color, 0, 1)[None, None, :] * rim[..., None]
    rgb = np.where(interior[..., None] + rim[..., None] > 0.02, rgb, 1.0)
    return np.concatenate([np.clip(rgb, 0, 1), alpha[..., None]], axis=-1)


def _fg_xray(rng, h, w, a_lo, a_hi, s_lo, s_hi, shape_count):
    yy, xx = _grid(h, w)
    rgb = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    n = int(rng.integers(1, 4)) if shape_count is None else shape_count
    for _ in range(n):
        kind = rng.integers(0, 3)
        a = rng.uniform(a_lo, a_hi)
        # x-ray materials darken multiplicatively, so silhouettes are dark
        color = np.array([rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.35), rng.uniform(0.15, 0.55)])
        size = rng.uniform(s_lo, s_hi) * min(h, w) / 2.0 + 1.0
        cy, cx = rng.random() * h, rng.random() * w
        if kind == 0:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= size * size
        elif kind == 1:
            mask = (np.abs(yy - cy) <= size * rng.uniform(0.3, 1.0)) & (np.abs(xx - cx) <= size)
        else:
            ang = rng.random() * np.pi
            p0 = (cy - np.sin(ang) * size, cx - np.cos(ang) * size)
            p1 = (cy + np.sin(ang) * size, cx + np.cos(ang) * size)
            mask = _stroke_mask(h, w, p0, p1, max(2.0, size * 0.5))
        rgb[mask] = color
        alpha[mask] = a
    return np.concatenate([rgb, alpha[..., None]], axis=-1)


_FOREGROUNDS = {
    "watermark": _fg_watermark,
    "flare": _fg_flare,
    "occlusion": _fg_occlusion,
    "cell": _fg_cell,
    "glass": _fg_glass,
    "xray": _fg_xray,
}


# ---------------------------------------------------------------------------
# Corpus sources
# ---------------------------------------------------------------------------

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _corpus_files(directory: str) -> list[Path]:
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not files:
        raise ValueError(f"no images found in corpus directory {directory}")
    return files


def _load_corpus_image(path: Path, h: int, w: int, rgba: bool) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGBA" if rgba else "RGB")
        arr = dequantize(np.asarray(im))
    hs, ws = arr.shape[:2]
    scale = max(h / hs, w / ws)
    rh, rw = max(int(round(hs * scale)), h), max(int(round(ws * scale)), w)
    arr = _bilinear_resize(arr, rh, rw)
    y0 = (rh - h) // 2
    x0 = (rw - w) // 2
    return np.clip(arr[y0 : y0 + h, x0 : x0 + w], 0.0, 1.0)


def _corpus_foreground(rng, files: list[Path], spec: SynthSpec) -> np.ndarray:
    pick = files[int(rng.integers(0, len(files)))]
    fg = _load_corpus_image(pick, spec.height, spec.width, rgba=True)
    a_lo, a_hi = spec.resolved_alpha_range
    opacity = rng.uniform(a_lo, a_hi)
    fg[..., 3] = np.clip(fg[..., 3] * opacity, 0.0, a_hi)
    return fg


def _corpus_background(rng, files: list[Path], spec: SynthSpec) -> np.ndarray:
    pick = files[int(rng.integers(0, len(files)))]
    return _load_corpus_image(pick, spec.height, spec.width, rgba=False)


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------


def _alpha_rect(alpha_q: np.ndarray) -> list[int]:
    ys, xs = np.nonzero(alpha_q > 0)
    if len(ys) == 0:
        return [0, 0, 0, 0]
    return [int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)]


def build_dataset(spec: SynthSpec, out_dir) -> dict:
    """Write train/test triplets plus a manifest; returns a summary dict."""
    spec.validate()
    out = Path(out_dir)
    total_bytes = 0
    rows = []
    fg_files = _corpus_files(spec.corpus_fg) if spec.source == "corpus" else None
    bg_files = _corpus_files(spec.corpus_bg) if spec.source == "corpus" else None

    for split, count in (("train", spec.count_train), ("test", spec.count_test)):
        (out / split).mkdir(parents=True, exist_ok=True)
        for i in range(count):
            rid = f"{spec.subtask}-{split}-{i:05d}"
            rseed = derive_seed(spec.seed, rid)
            if spec.source == "procedural":
                fg = gen_procedural_foreground(
                    derive_seed(rseed, "fg"), (spec.width, spec.height), spec.subtask,
                    alpha_range=spec.alpha_range, fg_size_range=spec.fg_size_range,
                )
                bg = gen_procedural_background(derive_seed(rseed, "bg"), (spec.width, spec.height))
            else:
                rng = np.random.default_rng(np.random.PCG64(rseed))
                fg = _corpus_foreground(rng, fg_files, spec)
                bg = _corpus_background(rng, bg_files, spec)
            fg_q = quantize(fg)
            bg_q = quantize(bg)
            comp = compose(dequantize(fg_q), dequantize(bg_q), BlendMode(spec.subtask))
            comp_q = quantize(comp)

            rels = {
                "fg_path": f"{split}/{rid}_fg.png",
                "bg_path": f"{split}/{rid}_bg.png",
                "comp_path": f"{split}/{rid}_comp.png",
            }
            total_bytes += save_png(out / rels["fg_path"], fg_q)
            total_bytes += save_png(out / rels["bg_path"], bg_q)
            total_bytes += save_png(out / rels["comp_path"], comp_q)

            alpha_q = dequantize(fg_q[..., 3])
            rows.append(
                {
                    "id": rid,
                    "subtask": spec.subtask,
                    "mode": spec.subtask,
                    "split": split,
                    **rels,
                    "alpha_min": float(alpha_q.min()),
                    "alpha_mean": float(alpha_q.mean()),
                    "alpha_max": float(alpha_q.max()),
                    "rect": _alpha_rect(fg_q[..., 3]),
                    "seed": int(rseed),
                    "source": spec.source,
                }
            )

    manifest = out / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    total_bytes += manifest.stat().st_size
    return {"n_train": spec.count_train, "n_test": spec.count_test, "bytes": total_bytes}


def read_manifest(path) -> list[dict]:
    """Parse a JSON-lines manifest; errors name the offending line."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"manifest line {lineno}: invalid JSON ({e})") from e
            for key in ("id", "subtask", "mode", "split", "fg_path", "bg_path", "comp_path"):
                if key not in row:
                    raise ValueError(f"manifest line {lineno}: missing field {key!r}")
            rows.append(row)
    if not rows:
        raise ValueError(f"manifest {path}: no records")
    return rows


def load_triplet(manifest_path, row: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode one record's (fg, bg, comp) arrays; paths resolve relative to the manifest."""
    base = Path(manifest_path).parent
    try:
        fg = load_png(base / row["fg_path"])
        bg = load_png(base / row["bg_path"])
        comp = load_png(base / row["comp_path"])
    except FileNotFoundError as e:
        raise ValueError(f"record {row['id']}: missing file ({e.filename})") from e
    if fg.shape[2] != 4:
        raise ValueError(f"record {row['id']}: foreground is not RGBA")
    if fg.shape[:2] != bg.shape[:2] or fg.shape[:2] != comp.shape[:2]:
        raise ValueError(f"record {row['id']}: extent mismatch across triplet files")
    return fg, bg, comp
