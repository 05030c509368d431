"""Inference samplers: Euler rectified-flow integration and a DDIM-style mode.

``euler`` is the default and matches the training target: starting from
Gaussian token noise at t = 1, it integrates the predicted velocity field
down to t = 0 with fixed steps, the composite tokens staying clean throughout.

``algorithm1`` applies a DDIM-style update that treats the predicted velocity
as the noise estimate and draws its stochasticity from
``sigma_t^2 = eta * sqrt((1 - abar_{t-1}) / (1 - abar_t)) * (1 - abar_t / abar_{t-1})``
over a cosine ``abar`` schedule (eta = 0 makes every step deterministic).
Initial noise is drawn once; the per-step Gaussian enters only through the
``sigma_t`` term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import TokenSequence, image_to_latent, latent_to_image
from .model import ModelState, forward
from .validation import as_image

__all__ = ["SamplerConfig", "cosine_alpha_bar", "sigma_schedule", "sample", "sample_tokens"]

METHODS = ("euler", "algorithm1")


@dataclass
class SamplerConfig:
    method: str = "euler"
    steps: int = 16
    eta: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")


def cosine_alpha_bar(n: int) -> np.ndarray:
    """Cosine noise schedule: ``abar[k]`` for k = 1..n, strictly in (0, 1],
    monotone decreasing in k (``abar_0`` is defined as 1)."""
    if n < 1:
        raise ValueError(f"need n >= 1 schedule entries, got {n}")
    s = 0.008
    k = np.arange(1, n + 1, dtype=np.float64)
    f = np.cos((k / n + s) / (1.0 + s) * np.pi / 2.0) ** 2
    f0 = math.cos(s / (1.0 + s) * math.pi / 2.0) ** 2
    abar = np.clip(f / f0, 1e-8, 1.0)
    return abar


def sigma_schedule(abar: np.ndarray, eta: float) -> np.ndarray:
    """Per-step ``sigma_t`` for t = 1..n; identically zero when eta = 0.

    ``sigma_t^2`` is clamped into [0, 1 - abar_{t-1}] so the companion
    coefficient ``sqrt(1 - abar_{t-1} - sigma_t^2)`` stays real.
    """
    n = len(abar)
    sig = np.zeros(n)
    for t in range(1, n + 1):
        ab_t = abar[t - 1]
        ab_prev = 1.0 if t == 1 else abar[t - 2]
        var = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * (1.0 - ab_t / ab_prev)
        var = min(max(var, 0.0), 1.0 - ab_prev)
        sig[t - 1] = math.sqrt(var)
    return sig


def sample_tokens(
    state: ModelState,
    z_seq: TokenSequence,
    subtask: str,
    cfg: SamplerConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the configured sampler in token space; returns final (x, y) latents."""
    cfg.validate()
    mc = state.config
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    n = z_seq.rows * z_seq.cols
    x = rng.standard_normal((n, mc.fg_token_dim))
    y = rng.standard_normal((n, mc.bg_token_dim))
    steps = cfg.steps

    if cfg.method == "euler":
        for k in range(steps, 0, -1):
            s = k / steps
            v_x, v_y = _velocities(state, z_seq, x, y, s, subtask, k)
            x = x - v_x / steps
            y = y - v_y / steps
    else:
        abar = cosine_alpha_bar(steps)
        sig = sigma_schedule(abar, cfg.eta)
        for t in range(steps, 0, -1):
            ab_t = abar[t - 1]
            ab_prev = 1.0 if t == 1 else abar[t - 2]
            s_t = sig[t - 1]
            v_x, v_y = _velocities(state, z_seq, x, y, t / steps, subtask, t)
            coef = math.sqrt(max(1.0 - ab_prev - s_t * s_t, 0.0))
            x = (
                math.sqrt(ab_prev) * (x - math.sqrt(1.0 - ab_t) * v_x) / math.sqrt(ab_t)
                + coef * v_x
                + s_t * rng.standard_normal(x.shape)
            )
            y = (
                math.sqrt(ab_prev) * (y - math.sqrt(1.0 - ab_t) * v_y) / math.sqrt(ab_t)
                + coef * v_y
                + s_t * rng.standard_normal(y.shape)
            )
    _abort_if_nonfinite(x, y, 0)
    return x, y


def _velocities(state, z_seq, x, y, s, subtask, step_index):
    _abort_if_nonfinite(x, y, step_index)
    x_seq = TokenSequence(x, z_seq.rows, z_seq.cols, "foreground")
    y_seq = TokenSequence(y, z_seq.rows, z_seq.cols, "background")
    return forward(state, z_seq, x_seq, y_seq, s, subtask)


def _abort_if_nonfinite(x: np.ndarray, y: np.ndarray, step_index: int) -> None:
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise FloatingPointError(f"non-finite latents at sampler step {step_index}")


def sample(
    state: ModelState,
    z_img,
    subtask: str,
    cfg: SamplerConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Decompose a composite image into (foreground RGBA, background RGB).

    ``z_img`` must match the training resolution (extent divisible by the
    model patch size). Outputs are decoded to [0, 1] pixel space.
    """
    z_img = as_image(z_img, channels=3, name="composite")
    patch = state.config.patch
    if z_img.shape[0] % patch or z_img.shape[1] % patch:
        raise ValueError(
            f"composite extent {z_img.shape[:2]} not divisible by model patch {patch}"
        )
    z_seq = image_to_latent(z_img, patch, "composite")
    x_tok, y_tok = sample_tokens(state, z_seq, subtask, cfg)
    x_img = latent_to_image(TokenSequence(x_tok, z_seq.rows, z_seq.cols, "foreground"), patch, 4)
    y_img = latent_to_image(TokenSequence(y_tok, z_seq.rows, z_seq.cols, "background"), patch, 3)
    return x_img, y_img
