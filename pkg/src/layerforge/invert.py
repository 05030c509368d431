"""Analytic inverses of the blend operators, with singularity masks.

Each blend mode admits a closed-form inverse: given the composite and one
layer, the other layer is recovered per pixel and channel. Pixels where the
algebra is ill-conditioned (divisor below ``eps``) or information-destroying
(additive saturation) are flagged in ``valid_mask`` instead of being guessed.

These inverses are the ground-truth oracle for evaluating the generative
decomposer: they use the true complementary layer, which the model never sees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blends import BlendMode, compose
from .validation import as_alpha, as_image, check_same_extent

__all__ = ["InversionResult", "invert_background", "invert_foreground", "consistency_check"]

# Floor used only to keep guarded divisions finite; anything this small is
# already far below any sensible eps and gets masked invalid.
_DIV_FLOOR = 1e-12


@dataclass
class InversionResult:
    """Recovered layer plus conditioning diagnostics.

    Attributes:
        recovered: ``(H, W, 3)`` recovered layer, clamped to [0, 1].
        valid_mask: ``(H, W)`` bool, True where the inversion is well-conditioned
            in every channel.
        ambiguous_mask: ``(H, W)`` bool, True where the glass rule admits both
            or neither branch (always False for the other modes).
        residual: RMSE of re-composition against the composite over valid
            pixels, on the [0, 1] scale (0.0 when no pixel is valid).
    """

    recovered: np.ndarray
    valid_mask: np.ndarray
    ambiguous_mask: np.ndarray
    residual: float


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return num / np.maximum(den, _DIV_FLOOR)


def _glass_forward(a: np.ndarray, b: np.ndarray, thr: float) -> np.ndarray:
    return np.where(b < thr, a * b, 1.0 - (1.0 - a) * (1.0 - b))


def _masked_rmse(x: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        return 0.0
    diff = (x - y)[mask]
    return float(np.sqrt(np.mean(diff * diff)))


def _finish(
    known_layer: np.ndarray,
    comp: np.ndarray,
    recovered: np.ndarray,
    valid_ch: np.ndarray,
    ambiguous_ch: np.ndarray,
    mode: BlendMode,
    glass_threshold: float,
    recovered_is_background: bool,
    alpha_for_fg: np.ndarray | None = None,
) -> InversionResult:
    recovered = np.clip(recovered, 0.0, 1.0)
    valid = valid_ch.all(axis=-1)
    ambiguous = ambiguous_ch.any(axis=-1)
    if recovered_is_background:
        recomposed = compose(known_layer, recovered, mode, glass_threshold)
    else:
        rgba = np.concatenate([recovered, alpha_for_fg[..., None]], axis=-1)
        recomposed = compose(rgba, known_layer, mode, glass_threshold)
    residual = _masked_rmse(recomposed, comp, valid)
    return InversionResult(recovered, valid, ambiguous, residual)


def invert_background(
    comp,
    fg,
    mode: BlendMode | str,
    eps: float = 1e-3,
    glass_threshold: float = 0.5,
) -> InversionResult:
    """Recover the background from (composite, foreground).

    Args:
        comp: ``(H, W, 3)`` composite in [0, 1].
        fg: ``(H, W, 4)`` RGBA foreground in [0, 1].
        mode: blend operator tag.
        eps: singularity threshold on the [0, 1] scale; divisors below it
            mark a pixel invalid.
        glass_threshold: branch point of the glass rule.

    Returns:
        InversionResult with the recovered background.
    """
    comp = as_image(comp, channels=3, name="composite")
    fg = as_image(fg, channels=4, name="foreground")
    check_same_extent(comp, fg, ("composite", "foreground"))
    mode = BlendMode(mode)
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")

    a = fg[..., :3]
    alpha = fg[..., 3:4]
    i = comp
    amb = np.zeros(i.shape, dtype=bool)

    if mode is BlendMode.XRAY:
        den = 1.0 - alpha * (1.0 - a)  # == 1 - alpha + alpha*a
        rec = _safe_div(i, den)
        valid = den >= eps
    elif mode is BlendMode.GLASS:
        thr = glass_threshold
        avail_m = a >= eps
        avail_s = (1.0 - a) >= eps
        b_m = np.clip(_safe_div(i, a), 0.0, 1.0)
        b_s = np.clip(1.0 - _safe_div(1.0 - i, 1.0 - a), 0.0, 1.0)
        cons_m = b_m < thr
        cons_s = b_s >= thr
        res_m = np.abs(_glass_forward(a, b_m, thr) - i)
        res_s = np.abs(_glass_forward(a, b_s, thr) - i)
        # Prefer available, branch-consistent candidates; break ties (both
        # consistent) by re-composition residual. A pixel is well-conditioned
        # only when the candidate actually used is available *and* consistent:
        # falling back to the other branch because the right divisor is tiny
        # produces a value, not an inversion.
        big = 10.0
        score_m = res_m + np.where(cons_m, 0.0, big) + np.where(avail_m, 0.0, 10 * big)
        score_s = res_s + np.where(cons_s, 0.0, big) + np.where(avail_s, 0.0, 10 * big)
        use_m = score_m <= score_s
        rec = np.where(use_m, b_m, b_s)
        valid = np.where(use_m, avail_m & cons_m, avail_s & cons_s)
        amb = (cons_m & cons_s) | (~cons_m & ~cons_s)
    elif mode is BlendMode.WATERMARK:
        rec = _safe_div(i - (1.0 - alpha) * a, alpha)
        valid = np.broadcast_to(alpha >= eps, i.shape)
    elif mode is BlendMode.CELL:
        rec = i - a
        saturated = (i > 1.0 - eps) & (a > eps)
        valid = ~saturated
    elif mode is BlendMode.OCCLUSION:
        rec = _safe_div(i - alpha * a, 1.0 - alpha)
        valid = np.broadcast_to((1.0 - alpha) >= eps, i.shape)
    elif mode is BlendMode.FLARE:
        den = 1.0 - alpha * a
        rec = 1.0 - _safe_div(1.0 - i, den)
        valid = den >= eps
    else:  # pragma: no cover
        raise ValueError(f"unknown blend mode {mode!r}")

    return _finish(fg, comp, rec, valid, amb, mode, glass_threshold, True)


def invert_foreground(
    comp,
    bg,
    alpha,
    mode: BlendMode | str,
    eps: float = 1e-3,
    glass_threshold: float = 0.5,
) -> InversionResult:
    """Recover the foreground RGB from (composite, background, alpha map).

    Mirror of :func:`invert_background` with the layer roles exchanged; the
    glass branch is chosen directly by the known background against the
    threshold, so there is no ambiguity.
    """
    comp = as_image(comp, channels=3, name="composite")
    bg = as_image(bg, channels=3, name="background")
    check_same_extent(comp, bg, ("composite", "background"))
    alpha = as_alpha(alpha, extent=comp.shape[:2], name="alpha")
    mode = BlendMode(mode)
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")

    al = alpha[..., None]
    b = bg
    i = comp
    amb = np.zeros(i.shape, dtype=bool)

    if mode is BlendMode.XRAY:
        # I = (1-al)*B + al*A*B  =>  A = (I - (1-al)*B) / (al*B)
        den = al * b
        rec = _safe_div(i - (1.0 - al) * b, den)
        valid = den >= eps
    elif mode is BlendMode.GLASS:
        thr = glass_threshold
        mul = b < thr
        rec = np.where(mul, _safe_div(i, b), 1.0 - _safe_div(1.0 - i, 1.0 - b))
        valid = np.where(mul, b >= eps, (1.0 - b) >= eps)
    elif mode is BlendMode.WATERMARK:
        # I = (1-al)*A + al*B  =>  A = (I - al*B) / (1-al)
        rec = _safe_div(i - al * b, 1.0 - al)
        valid = np.broadcast_to((1.0 - al) >= eps, i.shape)
    elif mode is BlendMode.CELL:
        rec = i - b
        saturated = (i > 1.0 - eps) & (b > eps)
        valid = ~saturated
    elif mode is BlendMode.OCCLUSION:
        rec = _safe_div(i - (1.0 - al) * b, al)
        valid = np.broadcast_to(al >= eps, i.shape)
    elif mode is BlendMode.FLARE:
        # 1-I = (1-al*A)*(1-B)  =>  A = (1 - (1-I)/(1-B)) / al
        den_b = 1.0 - b
        rec = _safe_div(1.0 - _safe_div(1.0 - i, den_b), al)
        valid = (den_b >= eps) & np.broadcast_to(al >= eps, i.shape)
    else:  # pragma: no cover
        raise ValueError(f"unknown blend mode {mode!r}")

    return _finish(bg, comp, rec, valid, amb, mode, glass_threshold, False, alpha_for_fg=alpha)


def consistency_check(
    fg,
    bg,
    comp,
    mode: BlendMode | str,
    tol: float,
    glass_threshold: float = 0.5,
) -> tuple[float, bool]:
    """RMSE between ``compose(fg, bg, mode)`` and a stored composite.

    Returns ``(rmse, rmse <= tol)`` on the [0, 1] scale.
    """
    comp = as_image(comp, channels=3, name="composite")
    recomposed = compose(fg, bg, mode, glass_threshold)
    check_same_extent(comp, recomposed, ("composite", "recomposed"))
    diff = recomposed - comp
    rmse = float(np.sqrt(np.mean(diff * diff)))
    return rmse, rmse <= tol
