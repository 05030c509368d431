"""Forward compositing operators on normalized [0, 1] images.

Six per-pixel blend modes combine an RGBA foreground with an RGB background.
All arithmetic is done in normalized floating point; 8-bit scaling factors
reduce algebraically (e.g. the darkening product (A/255)*(B/255)*255 is just
A*B on the [0, 1] scale).

Convention note: the linear watermark blend is ``I = (1-alpha)*A + alpha*B``,
i.e. ``alpha`` weights the *background*; ``alpha = 1`` therefore reproduces
the background exactly. This is the opposite of the usual over-operator
convention, and it is intentional — callers that want the standard over
semantics should use ``BlendMode.OCCLUSION``.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .validation import as_image, check_same_extent

__all__ = ["BlendMode", "compose"]


class BlendMode(str, Enum):
    """The six compositing operators."""

    XRAY = "xray"
    GLASS = "glass"
    WATERMARK = "watermark"
    CELL = "cell"
    OCCLUSION = "occlusion"
    FLARE = "flare"

    def __str__(self) -> str:  # argparse/report friendliness
        return self.value


def compose(fg, bg, mode: BlendMode | str, glass_threshold: float = 0.5) -> np.ndarray:
    """Composite an RGBA foreground over an RGB background.

    Per pixel and channel, with A the foreground color, B the background
    color and ``a`` the foreground alpha:

    - ``xray``:       I = (1-a)*B + a*A*B        (multiplicative darkening)
    - ``glass``:      I = A*B where B < threshold, else 1-(1-A)*(1-B)
    - ``watermark``:  I = (1-a)*A + a*B          (see module convention note)
    - ``cell``:       I = clamp(A + B, 0, 1)     (additive intensity build-up)
    - ``occlusion``:  I = a*A + (1-a)*B          (full-image alpha over)
    - ``flare``:      I = 1 - (1-a*A)*(1-B)      (alpha-weighted screen)

    Pure function: identical inputs give bitwise-identical outputs.

    Args:
        fg: ``(H, W, 4)`` RGBA foreground in [0, 1].
        bg: ``(H, W, 3)`` RGB background in [0, 1].
        mode: blend operator tag.
        glass_threshold: branch point of the glass rule, in (0, 1).

    Returns:
        ``(H, W, 3)`` composite in [0, 1].

    Raises:
        ValueError: on extent mismatch, wrong channel counts, non-finite or
            out-of-range values, or an invalid threshold.
    """
    fg = as_image(fg, channels=4, name="foreground")
    bg = as_image(bg, channels=3, name="background")
    check_same_extent(fg, bg, ("foreground", "background"))
    mode = BlendMode(mode)
    if not 0.0 < glass_threshold < 1.0:
        raise ValueError(f"glass_threshold must be in (0, 1), got {glass_threshold}")

    a = fg[..., :3]
    alpha = fg[..., 3:4]

    if mode is BlendMode.XRAY:
        # (1-alpha)*B + alpha*A*B, factored so alpha=0 and A=1 return B exactly.
        out = bg * (1.0 - alpha * (1.0 - a))
    elif mode is BlendMode.GLASS:
        out = np.where(bg < glass_threshold, a * bg, 1.0 - (1.0 - a) * (1.0 - bg))
    elif mode is BlendMode.WATERMARK:
        out = (1.0 - alpha) * a + alpha * bg
    elif mode is BlendMode.CELL:
        out = a + bg
    elif mode is BlendMode.OCCLUSION:
        out = alpha * a + (1.0 - alpha) * bg
    elif mode is BlendMode.FLARE:
        out = 1.0 - (1.0 - alpha * a) * (1.0 - bg)
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown blend mode {mode!r}")

    return np.clip(out, 0.0, 1.0)
