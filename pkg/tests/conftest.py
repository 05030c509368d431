import numpy as np
import pytest

from layerforge.blends import BlendMode


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_triplet_inputs(rng, h=16, w=16, lo=0.0, hi=1.0):
    """Random (fg RGBA, bg RGB) with values in [lo, hi]."""
    fg = lo + (hi - lo) * rng.random((h, w, 4))
    bg = lo + (hi - lo) * rng.random((h, w, 3))
    return fg, bg


def open_gates(state, seed=0, scale=0.05):
    """Randomize the zero-initialized timestep modulation.

    Fresh states have identity blocks (gates at zero), so nothing mixes
    across tokens; tests that need conditioning paths active must open them.
    """
    rng = np.random.default_rng(seed)
    for name, arr in state.params.items():
        if ".mod." in name:
            arr += scale * rng.standard_normal(arr.shape)
    return state


ALL_MODES = tuple(BlendMode)
