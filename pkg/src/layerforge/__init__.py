"""Layer decomposition toolkit: blend algebra, analytic inverses, synthetic
triplet datasets, and a small flow-matching diffusion transformer that learns
to split alpha-composited images into their foreground and background layers.
"""

from .blends import BlendMode, compose
from .codec import (
    PosEncoding,
    TokenSequence,
    clone_position_encodings,
    image_to_latent,
    latent_to_image,
    make_pe,
    patchify,
    unpatchify,
    zero_pe,
)
from .estimator import LayerDecomposer
from .flow import TrainConfig, TrainStepRecord, flow_sample, gradcheck, loss_lce, train
from .invert import InversionResult, consistency_check, invert_background, invert_foreground
from .metrics import rmse, ssim
from .model import (
    ModelConfig,
    ModelState,
    NumericsError,
    backward,
    forward,
    init_state,
    load_checkpoint,
    mm_attention,
    n_params,
    save_checkpoint,
)
from .sampler import SamplerConfig, cosine_alpha_bar, sample, sigma_schedule
from .synth import SynthSpec, build_dataset, gen_procedural_background, gen_procedural_foreground

__version__ = "0.1.0"

__all__ = [
    "BlendMode",
    "compose",
    "InversionResult",
    "invert_background",
    "invert_foreground",
    "consistency_check",
    "SynthSpec",
    "build_dataset",
    "gen_procedural_background",
    "gen_procedural_foreground",
    "TokenSequence",
    "PosEncoding",
    "patchify",
    "unpatchify",
    "make_pe",
    "zero_pe",
    "clone_position_encodings",
    "image_to_latent",
    "latent_to_image",
    "ModelConfig",
    "ModelState",
    "NumericsError",
    "init_state",
    "n_params",
    "forward",
    "backward",
    "mm_attention",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainStepRecord",
    "flow_sample",
    "loss_lce",
    "train",
    "gradcheck",
    "SamplerConfig",
    "sample",
    "cosine_alpha_bar",
    "sigma_schedule",
    "rmse",
    "ssim",
    "LayerDecomposer",
    "__version__",
]
