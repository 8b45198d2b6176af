"""Self-supervised harmonization toolkit.

The package generates training data by perturbing a masked region of a real
image, provides the metrics used to score harmonization quality, and ships a
small windowed-attention model plus trainer that learns to undo the
perturbations. See the README for the command-line entry points.
"""

from .errors import HarmkitError, ParameterError, ShapeError
from .imaging import (
    ForegroundMask,
    ImageBuffer,
    PixelU8View,
    composite,
    from_u8,
    hsv_to_rgb,
    luminance,
    rgb_to_hsv,
    to_u8,
)
from .maskgen import MaskSpec, block_mask, grid_mask, make_mask, random_mask
from .metrics import MetricReport, aggregate, evaluate, fmse, fpsnr, mse, psnr
from .model import HarmonizerModel, ModelConfig, desk_config, large_config
from .pipeline import (
    PipelineConfig,
    Provenance,
    TrainingSample,
    generate_sample,
    generate_stream,
)
from .tensor import Tensor
from .training import (
    AdamW,
    TrainConfig,
    cosine_lr,
    finetune_loop,
    fn_mse_loss,
    mse_loss,
    pretrain_loop,
)
from .transforms import (
    LESS,
    STANDARD,
    DiversityPreset,
    TransformSpec,
    apply_transform,
    sample_transform,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "DiversityPreset",
    "ForegroundMask",
    "HarmkitError",
    "HarmonizerModel",
    "ImageBuffer",
    "LESS",
    "MaskSpec",
    "MetricReport",
    "ModelConfig",
    "ParameterError",
    "PipelineConfig",
    "PixelU8View",
    "Provenance",
    "STANDARD",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "TrainingSample",
    "TransformSpec",
    "aggregate",
    "apply_transform",
    "block_mask",
    "composite",
    "cosine_lr",
    "desk_config",
    "evaluate",
    "finetune_loop",
    "fmse",
    "fn_mse_loss",
    "fpsnr",
    "from_u8",
    "generate_sample",
    "generate_stream",
    "grid_mask",
    "hsv_to_rgb",
    "large_config",
    "luminance",
    "make_mask",
    "mse",
    "mse_loss",
    "pretrain_loop",
    "psnr",
    "random_mask",
    "rgb_to_hsv",
    "sample_transform",
    "to_u8",
]
