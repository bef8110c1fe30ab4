"""Dual-branch GAN super-resolution with soft-threshold fusion.

Two complementary 4x generators are trained adversarially: a
distortion-oriented branch built on gated memory-residual blocks, and a
perception-oriented branch trained in two stages (pixel-anchored, then
feature-anchored).  Their outputs are merged per pixel by a
soft-threshold blend; sweeping the threshold traces the
perception-distortion tradeoff that the evaluation stack measures.
"""

__version__ = "0.1.0"

from .config import RunConfig
from .data import DatasetConfig, PatchPair
from .fusion import FusionParams, fuse, soft
from .imgio import ImageTensor, load_image, save_image
from .losses import LossWeights
from .metrics import MetricReport, PlanePoint, evaluate_dir, perceptual_index, plane_sweep
from .models import (
    Discriminator,
    DiscriminatorConfig,
    MemoryGeneratorConfig,
    MemoryResidualGenerator,
    ResidualGenerator,
    ResidualGeneratorConfig,
)
from .trainer import OptimizerConfig, Schedule, TrainingPlan, load_checkpoint, save_checkpoint

__all__ = [
    "RunConfig",
    "DatasetConfig",
    "PatchPair",
    "FusionParams",
    "fuse",
    "soft",
    "ImageTensor",
    "load_image",
    "save_image",
    "LossWeights",
    "MetricReport",
    "PlanePoint",
    "evaluate_dir",
    "perceptual_index",
    "plane_sweep",
    "Discriminator",
    "DiscriminatorConfig",
    "MemoryGeneratorConfig",
    "MemoryResidualGenerator",
    "ResidualGenerator",
    "ResidualGeneratorConfig",
    "OptimizerConfig",
    "Schedule",
    "TrainingPlan",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
