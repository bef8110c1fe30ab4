"""Soft-threshold merge of the two branch outputs.

The blend starts from the distortion-oriented image and moves each pixel
toward the perception-oriented one, but the step is shrunk by the
threshold: differences at or below it are dropped entirely, larger ones
are shortened by it.  Threshold 0 returns the perception image exactly;
a threshold at or above the largest pixel difference returns the
distortion image exactly.  Every fused value lies between the two inputs.

Thresholds are expressed in 8-bit intensity units (0-255 scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgio import ImageTensor, EIGHTBIT, to_eightbit_scale


@dataclass(frozen=True)
class FusionParams:
    """Shrinkage threshold in 8-bit units; 0.73 is the tuned default.

    ``extrapolate`` selects an alternative composition that adds the
    shrunk difference on top of the perception image instead, pushing the
    result away from the distortion image; it is kept only for
    comparison runs and is not used by the pipeline.
    """

    threshold: float = 0.73
    extrapolate: bool = False

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("fusion threshold must be >= 0")


def soft(delta, threshold: float):
    """Elementwise shrinkage: sign(delta) * max(|delta| - threshold, 0)."""
    if threshold < 0:
        raise ValueError("shrinkage threshold must be >= 0")
    delta = np.asarray(delta, dtype=np.float64)
    return np.sign(delta) * np.maximum(np.abs(delta) - threshold, 0.0)


def fuse(perception: ImageTensor, distortion: ImageTensor, params: FusionParams) -> ImageTensor:
    """Blend the perception-oriented image toward the distortion-oriented one.

    Inputs are brought to the 0-255 scale first.  The result equals
    distortion + soft(perception - distortion, threshold), computed in a
    form whose endpoints reproduce the inputs bitwise: scaled-down
    differences keep the distortion pixel, surviving ones land exactly
    ``threshold`` short of the perception pixel.
    """
    if perception.data.shape != distortion.data.shape:
        raise ValueError(
            f"shape mismatch {perception.data.shape} vs {distortion.data.shape}"
        )
    p = to_eightbit_scale(perception).data
    d = to_eightbit_scale(distortion).data
    delta = p - d
    if params.extrapolate:
        fused = p + soft(delta, params.threshold)
    else:
        fused = np.where(np.abs(delta) <= params.threshold, d, p - np.sign(delta) * params.threshold)
    return ImageTensor(np.clip(fused, 0.0, 255.0), EIGHTBIT, perception.colorspace)
