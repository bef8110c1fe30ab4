"""Image tensors, PNG I/O, color conversion, and border utilities.

Every image in the pipeline is an :class:`ImageTensor`: a float64 array of
shape (batch, channels, height, width) carrying an explicit value-range tag
(``unit`` for [0,1], ``eightbit`` for [0,255]) and a colorspace tag (``rgb``
or ``y``).  Compute happens in unit range; metrics convert to the 0-255
scale at the boundary.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .exceptions import DataError, ImageFormatError

UNIT = "unit"
EIGHTBIT = "eightbit"
RGB = "rgb"
YCHAN = "y"

_RANGE_BOUNDS = {UNIT: (0.0, 1.0), EIGHTBIT: (0.0, 255.0)}

# Luma weights: studio-swing BT.601, the benchmark convention for SR work.
# They sum to 219, so unit-range RGB maps into [16/255, 235/255].
_Y_COEFFS = (65.481, 128.553, 24.966)
_Y_OFFSET = 16.0


@dataclass(frozen=True)
class ImageTensor:
    """Image batch with explicit layout, range, and colorspace.

    Values must lie inside the declared range; construction enforces this,
    so clamp before wrapping raw network output.
    """

    data: np.ndarray
    range_tag: str = UNIT
    colorspace: str = RGB

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", arr)
        if arr.ndim != 4:
            raise ValueError(f"expected (batch, channels, height, width), got shape {arr.shape}")
        if self.range_tag not in _RANGE_BOUNDS:
            raise ValueError(f"unknown range tag {self.range_tag!r}")
        if self.colorspace not in (RGB, YCHAN):
            raise ValueError(f"unknown colorspace {self.colorspace!r}")
        expected_ch = 3 if self.colorspace == RGB else 1
        if arr.shape[1] != expected_ch:
            raise ValueError(
                f"{self.colorspace} images need {expected_ch} channels, got {arr.shape[1]}"
            )
        if arr.shape[2] < 1 or arr.shape[3] < 1:
            raise ValueError(f"degenerate spatial dims {arr.shape[2:]}")
        lo, hi = _RANGE_BOUNDS[self.range_tag]
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValueError(
                f"values [{arr.min():g}, {arr.max():g}] outside declared {self.range_tag} range"
            )

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]


def load_image(path) -> ImageTensor:
    """Read an 8-bit RGB PNG into a unit-range, batch-1 tensor.

    Stored 8-bit codes are divided by 255.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image file: {path}")
    with Image.open(path) as im:
        if im.format != "PNG":
            raise ImageFormatError(f"{path}: only PNG is supported, got {im.format}")
        if im.mode in ("I", "I;16", "I;16B", "I;16L"):
            raise ImageFormatError(f"{path}: unsupported bit depth (mode {im.mode})")
        if im.mode != "RGB":
            raise ImageFormatError(f"{path}: expected 8-bit RGB, got mode {im.mode}")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return ImageTensor(arr.transpose(2, 0, 1)[None], UNIT, RGB)


def save_image(img: ImageTensor, path) -> None:
    """Write a batch-1 RGB tensor as an 8-bit PNG (quantizing first)."""
    if img.colorspace != RGB:
        raise ImageFormatError("only RGB tensors can be written as PNG")
    if img.batch != 1:
        raise ValueError(f"save_image expects batch 1, got {img.batch}")
    codes = quantize_to_8bit(img).data[0].transpose(1, 2, 0).astype(np.uint8)
    Image.fromarray(codes, mode="RGB").save(path, format="PNG")


def rgb_to_y(img: ImageTensor, full_range: bool = False) -> ImageTensor:
    """Convert unit-range RGB to the luma channel.

    Default is studio swing: y = (16 + 65.481 r + 128.553 g + 24.966 b)/255
    on unit-range inputs, landing in [16/255, 235/255].  ``full_range``
    selects the offset-free 0.299/0.587/0.114 weighting instead.
    """
    if img.colorspace != RGB:
        raise ValueError("rgb_to_y needs RGB input")
    arr = img.data if img.range_tag == UNIT else img.data / 255.0
    if full_range:
        y = 0.299 * arr[:, 0] + 0.587 * arr[:, 1] + 0.114 * arr[:, 2]
    else:
        wr, wg, wb = _Y_COEFFS
        y = (_Y_OFFSET + wr * arr[:, 0] + wg * arr[:, 1] + wb * arr[:, 2]) / 255.0
    return ImageTensor(y[:, None], UNIT, YCHAN)


def shave_border(img: ImageTensor, n: int) -> ImageTensor:
    """Drop n pixels from every border (centered crop)."""
    if n < 0:
        raise ValueError("border width must be >= 0")
    if n == 0:
        return img
    if img.height <= 2 * n or img.width <= 2 * n:
        raise DataError(
            f"cannot shave {n} px from a {img.height}x{img.width} image: crop would be empty"
        )
    return ImageTensor(img.data[:, :, n:-n, n:-n], img.range_tag, img.colorspace)


def _round_half_away(arr: np.ndarray) -> np.ndarray:
    # Inputs are clamped non-negative, so half-away-from-zero == floor(x + 0.5).
    return np.floor(arr + 0.5)


def quantize_codes(arr) -> np.ndarray:
    """Unit-scale values (possibly out of range) to integer 0-255 codes."""
    return _round_half_away(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0) * 255.0)


def quantize_to_8bit(img: ImageTensor) -> ImageTensor:
    """Clamp, scale to 0-255, and round half away from zero."""
    if img.range_tag == UNIT:
        arr = quantize_codes(img.data)
    else:
        arr = _round_half_away(np.clip(img.data, 0.0, 255.0))
    return ImageTensor(arr, EIGHTBIT, img.colorspace)


def to_unit(img: ImageTensor) -> ImageTensor:
    """Rescale an eightbit-tagged tensor to the unit range."""
    if img.range_tag == UNIT:
        return img
    return ImageTensor(img.data / 255.0, UNIT, img.colorspace)


def to_eightbit_scale(img: ImageTensor) -> ImageTensor:
    """Rescale to the 0-255 range without quantizing."""
    if img.range_tag == EIGHTBIT:
        return img
    return ImageTensor(img.data * 255.0, EIGHTBIT, img.colorspace)
