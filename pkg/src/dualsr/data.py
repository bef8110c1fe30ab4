"""LR-HR pair construction: bicubic degradation, patch sampling, batching.

The degradation is the classic antialiased bicubic (a = -0.5, kernel width
scaled by the factor, edge replication).  LR images are precomputed once
per source image and patches are co-located crops, so an emitted LR patch
is exactly the downsample of its HR partner's source region.

All sampling is driven by an explicit numpy Generator: same seed, same
batch stream.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .exceptions import DataError
from .imgio import ImageTensor, _RANGE_BOUNDS, load_image


@dataclass(frozen=True)
class DatasetConfig:
    hr_dir: str = ""
    scale: int = 4
    lr_patch: int = 24
    batch_size: int = 16
    flip: bool = True
    seed: int = 0
    crops_per_image: int = 1

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_patch < 1:
            raise ValueError("lr_patch must be >= 1")
        if self.crops_per_image < 1:
            raise ValueError("crops_per_image must be >= 1")

    @property
    def hr_patch(self) -> int:
        return self.lr_patch * self.scale


@dataclass(frozen=True)
class PatchPair:
    """An LR batch and its co-located HR batch (hr dims = scale * lr dims)."""

    lr: ImageTensor
    hr: ImageTensor

    def __post_init__(self):
        if self.lr.batch != self.hr.batch:
            raise ValueError("lr/hr batch sizes differ")
        if self.hr.height % self.lr.height or self.hr.width % self.lr.width:
            raise ValueError("hr dims must be integer multiples of lr dims")


def _cubic(t: np.ndarray) -> np.ndarray:
    # Keys cubic convolution kernel with a = -0.5.
    at = np.abs(t)
    at2, at3 = at * at, at * at * at
    inner = 1.5 * at3 - 2.5 * at2 + 1.0
    outer = -0.5 * at3 + 2.5 * at2 - 4.0 * at + 2.0
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


def downsample_weights(n_in: int, scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices and normalized weights for 1-D bicubic reduction.

    The kernel is stretched by the scale factor (antialiasing) and taps
    falling outside the signal replicate the edge sample.  Weights are
    normalized to sum to 1 per output pixel.
    """
    n_out = n_in // scale
    s = float(scale)
    n_taps = int(np.ceil(4.0 * s)) + 2
    out = np.arange(n_out, dtype=np.float64)
    centers = (out + 0.5) * s - 0.5
    left = np.floor(centers - 2.0 * s) + 1.0
    idx = left[:, None] + np.arange(n_taps)[None, :]
    weights = _cubic((centers[:, None] - idx) / s) / s
    weights /= weights.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1).astype(np.intp)
    return idx, weights


def _resize_matrix(n_in: int, scale: int) -> np.ndarray:
    idx, weights = downsample_weights(n_in, scale)
    mat = np.zeros((n_in // scale, n_in), dtype=np.float64)
    rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
    np.add.at(mat, (rows, idx.ravel()), weights.ravel())
    return mat


def bicubic_reduce(arr: np.ndarray, scale: int) -> np.ndarray:
    """Separable antialiased bicubic reduction of a (..., H, W) array.

    Pure kernel arithmetic: output values may overshoot the input range
    because the cubic kernel has negative lobes.
    """
    if scale == 1:
        return np.array(arr, dtype=np.float64)
    h, w = arr.shape[-2], arr.shape[-1]
    if h % scale or w % scale:
        raise DataError(f"dims {h}x{w} not divisible by scale {scale}")
    mh = _resize_matrix(h, scale)
    mw = _resize_matrix(w, scale)
    out = np.einsum("oh,...hw->...ow", mh, np.asarray(arr, dtype=np.float64))
    return np.einsum("ow,...hw->...ho", mw, out)


def bicubic_downsample(img: ImageTensor, scale: int) -> ImageTensor:
    """Downsample an image tensor, clamping overshoot back into its range."""
    lo, hi = _RANGE_BOUNDS[img.range_tag]
    reduced = np.clip(bicubic_reduce(img.data, scale), lo, hi)
    return ImageTensor(reduced, img.range_tag, img.colorspace)


def trim_to_multiple(img: ImageTensor, scale: int) -> ImageTensor:
    """Top-left crop to the largest dims divisible by scale."""
    h = (img.height // scale) * scale
    w = (img.width // scale) * scale
    if h < scale or w < scale:
        raise DataError(f"image {img.height}x{img.width} smaller than scale {scale}")
    return ImageTensor(img.data[:, :, :h, :w], img.range_tag, img.colorspace)


@dataclass(frozen=True)
class SourcePair:
    """One training image with its precomputed degraded counterpart."""

    hr: ImageTensor
    lr: ImageTensor
    name: str = ""


def prepare_source(hr_image: ImageTensor, scale: int, name: str = "") -> SourcePair:
    hr = trim_to_multiple(hr_image, scale)
    return SourcePair(hr=hr, lr=bicubic_downsample(hr, scale), name=name)


def sample_patch_pair(
    hr_image: ImageTensor,
    cfg: DatasetConfig,
    rng: np.random.Generator,
    *,
    source: SourcePair | None = None,
) -> PatchPair:
    """Crop a random scale-aligned HR patch and its co-located LR patch.

    The random offset is drawn on the LR grid, which keeps HR offsets
    scale-aligned.  Pass ``source`` to reuse a precomputed degradation.
    """
    if source is None:
        source = prepare_source(hr_image, cfg.scale)
    lr_img, hr_img = source.lr, source.hr
    p = cfg.lr_patch
    if lr_img.height < p or lr_img.width < p:
        raise DataError(
            f"image {hr_img.height}x{hr_img.width} too small for a {cfg.hr_patch} HR patch"
        )
    top = int(rng.integers(0, lr_img.height - p + 1))
    left = int(rng.integers(0, lr_img.width - p + 1))
    s = cfg.scale
    lr = ImageTensor(lr_img.data[:, :, top : top + p, left : left + p], lr_img.range_tag, lr_img.colorspace)
    hr = ImageTensor(
        hr_img.data[:, :, top * s : (top + p) * s, left * s : (left + p) * s],
        hr_img.range_tag,
        hr_img.colorspace,
    )
    return PatchPair(lr=lr, hr=hr)


def augment_flip(pair: PatchPair, rng: np.random.Generator, *, enabled: bool = True) -> PatchPair:
    """Apply one shared horizontal/vertical flip decision to both patches."""
    if not enabled:
        return pair
    flip_h = bool(rng.integers(0, 2))
    flip_v = bool(rng.integers(0, 2))
    return apply_flip(pair, flip_h=flip_h, flip_v=flip_v)


def apply_flip(pair: PatchPair, *, flip_h: bool, flip_v: bool) -> PatchPair:
    axes = []
    if flip_v:
        axes.append(2)
    if flip_h:
        axes.append(3)
    if not axes:
        return pair
    return PatchPair(
        lr=ImageTensor(np.flip(pair.lr.data, axis=axes).copy(), pair.lr.range_tag, pair.lr.colorspace),
        hr=ImageTensor(np.flip(pair.hr.data, axis=axes).copy(), pair.hr.range_tag, pair.hr.colorspace),
    )


def list_images(directory) -> list[str]:
    try:
        names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    except FileNotFoundError:
        raise DataError(f"no such directory: {directory}") from None
    return names


def load_sources(cfg: DatasetConfig) -> list[SourcePair]:
    names = list_images(cfg.hr_dir)
    if not names:
        raise DataError(f"no PNG images in {cfg.hr_dir}")
    return [
        prepare_source(load_image(os.path.join(cfg.hr_dir, n)), cfg.scale, name=n)
        for n in names
    ]


def _stack(pairs: list[PatchPair]) -> PatchPair:
    lr = np.concatenate([p.lr.data for p in pairs], axis=0)
    hr = np.concatenate([p.hr.data for p in pairs], axis=0)
    first = pairs[0]
    return PatchPair(
        lr=ImageTensor(lr, first.lr.range_tag, first.lr.colorspace),
        hr=ImageTensor(hr, first.hr.range_tag, first.hr.colorspace),
    )


def epoch_batches_from_sources(
    sources: list[SourcePair], cfg: DatasetConfig, rng: np.random.Generator
) -> Iterator[PatchPair]:
    """Yield one epoch of batched pairs, sampling images with replacement.

    An epoch is n_images * crops_per_image draws; the trailing partial
    batch is dropped, except that a non-empty dataset always yields at
    least one full batch.
    """
    if not sources:
        raise DataError("empty dataset")
    n_samples = len(sources) * cfg.crops_per_image
    n_batches = max(1, n_samples // cfg.batch_size)
    for _ in range(n_batches):
        pairs = []
        for _ in range(cfg.batch_size):
            src = sources[int(rng.integers(0, len(sources)))]
            pair = sample_patch_pair(src.hr, cfg, rng, source=src)
            pairs.append(augment_flip(pair, rng, enabled=cfg.flip))
        yield _stack(pairs)


def make_epoch_batches(cfg: DatasetConfig, rng: np.random.Generator) -> Iterator[PatchPair]:
    yield from epoch_batches_from_sources(load_sources(cfg), cfg, rng)
