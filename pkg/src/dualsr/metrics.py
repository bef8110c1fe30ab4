"""Distortion metrics, the perceptual-index combiner, and tradeoff sweeps.

The evaluation protocol converts to the luma channel, shaves 6 border
pixels, and scores on the 0-255 scale.  RMSE follows the same protocol as
PSNR/SSIM by default; pass ``to_y=False, shave=0`` for full-RGB no-shave
variants.

Reference-free perceptual quality is consumed through a scorer interface:
either precomputed per-image scores from a CSV file, or a built-in proxy
(negated mean absolute Laplacian response, so sharper images score lower
= better) that keeps threshold sweeps runnable without external models.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DataError
from .fusion import FusionParams, fuse
from .imgio import ImageTensor, YCHAN, load_image, rgb_to_y, shave_border, to_eightbit_scale

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


def apply_protocol(
    img: ImageTensor, shave: int = 6, to_y: bool = True, full_range_y: bool = False
) -> ImageTensor:
    """Luma conversion, border shave, 0-255 scale."""
    out = rgb_to_y(img, full_range=full_range_y) if (to_y and img.colorspace != YCHAN) else img
    out = shave_border(out, shave)
    return to_eightbit_scale(out)


def _check_pair(ref: ImageTensor, test: ImageTensor):
    if ref.data.shape != test.data.shape:
        raise ValueError(f"shape mismatch {ref.data.shape} vs {test.data.shape}")


def rmse(ref: ImageTensor, test: ImageTensor) -> float:
    """Root-mean-square difference; callers supply protocol-scaled inputs."""
    _check_pair(ref, test)
    return float(np.sqrt(np.mean((ref.data - test.data) ** 2)))


def psnr(ref: ImageTensor, test: ImageTensor) -> float:
    """10*log10(255^2 / MSE) in dB; identical inputs give +inf."""
    _check_pair(ref, test)
    mse = float(np.mean((ref.data - test.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Separable valid correlation; windows never cross the image border.
    rows = sliding_window_view(plane, len(kernel), axis=0) @ kernel
    return sliding_window_view(rows, len(kernel), axis=1) @ kernel


def ssim(ref: ImageTensor, test: ImageTensor) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), 0-255 constants.

    Single-channel inputs; batches are averaged.  Needs at least one full
    window after any shaving.
    """
    _check_pair(ref, test)
    if ref.data.shape[1] != 1:
        raise ValueError("ssim expects single-channel (luma) input")
    if ref.height < SSIM_WINDOW or ref.width < SSIM_WINDOW:
        raise DataError(
            f"image {ref.height}x{ref.width} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    kernel = _gaussian_window()
    values = []
    for x, y in zip(ref.data[:, 0], test.data[:, 0]):
        mu_x = _windowed_mean(x, kernel)
        mu_y = _windowed_mean(y, kernel)
        var_x = _windowed_mean(x * x, kernel) - mu_x * mu_x
        var_y = _windowed_mean(y * y, kernel) - mu_y * mu_y
        cov = _windowed_mean(x * y, kernel) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def metric_triple(
    ref: ImageTensor,
    test: ImageTensor,
    shave: int = 6,
    rgb_rmse: bool = False,
    full_range_y: bool = False,
) -> tuple[float, float, float]:
    """(rmse, psnr, ssim) under the evaluation protocol.

    PSNR and SSIM always use the luma + shave protocol; RMSE follows it
    too unless ``rgb_rmse`` selects the full-RGB no-shave variant.
    """
    a = apply_protocol(ref, shave=shave, full_range_y=full_range_y)
    b = apply_protocol(test, shave=shave, full_range_y=full_range_y)
    if rgb_rmse:
        r = rmse(apply_protocol(ref, shave=0, to_y=False), apply_protocol(test, shave=0, to_y=False))
    else:
        r = rmse(a, b)
    return r, psnr(a, b), ssim(a, b)


def perceptual_index(ma: float, niqe: float) -> float:
    """0.5 * ((10 - ma) + niqe); lower means better perceived quality."""
    return 0.5 * ((10.0 - ma) + niqe)


class FileScorer:
    """Per-image scores read from a CSV of (image, score) rows."""

    polarity = "lower-better"

    def __init__(self, path):
        self.scores: dict[str, float] = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] == "image":
                    continue
                self.scores[row[0]] = float(row[1])

    def score(self, img: ImageTensor | None = None, name: str | None = None) -> float:
        if name is None or name not in self.scores:
            raise DataError(f"no precomputed score for image {name!r}")
        return self.scores[name]


class SharpnessProxyScorer:
    """Negated mean |Laplacian| on the luma plane; lower = sharper = better.

    A stand-in for learned no-reference quality models so sweeps run
    self-contained.  Deterministic and reference-free.
    """

    polarity = "lower-better"

    _KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

    def score(self, img: ImageTensor, name: str | None = None) -> float:
        plane = to_eightbit_scale(img if img.colorspace == YCHAN else rgb_to_y(img)).data
        responses = []
        for p in plane[:, 0]:
            windows = sliding_window_view(p, (3, 3))
            responses.append(np.mean(np.abs(np.einsum("ijkl,kl->ij", windows, self._KERNEL))))
        return -float(np.mean(responses))


@dataclass(frozen=True)
class MetricRecord:
    image: str
    rmse: float
    psnr: float
    ssim: float
    perceptual: float | None = None


@dataclass(frozen=True)
class MetricReport:
    records: tuple[MetricRecord, ...]

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([r.rmse for r in self.records]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.records]))

    @property
    def psnr_inf_count(self) -> int:
        return sum(1 for r in self.records if math.isinf(r.psnr))

    @property
    def mean_psnr(self) -> float:
        """Mean over finite entries; +inf sentinels are excluded (counted)."""
        finite = [r.psnr for r in self.records if math.isfinite(r.psnr)]
        return float(np.mean(finite)) if finite else math.inf

    @property
    def mean_perceptual(self) -> float | None:
        scores = [r.perceptual for r in self.records if r.perceptual is not None]
        return float(np.mean(scores)) if scores else None


def matched_names(dir_a, dir_b) -> list[str]:
    names_a = sorted(n for n in os.listdir(dir_a) if n.lower().endswith(".png"))
    names_b = sorted(n for n in os.listdir(dir_b) if n.lower().endswith(".png"))
    if names_a != names_b:
        only_a = sorted(set(names_a) - set(names_b))
        only_b = sorted(set(names_b) - set(names_a))
        raise DataError(f"unmatched files: only in {dir_a}: {only_a}; only in {dir_b}: {only_b}")
    if not names_a:
        raise DataError(f"no PNG images in {dir_a}")
    return names_a


def evaluate_dir(
    sr_dir, hr_dir, scorer=None, shave: int = 6, rgb_rmse: bool = False,
    full_range_y: bool = False,
) -> MetricReport:
    """Per-image metrics over two directories matched by filename."""
    records = []
    for name in matched_names(sr_dir, hr_dir):
        sr = load_image(os.path.join(sr_dir, name))
        hr = load_image(os.path.join(hr_dir, name))
        if sr.data.shape != hr.data.shape:
            raise DataError(
                f"{name}: size mismatch {sr.data.shape[2:]} vs {hr.data.shape[2:]}"
            )
        r, p, s = metric_triple(hr, sr, shave=shave, rgb_rmse=rgb_rmse, full_range_y=full_range_y)
        perc = scorer.score(sr, name=name) if scorer is not None else None
        records.append(MetricRecord(image=name, rmse=r, psnr=p, ssim=s, perceptual=perc))
    return MetricReport(records=tuple(records))


def write_report_csv(report: MetricReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "rmse", "psnr", "ssim", "perceptual"])
        for r in report.records:
            writer.writerow(
                [r.image, repr(r.rmse), repr(r.psnr), repr(r.ssim),
                 "" if r.perceptual is None else repr(r.perceptual)]
            )


def read_report_csv(path) -> MetricReport:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                MetricRecord(
                    image=row["image"],
                    rmse=float(row["rmse"]),
                    psnr=float(row["psnr"]),
                    ssim=float(row["ssim"]),
                    perceptual=float(row["perceptual"]) if row["perceptual"] else None,
                )
            )
    return MetricReport(records=tuple(records))


@dataclass(frozen=True)
class PlanePoint:
    threshold: float
    perceptual: float
    rmse: float


def plane_sweep(
    perception: ImageTensor,
    distortion: ImageTensor,
    grid,
    scorer,
    hr_ref: ImageTensor | None = None,
    shave: int = 6,
) -> list[PlanePoint]:
    """Trace the perception-distortion curve over ascending thresholds.

    RMSE is measured against ``hr_ref`` under the protocol when given;
    without a reference it falls back to RMSE against the distortion
    input (the quantity that shrinks as the threshold grows).
    """
    grid = [float(t) for t in grid]
    if any(t < 0 for t in grid):
        raise ValueError("thresholds must be >= 0")
    if grid != sorted(grid):
        raise ValueError("threshold grid must be ascending")
    points = []
    for t in grid:
        fused = fuse(perception, distortion, FusionParams(threshold=t))
        if hr_ref is not None:
            r = rmse(apply_protocol(hr_ref, shave=shave), apply_protocol(fused, shave=shave))
        else:
            r = rmse(to_eightbit_scale(distortion), fused)
        points.append(PlanePoint(threshold=t, perceptual=scorer.score(fused), rmse=r))
    return points


def write_sweep_csv(points: list[PlanePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "perceptual", "rmse"])
        for pt in points:
            writer.writerow([repr(pt.threshold), repr(pt.perceptual), repr(pt.rmse)])
