"""Generator/discriminator loss algebra over a pluggable feature extractor.

Per-branch generator objectives:

* distortion branch (single stage):  pixel + w_adv * adv + w_feat * feat,
  with the no-log adversarial term  -mean(D(G(x))).
* perception branch, stage 1:  pixel + w_adv * adv  (log adversarial).
* perception branch, stage 2:  w_adv * adv + w_feat * feat.

The feature extractor is an injected, frozen map; gradients flow through
it to its input.  Identity and a seeded random conv stack keep the math
testable without any pretrained asset; VGG-style weights can be supplied
through an array-container file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .container import read_container, write_container

LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    adv_weight: float = 1e-3
    feat_weight: float = 6e-3

    def __post_init__(self):
        if self.adv_weight < 0 or self.feat_weight < 0:
            raise ValueError("loss weights must be >= 0")


def pixel_loss(truth, pred):
    """Mean squared error over every pixel and channel, averaged over batch."""
    if truth.shape != pred.shape:
        raise ValueError(f"shape mismatch {tuple(truth.shape)} vs {tuple(pred.shape)}")
    return torch.mean((truth - pred) ** 2)


def adv_loss_nolog(d_outputs):
    """Logarithm-free generator adversarial term: -mean(D(G(x)))."""
    return -torch.mean(d_outputs)


def adv_loss_log(d_outputs):
    """-mean(log D(G(x))), clamped below at 1e-12 before the log."""
    return -torch.mean(torch.log(torch.clamp(d_outputs, min=LOG_EPS)))


def perceptual_loss(extractor, truth, pred):
    """MSE between extractor features of truth and prediction."""
    if truth.shape != pred.shape:
        raise ValueError(f"shape mismatch {tuple(truth.shape)} vs {tuple(pred.shape)}")
    return torch.mean((extractor(truth) - extractor(pred)) ** 2)


def discriminator_loss(d_real, d_fake):
    """Binary cross-entropy pushing D(real) to 1 and D(fake) to 0."""
    real_term = -torch.mean(torch.log(torch.clamp(d_real, min=LOG_EPS)))
    fake_term = -torch.mean(torch.log(torch.clamp(1.0 - d_fake, min=LOG_EPS)))
    return real_term + fake_term


def total_loss_distortion(lp, la, lf, w: LossWeights):
    return lp + w.adv_weight * la + w.feat_weight * lf


def stage1_loss(lp, la, w: LossWeights):
    return lp + w.adv_weight * la


def stage2_loss(la, lf, w: LossWeights):
    return w.adv_weight * la + w.feat_weight * lf


class IdentityExtractor(nn.Module):
    """Features are the pixels themselves; perceptual loss == pixel loss."""

    tag = "identity"

    def forward(self, x):
        return x


class SeededRandomExtractor(nn.Module):
    """Small frozen conv stack with seeded random weights.

    tanh activations keep the map smooth everywhere, which matters for
    finite-difference gradient checks.
    """

    tag = "seeded-random"

    def __init__(self, seed: int = 0, widths: tuple[int, ...] = (8, 16), in_channels: int = 3):
        super().__init__()
        rng = np.random.default_rng(seed)
        convs = []
        prev = in_channels
        for width in widths:
            conv = nn.Conv2d(prev, width, 3, padding=1)
            bound = np.sqrt(6.0 / ((prev + width) * 9))
            with torch.no_grad():
                conv.weight.copy_(
                    torch.from_numpy(rng.uniform(-bound, bound, size=tuple(conv.weight.shape))).float()
                )
                conv.bias.zero_()
            convs.append(conv)
            prev = width
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        for conv in self.convs:
            x = torch.tanh(conv(x))
        return x


class ConvStackExtractor(nn.Module):
    """Frozen conv/ReLU stack with optional 2x2 max-pools, loaded from file.

    The asset container holds arrays ``conv{i}.weight`` / ``conv{i}.bias``
    and metadata ``pool_after`` listing conv indices followed by a pool.
    This carries VGG-style pretrained features when such an asset is
    available; tests use tiny stacks written by :func:`save_extractor_asset`.
    """

    def __init__(self, tag: str, weights: list[tuple[np.ndarray, np.ndarray]], pool_after: list[int]):
        super().__init__()
        self.tag = tag
        self.pool_after = set(pool_after)
        convs = []
        for w, b in weights:
            out_ch, in_ch, kh, kw = w.shape
            conv = nn.Conv2d(in_ch, out_ch, (kh, kw), padding=(kh // 2, kw // 2))
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(w).float())
                conv.bias.copy_(torch.from_numpy(b).float())
            convs.append(conv)
        self.convs = nn.ModuleList(convs)
        self.pool = nn.MaxPool2d(2)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = torch.relu(conv(x))
            if i in self.pool_after:
                x = self.pool(x)
        return x


def save_extractor_asset(path, tag: str, weights, pool_after=()) -> None:
    arrays = {}
    for i, (w, b) in enumerate(weights):
        arrays[f"conv{i}.weight"] = np.asarray(w, dtype=np.float32)
        arrays[f"conv{i}.bias"] = np.asarray(b, dtype=np.float32)
    write_container(
        path, "feature-extractor", {"tag": tag, "pool_after": list(pool_after)}, arrays
    )


def load_extractor_asset(path) -> ConvStackExtractor:
    meta, arrays = read_container(path, expected_kind="feature-extractor")
    weights = []
    for i in range(len(arrays) // 2):
        weights.append((arrays[f"conv{i}.weight"], arrays[f"conv{i}.bias"]))
    return ConvStackExtractor(meta["tag"], weights, meta["pool_after"])


def make_extractor(name: str, seed: int = 0, asset_path=None) -> nn.Module:
    """Factory keyed by config value: identity | seeded-random | asset tags."""
    if name == "identity":
        return IdentityExtractor()
    if name == "seeded-random":
        return SeededRandomExtractor(seed=seed)
    if asset_path is not None:
        extractor = load_extractor_asset(asset_path)
        if extractor.tag != name:
            raise ValueError(f"asset {asset_path} carries tag {extractor.tag!r}, wanted {name!r}")
        return extractor
    raise ValueError(f"extractor {name!r} needs a weight asset file")
