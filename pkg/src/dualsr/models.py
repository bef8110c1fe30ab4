"""Generator and discriminator architectures.

Two generator families, both mapping (B,3,H,W) -> (B,3,4H,4W) via two
sub-pixel x2 stages and both free of batch normalization:

* :class:`MemoryResidualGenerator` - the distortion-oriented branch.
  Stacks of gated memory blocks: four chained ResBlocks whose outputs are
  concatenated and reduced by a 1x1 gate convolution, plus a block skip.
* :class:`ResidualGenerator` - the perception-oriented branch.  A 9x9
  head, a plain 16-ResBlock trunk with a long skip, and a 9x9 tail.

The discriminator follows the classic 8-conv design (widths 64..512,
strides alternating 1/2, LeakyReLU 0.2) with batch norm switchable per
branch.  Training-time forwards are unclamped; :func:`super_resolve`
clamps to [0,1] for inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .imgio import RGB, UNIT, ImageTensor

RESBLOCKS_PER_MEMORY_BLOCK = 4
UPSCALE = 4  # realized as two x2 sub-pixel stages


@dataclass(frozen=True)
class MemoryGeneratorConfig:
    n_features: int = 64
    n_memory_blocks: int = 4  # the replication setup uses 7

    def __post_init__(self):
        if self.n_memory_blocks < 1:
            raise ValueError("need at least one memory block")


@dataclass(frozen=True)
class ResidualGeneratorConfig:
    n_features: int = 64
    n_resblocks: int = 16
    outer_kernel: int = 9
    inner_kernel: int = 3

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise ValueError("need at least one resblock")


@dataclass(frozen=True)
class DiscriminatorConfig:
    use_batchnorm: bool = True
    base_features: int = 64
    input_size: int = 96
    dense_features: int = 1024

    def __post_init__(self):
        if self.input_size < 16:
            raise ValueError("discriminator input must be at least 16x16")


class ResidualBlock(nn.Module):
    """conv3x3 -> PReLU -> conv3x3 with an identity skip, no batch norm."""

    def __init__(self, n_features: int, kernel: int = 3):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv2d(n_features, n_features, kernel, padding=pad)
        self.act = nn.PReLU()
        self.conv2 = nn.Conv2d(n_features, n_features, kernel, padding=pad)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class GateUnit(nn.Module):
    """1x1 reduction over concatenated group features, plus the block input."""

    def __init__(self, n_features: int, n_groups: int = RESBLOCKS_PER_MEMORY_BLOCK):
        super().__init__()
        self.n_groups = n_groups
        self.n_features = n_features
        self.gate = nn.Conv2d(n_groups * n_features, n_features, 1)

    def forward(self, groups, block_input):
        if len(groups) != self.n_groups:
            raise ValueError(f"expected {self.n_groups} feature groups, got {len(groups)}")
        for g in groups:
            if g.shape[1] != self.n_features:
                raise ValueError(f"group has {g.shape[1]} channels, expected {self.n_features}")
        return self.gate(torch.cat(groups, dim=1)) + block_input


class MemoryResidualBlock(nn.Module):
    """Four chained ResBlocks gated into one output with a block-level skip."""

    def __init__(self, n_features: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            ResidualBlock(n_features) for _ in range(RESBLOCKS_PER_MEMORY_BLOCK)
        )
        self.gate = GateUnit(n_features)

    def forward(self, x):
        groups = []
        h = x
        for block in self.blocks:
            h = block(h)
            groups.append(h)
        return self.gate(groups, x)


class SubPixelUpsample(nn.Module):
    """conv3x3 to 4n channels, pixel-shuffle (r=2), PReLU."""

    def __init__(self, n_features: int):
        super().__init__()
        self.conv = nn.Conv2d(n_features, 4 * n_features, 3, padding=1)
        self.shuffle = nn.PixelShuffle(2)
        self.act = nn.PReLU()

    def forward(self, x):
        return self.act(self.shuffle(self.conv(x)))


class MemoryResidualGenerator(nn.Module):
    def __init__(self, cfg: MemoryGeneratorConfig = MemoryGeneratorConfig()):
        super().__init__()
        self.cfg = cfg
        n = cfg.n_features
        self.head = nn.Conv2d(3, n, 3, padding=1)
        self.head_act = nn.PReLU()
        self.body = nn.ModuleList(MemoryResidualBlock(n) for _ in range(cfg.n_memory_blocks))
        self.up1 = SubPixelUpsample(n)
        self.up2 = SubPixelUpsample(n)
        self.tail = nn.Conv2d(n, 3, 3, padding=1)

    def forward(self, x):
        h = self.head_act(self.head(x))
        for block in self.body:
            h = block(h)
        return self.tail(self.up2(self.up1(h)))


class ResidualGenerator(nn.Module):
    def __init__(self, cfg: ResidualGeneratorConfig = ResidualGeneratorConfig()):
        super().__init__()
        self.cfg = cfg
        n, ko, ki = cfg.n_features, cfg.outer_kernel, cfg.inner_kernel
        self.head = nn.Conv2d(3, n, ko, padding=ko // 2)
        self.head_act = nn.PReLU()
        self.trunk = nn.ModuleList(ResidualBlock(n, ki) for _ in range(cfg.n_resblocks))
        self.trunk_tail = nn.Conv2d(n, n, ki, padding=ki // 2)
        self.up1 = SubPixelUpsample(n)
        self.up2 = SubPixelUpsample(n)
        self.tail = nn.Conv2d(n, 3, ko, padding=ko // 2)

    def forward(self, x):
        shallow = self.head_act(self.head(x))
        h = shallow
        for block in self.trunk:
            h = block(h)
        h = shallow + self.trunk_tail(h)  # long residual around the trunk
        return self.tail(self.up2(self.up1(h)))


class Discriminator(nn.Module):
    """Eight 3x3 convs (strides 1/2 alternating) and a two-layer dense head.

    Output is a per-image probability, strictly inside (0,1).
    """

    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        b = cfg.base_features
        widths = [b, b, 2 * b, 2 * b, 4 * b, 4 * b, 8 * b, 8 * b]
        layers = []
        in_ch = 3
        size = cfg.input_size
        for i, out_ch in enumerate(widths):
            stride = 1 if i % 2 == 0 else 2
            layers.append(nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1))
            if cfg.use_batchnorm and i > 0:
                layers.append(nn.BatchNorm2d(out_ch))
            layers.append(nn.LeakyReLU(0.2))
            if stride == 2:
                size = (size - 1) // 2 + 1
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        self._flat = widths[-1] * size * size
        self.dense1 = nn.Linear(self._flat, cfg.dense_features)
        self.dense_act = nn.LeakyReLU(0.2)
        self.dense2 = nn.Linear(cfg.dense_features, 1)

    def forward(self, x):
        if x.shape[-2:] != (self.cfg.input_size, self.cfg.input_size):
            raise ValueError(
                f"discriminator was built for {self.cfg.input_size}x{self.cfg.input_size} input,"
                f" got {tuple(x.shape[-2:])}"
            )
        h = self.features(x).flatten(1)
        h = self.dense2(self.dense_act(self.dense1(h)))
        return torch.sigmoid(h).squeeze(1)


def init_parameters(module: nn.Module, rng: np.random.Generator | int) -> nn.Module:
    """Deterministic init: Xavier-uniform weights, zero biases, 0.25 slopes.

    Randomness comes from the supplied numpy generator, so the result is
    independent of torch's global RNG state.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                fan_out = m.out_channels * m.kernel_size[0] * m.kernel_size[1]
            elif isinstance(m, nn.Linear):
                fan_in, fan_out = m.in_features, m.out_features
            else:
                if isinstance(m, nn.PReLU):
                    m.weight.fill_(0.25)
                elif isinstance(m, nn.BatchNorm2d):
                    m.weight.fill_(1.0)
                    m.bias.zero_()
                    m.reset_running_stats()
                continue
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            sample = rng.uniform(-bound, bound, size=tuple(m.weight.shape))
            m.weight.copy_(torch.from_numpy(sample).to(m.weight.dtype))
            if m.bias is not None:
                m.bias.zero_()
    return module


def zero_parameters(module: nn.Module) -> nn.Module:
    """Zero every learnable parameter (PReLU slopes included); test helper."""
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module


def contains_batchnorm(module: nn.Module) -> bool:
    return any(isinstance(m, nn.modules.batchnorm._BatchNorm) for m in module.modules())


def super_resolve(generator: nn.Module, img: ImageTensor) -> ImageTensor:
    """Run a generator on a unit-range RGB tensor, clamped for inference."""
    if img.colorspace != RGB or img.range_tag != UNIT:
        raise ValueError("generators expect unit-range RGB input")
    dtype = next(generator.parameters()).dtype
    with torch.no_grad():
        out = generator(torch.from_numpy(img.data).to(dtype))
    arr = np.clip(out.double().numpy(), 0.0, 1.0)
    return ImageTensor(arr, UNIT, RGB)
