import numpy as np
import pytest

from dualsr.imgio import ImageTensor


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_rgb(rng, height, width, batch=1):
    return ImageTensor(rng.uniform(size=(batch, 3, height, width)))


def toy_image(seed: int, size: int = 48) -> ImageTensor:
    """Smooth procedural RGB test image: sums of random sinusoidal gratings."""
    r = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    chans = []
    for _ in range(3):
        img = 0.5
        for _ in range(4):
            fx, fy = r.integers(1, 6, size=2)
            phase = r.uniform(0, 2 * np.pi)
            img = img + 0.18 * np.sin(2 * np.pi * (fx * x + fy * y) + phase)
        chans.append(img)
    return ImageTensor(np.clip(np.stack(chans), 0, 1)[None])
