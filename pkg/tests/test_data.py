import numpy as np
import pytest

from dualsr.data import (
    DatasetConfig,
    apply_flip,
    augment_flip,
    bicubic_downsample,
    bicubic_reduce,
    epoch_batches_from_sources,
    load_sources,
    make_epoch_batches,
    prepare_source,
    sample_patch_pair,
    trim_to_multiple,
)
from dualsr.exceptions import DataError
from dualsr.imgio import ImageTensor, save_image

from conftest import random_rgb


def reference_cubic(t: float) -> float:
    t = abs(t)
    if t <= 1.0:
        return 1.5 * t**3 - 2.5 * t**2 + 1.0
    if t < 2.0:
        return -0.5 * t**3 + 2.5 * t**2 - 4.0 * t + 2.0
    return 0.0


def reference_bicubic_reduce(plane: np.ndarray, scale: int) -> np.ndarray:
    """Dense two-loop evaluation of the antialiased cubic kernel."""
    h, w = plane.shape
    out = np.zeros((h // scale, w // scale))
    taps = int(np.ceil(4 * scale)) + 2
    for oy in range(out.shape[0]):
        for ox in range(out.shape[1]):
            cy = (oy + 0.5) * scale - 0.5
            cx = (ox + 0.5) * scale - 0.5
            top = int(np.floor(cy - 2 * scale)) + 1
            left = int(np.floor(cx - 2 * scale)) + 1
            wy = np.array([reference_cubic((cy - (top + j)) / scale) / scale for j in range(taps)])
            wx = np.array([reference_cubic((cx - (left + i)) / scale) / scale for i in range(taps)])
            wy /= wy.sum()
            wx /= wx.sum()
            acc = 0.0
            for j in range(taps):
                for i in range(taps):
                    yy = min(max(top + j, 0), h - 1)
                    xx = min(max(left + i, 0), w - 1)
                    acc += wy[j] * wx[i] * plane[yy, xx]
            out[oy, ox] = acc
    return out


class TestBicubic:
    def test_constant_is_preserved(self):
        img = ImageTensor(np.full((1, 3, 32, 32), 0.713))
        out = bicubic_downsample(img, 4)
        np.testing.assert_allclose(out.data, 0.713, atol=1e-12)

    def test_patch_geometry(self, rng):
        out = bicubic_downsample(random_rgb(rng, 96, 96), 4)
        assert (out.height, out.width) == (24, 24)

    def test_matches_dense_oracle_on_impulse(self):
        plane = np.zeros((16, 16))
        plane[8, 8] = 1.0
        np.testing.assert_allclose(
            bicubic_reduce(plane, 4), reference_bicubic_reduce(plane, 4), atol=1e-12
        )

    def test_matches_dense_oracle_on_random(self, rng):
        plane = rng.uniform(size=(12, 24))
        for scale in (2, 3, 4):
            np.testing.assert_allclose(
                bicubic_reduce(plane, scale), reference_bicubic_reduce(plane, scale), atol=1e-12
            )

    def test_non_divisible_dims_rejected(self, rng):
        with pytest.raises(DataError):
            bicubic_reduce(rng.uniform(size=(10, 10)), 4)

    def test_output_clamped_into_declared_range(self):
        # a hard step overshoots under the cubic kernel; the wrapped op clamps
        plane = np.zeros((1, 3, 16, 16))
        plane[..., 8:, :] = 1.0
        out = bicubic_downsample(ImageTensor(plane), 4)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestPatchSampling:
    def test_single_offset_when_exact_size(self, rng):
        img = random_rgb(rng, 96, 96)
        cfg = DatasetConfig(scale=4, lr_patch=24, seed=0)
        pair = sample_patch_pair(img, cfg, np.random.default_rng(0))
        source = prepare_source(img, 4)
        np.testing.assert_array_equal(pair.hr.data, source.hr.data)
        np.testing.assert_array_equal(pair.lr.data, source.lr.data)

    def test_same_seed_same_pair(self, rng):
        img = random_rgb(rng, 128, 160)
        cfg = DatasetConfig(scale=4, lr_patch=8, seed=0)
        a = sample_patch_pair(img, cfg, np.random.default_rng(11))
        b = sample_patch_pair(img, cfg, np.random.default_rng(11))
        np.testing.assert_array_equal(a.lr.data, b.lr.data)
        np.testing.assert_array_equal(a.hr.data, b.hr.data)

    def test_lr_patch_is_colocated_crop_of_downsampled(self, rng):
        img = random_rgb(rng, 128, 128)
        cfg = DatasetConfig(scale=4, lr_patch=8, seed=0)
        source = prepare_source(img, 4)
        sample_rng = np.random.default_rng(3)
        pair = sample_patch_pair(img, cfg, sample_rng, source=source)
        # recover the offset by re-drawing with an identical generator
        redraw = np.random.default_rng(3)
        top = int(redraw.integers(0, source.lr.height - 8 + 1))
        left = int(redraw.integers(0, source.lr.width - 8 + 1))
        np.testing.assert_array_equal(
            pair.lr.data, source.lr.data[:, :, top : top + 8, left : left + 8]
        )
        np.testing.assert_array_equal(
            pair.hr.data,
            source.hr.data[:, :, 4 * top : 4 * (top + 8), 4 * left : 4 * (left + 8)],
        )

    def test_too_small_image_rejected(self, rng):
        img = random_rgb(rng, 64, 64)
        cfg = DatasetConfig(scale=4, lr_patch=24, seed=0)
        with pytest.raises(DataError):
            sample_patch_pair(img, cfg, np.random.default_rng(0))

    def test_shapes_satisfy_scale_relation(self, rng):
        img = random_rgb(rng, 96, 128)
        cfg = DatasetConfig(scale=4, lr_patch=8, seed=0)
        pair = sample_patch_pair(img, cfg, np.random.default_rng(0))
        assert pair.hr.height == 4 * pair.lr.height
        assert pair.hr.width == 4 * pair.lr.width


class TestFlip:
    def test_disabled_is_identity(self, rng):
        img = random_rgb(rng, 96, 96)
        cfg = DatasetConfig(scale=4, lr_patch=24, seed=0)
        pair = sample_patch_pair(img, cfg, np.random.default_rng(0))
        assert augment_flip(pair, np.random.default_rng(0), enabled=False) is pair

    def test_double_application_is_identity(self, rng):
        img = random_rgb(rng, 96, 96)
        cfg = DatasetConfig(scale=4, lr_patch=24, seed=0)
        pair = sample_patch_pair(img, cfg, np.random.default_rng(0))
        once = apply_flip(pair, flip_h=True, flip_v=True)
        twice = apply_flip(once, flip_h=True, flip_v=True)
        np.testing.assert_array_equal(twice.lr.data, pair.lr.data)
        np.testing.assert_array_equal(twice.hr.data, pair.hr.data)

    def test_flip_commutes_with_downsampling(self, rng):
        hr = random_rgb(rng, 96, 96)
        flipped_hr = ImageTensor(np.flip(hr.data, axis=(2, 3)).copy())
        a = bicubic_downsample(flipped_hr, 4)
        b = ImageTensor(np.flip(bicubic_downsample(hr, 4).data, axis=(2, 3)).copy())
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_same_decision_applied_to_both(self, rng):
        img = random_rgb(rng, 96, 96)
        cfg = DatasetConfig(scale=4, lr_patch=24, seed=0)
        pair = sample_patch_pair(img, cfg, np.random.default_rng(0))
        flip_rng = np.random.default_rng(1)
        flipped = augment_flip(pair, flip_rng)
        redraw = np.random.default_rng(1)
        flip_h, flip_v = bool(redraw.integers(0, 2)), bool(redraw.integers(0, 2))
        expected = apply_flip(pair, flip_h=flip_h, flip_v=flip_v)
        np.testing.assert_array_equal(flipped.lr.data, expected.lr.data)
        np.testing.assert_array_equal(flipped.hr.data, expected.hr.data)


class TestEpochBatches:
    def _sources(self, rng, n=2):
        return [
            prepare_source(random_rgb(rng, 128, 128), 4, name=f"{i}.png") for i in range(n)
        ]

    def test_batch_shapes(self, rng):
        sources = self._sources(rng)
        cfg = DatasetConfig(scale=4, lr_patch=24, batch_size=16, seed=0, crops_per_image=16)
        batches = list(epoch_batches_from_sources(sources, cfg, np.random.default_rng(0)))
        assert len(batches) == 2
        assert batches[0].lr.data.shape == (16, 3, 24, 24)
        assert batches[0].hr.data.shape == (16, 3, 96, 96)

    def test_single_image_still_yields_a_full_batch(self, rng):
        sources = self._sources(rng, n=1)
        cfg = DatasetConfig(scale=4, lr_patch=24, batch_size=16, seed=0)
        batches = list(epoch_batches_from_sources(sources, cfg, np.random.default_rng(0)))
        assert len(batches) == 1
        assert batches[0].lr.batch == 16

    def test_same_seed_identical_stream(self, rng):
        sources = self._sources(rng)
        cfg = DatasetConfig(scale=4, lr_patch=8, batch_size=4, seed=0, crops_per_image=8)
        a = list(epoch_batches_from_sources(sources, cfg, np.random.default_rng(9)))
        b = list(epoch_batches_from_sources(sources, cfg, np.random.default_rng(9)))
        assert len(a) == len(b) == 4
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.lr.data, pb.lr.data)
            np.testing.assert_array_equal(pa.hr.data, pb.hr.data)

    def test_empty_dataset_rejected(self):
        cfg = DatasetConfig(scale=4, lr_patch=8, batch_size=4, seed=0)
        with pytest.raises(DataError):
            list(epoch_batches_from_sources([], cfg, np.random.default_rng(0)))

    def test_from_directory(self, rng, tmp_path):
        for i in range(2):
            save_image(random_rgb(rng, 64, 64), tmp_path / f"im{i}.png")
        cfg = DatasetConfig(
            hr_dir=str(tmp_path), scale=4, lr_patch=8, batch_size=2, seed=0, crops_per_image=2
        )
        batches = list(make_epoch_batches(cfg, np.random.default_rng(0)))
        assert len(batches) == 2
        assert batches[0].lr.data.shape == (2, 3, 8, 8)

    def test_missing_directory(self):
        cfg = DatasetConfig(hr_dir="/nonexistent-dir", scale=4, lr_patch=8, seed=0)
        with pytest.raises(DataError):
            load_sources(cfg)


class TestTrim:
    def test_trims_to_multiple(self, rng):
        img = random_rgb(rng, 67, 70)
        out = trim_to_multiple(img, 4)
        assert (out.height, out.width) == (64, 68)

    def test_too_small_rejected(self, rng):
        with pytest.raises(DataError):
            trim_to_multiple(random_rgb(rng, 3, 8), 4)
