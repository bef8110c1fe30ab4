import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from dualsr.exceptions import DataError, ImageFormatError
from dualsr.imgio import (
    EIGHTBIT,
    UNIT,
    YCHAN,
    ImageTensor,
    load_image,
    quantize_codes,
    quantize_to_8bit,
    rgb_to_y,
    save_image,
    shave_border,
    to_unit,
)

from conftest import random_rgb


class TestImageTensor:
    def test_channel_count_enforced(self):
        with pytest.raises(ValueError, match="channels"):
            ImageTensor(np.zeros((1, 1, 4, 4)), UNIT, "rgb")
        with pytest.raises(ValueError, match="channels"):
            ImageTensor(np.zeros((1, 3, 4, 4)), UNIT, YCHAN)

    def test_range_enforced(self):
        with pytest.raises(ValueError, match="range"):
            ImageTensor(np.full((1, 3, 2, 2), 1.5), UNIT)
        with pytest.raises(ValueError, match="range"):
            ImageTensor(np.full((1, 3, 2, 2), -0.1), UNIT)

    def test_non_finite_rejected(self):
        data = np.zeros((1, 3, 2, 2))
        data[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            ImageTensor(data)


class TestPngRoundTrip:
    def test_white_png_loads_as_ones(self, tmp_path):
        path = tmp_path / "white.png"
        Image.fromarray(np.full((2, 2, 3), 255, dtype=np.uint8)).save(path)
        img = load_image(path)
        assert img.data.shape == (1, 3, 2, 2)
        assert np.all(img.data == 1.0)

    def test_black_png_loads_as_zeros(self, tmp_path):
        path = tmp_path / "black.png"
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(path)
        assert np.all(load_image(path).data == 0.0)

    def test_half_gray_saves_as_code_128(self, tmp_path):
        path = tmp_path / "gray.png"
        save_image(ImageTensor(np.full((1, 3, 4, 4), 0.5)), path)
        codes = np.asarray(Image.open(path))
        assert np.all(codes == 128)

    def test_save_load_identity_on_quantized(self, rng, tmp_path):
        img = random_rgb(rng, 4, 4)
        path = tmp_path / "x.png"
        save_image(img, path)
        reloaded = load_image(path)
        expected = to_unit(quantize_to_8bit(img))
        np.testing.assert_array_equal(reloaded.data, expected.data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_non_rgb_rejected(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
        with pytest.raises(ImageFormatError, match="RGB"):
            load_image(path)

    def test_16bit_rejected(self, tmp_path):
        path = tmp_path / "deep.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(path)
        with pytest.raises(ImageFormatError, match="bit depth"):
            load_image(path)

    def test_non_png_rejected(self, tmp_path):
        path = tmp_path / "x.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path, format="BMP")
        with pytest.raises(ImageFormatError, match="PNG"):
            load_image(path)

    def test_saving_luma_tensor_is_an_error(self, tmp_path):
        img = ImageTensor(np.zeros((1, 1, 4, 4)), UNIT, YCHAN)
        with pytest.raises(ImageFormatError):
            save_image(img, tmp_path / "y.png")


class TestLumaConversion:
    def test_black(self):
        img = ImageTensor(np.zeros((1, 3, 2, 2)))
        np.testing.assert_allclose(rgb_to_y(img).data, 16 / 255, atol=1e-12)

    def test_white(self):
        img = ImageTensor(np.ones((1, 3, 2, 2)))
        np.testing.assert_allclose(rgb_to_y(img).data, 235 / 255, atol=1e-12)

    def test_pure_red(self):
        data = np.zeros((1, 3, 2, 2))
        data[:, 0] = 1.0
        np.testing.assert_allclose(rgb_to_y(ImageTensor(data)).data, 81.481 / 255, atol=1e-12)

    def test_output_always_in_studio_swing(self, rng):
        img = random_rgb(rng, 7, 9)
        y = rgb_to_y(img)
        assert y.colorspace == YCHAN
        assert y.data.min() >= 16 / 255 - 1e-12
        assert y.data.max() <= 235 / 255 + 1e-12

    def test_rejects_luma_input(self):
        img = ImageTensor(np.zeros((1, 1, 2, 2)), UNIT, YCHAN)
        with pytest.raises(ValueError):
            rgb_to_y(img)

    def test_full_range_variant(self):
        white = ImageTensor(np.ones((1, 3, 2, 2)))
        black = ImageTensor(np.zeros((1, 3, 2, 2)))
        np.testing.assert_allclose(rgb_to_y(white, full_range=True).data, 1.0, atol=1e-12)
        np.testing.assert_allclose(rgb_to_y(black, full_range=True).data, 0.0, atol=1e-12)


class TestShaveBorder:
    def test_96_minus_6_each_side(self, rng):
        img = random_rgb(rng, 96, 96)
        out = shave_border(img, 6)
        assert (out.height, out.width) == (84, 84)
        np.testing.assert_array_equal(out.data, img.data[:, :, 6:-6, 6:-6])

    def test_zero_is_identity(self, rng):
        img = random_rgb(rng, 5, 5)
        assert shave_border(img, 0) is img

    def test_empty_crop_is_an_error(self, rng):
        img = random_rgb(rng, 12, 12)
        with pytest.raises(DataError):
            shave_border(img, 6)

    @given(a=st.integers(0, 4), b=st.integers(0, 4))
    @settings(max_examples=25, deadline=None)
    def test_composition(self, a, b):
        img = ImageTensor(np.arange(3 * 24 * 24, dtype=float).reshape(1, 3, 24, 24) / (3 * 24 * 24))
        lhs = shave_border(shave_border(img, a), b)
        rhs = shave_border(img, a + b)
        np.testing.assert_array_equal(lhs.data, rhs.data)


class TestQuantize:
    def test_half_rounds_up(self):
        img = ImageTensor(np.full((1, 1, 1, 1), 0.5), UNIT, YCHAN)
        assert quantize_to_8bit(img).data.item() == 128.0

    def test_clamps_overshoot(self):
        # out-of-range raw values cannot live inside an ImageTensor
        np.testing.assert_array_equal(quantize_codes(np.array([1.2, -0.3])), [255.0, 0.0])

    def test_idempotent_on_eightbit(self, rng):
        img = quantize_to_8bit(random_rgb(rng, 6, 6))
        again = quantize_to_8bit(img)
        np.testing.assert_array_equal(img.data, again.data)

    @given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_quantization_bound(self, value):
        img = ImageTensor(np.full((1, 1, 1, 1), value), UNIT, YCHAN)
        back = to_unit(quantize_to_8bit(img)).data.item()
        assert abs(back - value) <= 1 / 510 + 1e-15

    def test_round_half_away_from_zero_on_codes(self):
        # 127.5 / 255 is not representable exactly; feed the code scale directly
        img = ImageTensor(np.array([[[[127.5, 2.5, 0.49]]]]), EIGHTBIT, YCHAN)
        np.testing.assert_array_equal(quantize_to_8bit(img).data, [[[[128.0, 3.0, 0.0]]]])
