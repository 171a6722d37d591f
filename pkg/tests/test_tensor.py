import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keepaugment.tensor import (
    ContractError,
    Rect,
    RngStream,
    check_image,
    cut_random,
    cut_zero,
    paste_region,
    resize_bicubic,
    upscale_nearest,
)


def naive_cut(image, rect):
    out = image.copy()
    for i in range(image.shape[0]):
        for j in range(image.shape[1]):
            if rect.top <= i < rect.top + rect.height and rect.left <= j < rect.left + rect.width:
                out[i, j, :] = 0.0
    return out


def naive_paste(source, target, rect):
    out = np.empty_like(target)
    for i in range(target.shape[0]):
        for j in range(target.shape[1]):
            inside = rect.top <= i < rect.top + rect.height and rect.left <= j < rect.left + rect.width
            out[i, j] = source[i, j] if inside else target[i, j]
    return out


def reference_bicubic(image, out_h, out_w):
    # Scalar Catmull-Rom evaluation, one output pixel at a time.
    def kernel(t):
        t = abs(t)
        if t <= 1:
            return 1.5 * t**3 - 2.5 * t**2 + 1
        if t < 2:
            return -0.5 * t**3 + 2.5 * t**2 - 4 * t + 2
        return 0.0

    H, W, C = image.shape
    out = np.zeros((out_h, out_w, C))
    for i in range(out_h):
        y = (i + 0.5) * H / out_h - 0.5
        for j in range(out_w):
            x = (j + 0.5) * W / out_w - 0.5
            acc = np.zeros(C)
            for yy in range(int(np.floor(y)) - 1, int(np.floor(y)) + 3):
                for xx in range(int(np.floor(x)) - 1, int(np.floor(x)) + 3):
                    w = kernel(y - yy) * kernel(x - xx)
                    acc += w * image[min(max(yy, 0), H - 1), min(max(xx, 0), W - 1)]
            out[i, j] = acc
    return np.clip(out, 0, 1)


class TestRect:
    def test_rejects_empty(self):
        with pytest.raises(ContractError):
            Rect(0, 0, 0, 2)

    def test_mask_matches_definition(self):
        m = Rect(1, 2, 2, 3).mask((5, 6))
        expected = np.zeros((5, 6), bool)
        expected[1:3, 2:5] = True
        np.testing.assert_array_equal(m, expected)

    def test_fits(self):
        assert Rect(0, 0, 4, 4).fits(4, 4)
        assert not Rect(1, 0, 4, 4).fits(4, 4)
        assert not Rect(-1, 0, 2, 2).fits(4, 4)

    def test_roundtrip_list(self):
        r = Rect(3, 1, 2, 5)
        assert Rect.from_list(r.to_list()) == r


class TestCheckImage:
    def test_uint8_scaled(self):
        img = check_image(np.full((2, 2, 3), 255, np.uint8))
        np.testing.assert_array_equal(img, 1.0)

    def test_gray_promoted(self):
        assert check_image(np.zeros((3, 4))).shape == (3, 4, 1)

    def test_nonfinite_rejected(self):
        with pytest.raises(ContractError):
            check_image(np.array([[[np.nan]]]))


class TestCutZero:
    def test_small_example(self):
        out = cut_zero(np.ones((4, 4, 1)), Rect(1, 1, 2, 2))
        expected = np.ones((4, 4, 1))
        expected[1:3, 1:3] = 0
        np.testing.assert_array_equal(out, expected)
        assert np.sum(out == 0) == 4

    def test_full_cover(self, rng):
        out = cut_zero(rng.random((5, 7, 3)), Rect(0, 0, 5, 7))
        assert not out.any()

    def test_matches_loop_oracle(self, rng):
        img = rng.random((8, 8, 3))
        rect = Rect(2, 3, 4, 4)
        np.testing.assert_array_equal(cut_zero(img, rect), naive_cut(img, rect))

    def test_out_of_bounds(self):
        with pytest.raises(ContractError):
            cut_zero(np.ones((4, 4, 1)), Rect(2, 2, 3, 3))

    def test_input_untouched(self, rng):
        img = rng.random((4, 4, 3))
        before = img.copy()
        cut_zero(img, Rect(0, 0, 2, 2))
        np.testing.assert_array_equal(img, before)


class TestCutRandom:
    def test_single_pixel(self):
        img = np.full((2, 2, 1), 5.0)
        out = cut_random(img, Rect(0, 0, 1, 1), RngStream(1))
        assert np.sum(out != img) == 1
        assert 0 <= out[0, 0, 0] < 1

    def test_deterministic(self, rng):
        img = rng.random((6, 6, 3))
        a = cut_random(img, Rect(1, 1, 3, 3), RngStream(7, 2))
        b = cut_random(img, Rect(1, 1, 3, 3), RngStream(7, 2))
        np.testing.assert_array_equal(a, b)

    def test_mean_of_uniform_fill(self):
        img = np.zeros((8, 8, 1))
        means = [cut_random(img, Rect(0, 0, 8, 8), RngStream(s)).mean() for s in range(100)]
        assert 0.4 <= np.mean(means) <= 0.6

    def test_outside_unchanged(self, rng):
        img = rng.random((6, 6, 3))
        rect = Rect(2, 2, 2, 2)
        out = cut_random(img, rect, RngStream(0))
        mask = rect.mask(img.shape)
        np.testing.assert_array_equal(out[~mask], img[~mask])


class TestPasteRegion:
    def test_identical_inputs(self, rng):
        img = rng.random((5, 5, 3))
        np.testing.assert_array_equal(paste_region(img, img, Rect(1, 1, 2, 2)), img)

    def test_full_cover_gives_source(self, rng):
        a, b = rng.random((2, 5, 5, 3))
        np.testing.assert_array_equal(paste_region(a, b, Rect(0, 0, 5, 5)), a)

    def test_matches_select_oracle(self, rng):
        a, b = rng.random((2, 6, 6, 3))
        rect = Rect(1, 1, 2, 2)
        np.testing.assert_array_equal(paste_region(a, b, rect), naive_paste(a, b, rect))

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            paste_region(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)), Rect(0, 0, 1, 1))

    def test_changes_exactly_region(self, rng):
        a, b = rng.random((2, 7, 9, 3))
        rect = Rect(2, 3, 3, 4)
        out = paste_region(a, b, rect)
        assert np.sum(out != b) == rect.area * 3


@st.composite
def image_and_rect(draw):
    h = draw(st.integers(1, 12))
    w = draw(st.integers(1, 12))
    c = draw(st.sampled_from([1, 3]))
    rh = draw(st.integers(1, h))
    rw = draw(st.integers(1, w))
    top = draw(st.integers(0, h - rh))
    left = draw(st.integers(0, w - rw))
    seed = draw(st.integers(0, 2**32 - 1))
    img = np.random.default_rng(seed).random((h, w, c))
    return img, Rect(top, left, rh, rw)


@settings(max_examples=60, deadline=None)
@given(image_and_rect())
def test_cut_then_paste_reconstructs(case):
    img, rect = case
    np.testing.assert_array_equal(paste_region(img, cut_zero(img, rect), rect), img)


class TestResizeBicubic:
    @pytest.mark.parametrize("shape", [(1, 1), (3, 5), (17, 9), (40, 40)])
    def test_constant_preserved(self, shape):
        img = np.full((10, 13, 3), 0.7)
        np.testing.assert_allclose(resize_bicubic(img, *shape), 0.7, atol=1e-6)

    def test_checkerboard_matches_reference(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None]
        np.testing.assert_allclose(resize_bicubic(img, 4, 4), reference_bicubic(img, 4, 4), atol=1e-4)

    def test_random_matches_reference(self, rng):
        img = rng.random((7, 9, 3))
        for shape in [(4, 5), (11, 3), (7, 9)]:
            np.testing.assert_allclose(resize_bicubic(img, *shape), reference_bicubic(img, *shape), atol=1e-10)

    def test_half_resolution_dims(self):
        assert resize_bicubic(np.zeros((224, 224, 3)), 112, 112).shape == (112, 112, 3)

    def test_output_clamped(self):
        img = np.zeros((6, 6, 1))
        img[2:4, 2:4] = 1.0
        out = resize_bicubic(img, 13, 13)
        assert out.min() >= 0 and out.max() <= 1

    def test_same_size_is_identity(self, rng):
        img = rng.random((5, 6, 3))
        np.testing.assert_allclose(resize_bicubic(img, 5, 6), img, atol=1e-12)


class TestUpscaleNearest:
    def test_single_cell(self):
        np.testing.assert_array_equal(upscale_nearest(np.array([[3.0]]), 4, 7), 3.0)

    def test_integer_factor_blocks(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        expected = np.repeat(np.repeat(m, 2, 0), 2, 1)
        np.testing.assert_array_equal(upscale_nearest(m, 4, 4), expected)

    def test_index_formula(self, rng):
        m = rng.random((3, 3))
        out = upscale_nearest(m, 5, 5)
        for i in range(5):
            for j in range(5):
                assert out[i, j] == m[int(np.floor((i + 0.5) * 3 / 5)), int(np.floor((j + 0.5) * 3 / 5))]
