"""
Test suite for augmentation, letterboxing and normalization
"""

import os
import sys

import cv2
import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from preprocessing.augment import (
    TransformParams, affine_matrix, apply_affine, apply_brightness, apply_hflip, apply_transform, augment_pipeline,
    augment_seed, letterbox, letterbox_geometry, normalize_pixels, prepare_input, preview_panel, sample_transform,
)
from preprocessing.eyeslot import EyeSlot
from schemas.config import AugmentConfig


@pytest.fixture
def slot_image():
    """Create a deterministic 40 x 120 RGB slot"""
    rng = np.random.default_rng(1)
    return rng.integers(0, 256, size=(40, 120, 3), dtype=np.uint8)


class TestSampling:
    """Test suite for transform parameter draws"""

    def test_draws_stay_in_range(self):
        """Test every draw lies within its configured magnitude range"""
        config = AugmentConfig()
        for seed in range(200):
            params = sample_transform(config, seed)
            assert 0.5 <= params.brightness <= 1.5
            assert abs(params.rotation) <= 5.0
            assert abs(params.width_shift) <= 0.10
            assert abs(params.height_shift) <= 0.10
            assert abs(params.shear) <= 0.01

    def test_signs_and_flips_vary(self):
        """Test random signs and flips both occur"""
        draws = [sample_transform(AugmentConfig(), seed) for seed in range(200)]
        assert any(p.rotation < 0 for p in draws) and any(p.rotation > 0 for p in draws)
        assert any(p.hflip for p in draws) and not all(p.hflip for p in draws)

    def test_flip_frequency_and_brightness_bounds(self):
        """Test over 10^4 per-sample draws flips occur half the time and brightness stays in range"""
        config = AugmentConfig()
        draws = [sample_transform(config, augment_seed(0, 0, i)) for i in range(10_000)]
        assert np.mean([p.hflip for p in draws]) == pytest.approx(0.5, abs=0.02)
        brightness = [p.brightness for p in draws]
        assert 0.5 <= min(brightness) and max(brightness) <= 1.5

    def test_same_seed_same_draw(self):
        """Test the draw is a pure function of the seed"""
        config = AugmentConfig()
        assert sample_transform(config, 42) == sample_transform(config, 42)
        assert sample_transform(config, 42) != sample_transform(config, 43)

    def test_identity_config(self):
        """Test the collapsed configuration only produces identity transforms"""
        assert all(sample_transform(AugmentConfig.identity(), s).is_identity for s in range(20))

    def test_augment_seed_is_per_sample(self):
        """Test per-sample seeds depend on epoch and index"""
        assert augment_seed(0, 1, 2) == augment_seed(0, 1, 2)
        assert len({augment_seed(0, e, i) for e in range(3) for i in range(3)}) == 9

    def test_range_validation(self):
        """Test inverted and negative ranges are configuration errors"""
        with pytest.raises(ValueError):
            AugmentConfig(rotation_range=(5.0, 1.0))
        with pytest.raises(ValueError):
            AugmentConfig(shear_range=(-0.1, 0.1))
        with pytest.raises(ValueError):
            AugmentConfig(brightness_range=(0.0, 1.0))


class TestTransforms:
    """Test suite for the individual image transforms"""

    def test_identity_transform_is_exact(self, slot_image):
        """Test identity parameters return the input unchanged"""
        out = apply_transform(slot_image, TransformParams())
        assert np.array_equal(out, slot_image)
        assert out is not slot_image

    def test_brightness_scales_lightness(self):
        """Test brightness moves a gray image's lightness and clips at white"""
        gray = np.full((4, 4, 3), 100, dtype=np.uint8)
        darker = apply_brightness(gray, 0.5)
        brighter = apply_brightness(gray, 3.0)
        assert darker.dtype == np.uint8
        assert abs(int(darker[0, 0, 0]) - 50) <= 1
        assert brighter.max() == 255

    def test_brightness_keeps_hue(self):
        """Test a saturated color keeps its hue under a lightness change"""
        red = np.zeros((2, 2, 3), dtype=np.uint8)
        red[..., 0] = 200
        out = apply_brightness(red, 0.8)
        assert out[0, 0, 1] == 0 and out[0, 0, 2] == 0
        assert out[0, 0, 0] < 200

    def test_affine_composition_order(self):
        """Test the matrix rotates about the center before translating"""
        matrix = affine_matrix(11, 11, 90.0, 2.0, 0.0, 0.0)
        center = np.array([5.0, 5.0, 1.0])
        right_of_center = np.array([6.0, 5.0, 1.0])

        assert matrix @ center == pytest.approx([7.0, 5.0])
        # Counter-clockwise on screen: a point right of center moves up
        assert matrix @ right_of_center == pytest.approx([7.0, 4.0])

    def test_translation_moves_content(self):
        """Test an integer shift moves a bright pixel by that many pixels"""
        image = np.zeros((9, 9, 3), dtype=np.uint8)
        image[4, 4] = 255
        out = apply_affine(image, dx=2.0, dy=-1.0)
        assert tuple(np.argwhere(out[..., 0] == 255)[0]) == (3, 6)

    def test_affine_matches_cv2(self, slot_image):
        """Test the warp is the composed matrix applied with bilinear sampling"""
        out = apply_affine(slot_image, rotation=3.0, dx=4.0, dy=2.0, shear=0.01)
        expected = cv2.warpAffine(
            slot_image, affine_matrix(120, 40, 3.0, 4.0, 2.0, 0.01), (120, 40),
            flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0,
        )
        assert np.array_equal(out, expected)

    def test_hflip(self, slot_image):
        """Test flipping mirrors columns and twice is identity"""
        flipped = apply_hflip(slot_image)
        assert np.array_equal(flipped[:, 0], slot_image[:, -1])
        assert np.array_equal(apply_hflip(flipped), slot_image)

    def test_shape_preserved(self, slot_image):
        """Test every random transform keeps the slot size"""
        for seed in range(10):
            out = apply_transform(slot_image, sample_transform(AugmentConfig(), seed))
            assert out.shape == slot_image.shape
            assert out.dtype == np.uint8


class TestLetterbox:
    """Test suite for aspect-preserving resizing"""

    def test_wide_slot_fills_width(self):
        """Test a slot wider than the frame ratio is padded top and bottom"""
        scale, cw, ch, left, top = letterbox_geometry(300, 60, 512, 170)
        assert scale == pytest.approx(512 / 300)
        assert (cw, ch) == (512, 102)
        assert left == 0
        assert top == 34

    def test_tall_slot_fills_height(self):
        """Test a slot narrower than the frame ratio is padded left and right"""
        _, cw, ch, left, top = letterbox_geometry(100, 100, 512, 170)
        assert (cw, ch) == (170, 170)
        assert (left, top) == (171, 0)

    def test_padding_is_black(self):
        """Test padded regions are zero and content is centered"""
        image = np.full((60, 300, 3), 200, dtype=np.uint8)
        out = letterbox(image, 512, 170)
        assert out.shape == (170, 512, 3)
        assert out[:34].max() == 0
        assert out[34 + 102:].max() == 0
        assert out[34:136].min() == 200

    def test_exact_size_is_untouched(self, slot_image):
        """Test an image already at the target size is copied as is"""
        assert np.array_equal(letterbox(slot_image, 120, 40), slot_image)

    @pytest.mark.parametrize("target", [(512, 170), (64, 24)])
    def test_random_sizes_keep_aspect(self, target):
        """Test 100 random sources fit the frame with one scale, centered padding and aspect kept"""
        target_w, target_h = target
        rng = np.random.default_rng(12)
        for width, height in rng.integers(1, 400, size=(100, 2)).tolist():
            scale, cw, ch, left, top = letterbox_geometry(width, height, target_w, target_h)
            out = letterbox(np.full((height, width, 3), 255, dtype=np.uint8), target_w, target_h)

            assert out.shape == (target_h, target_w, 3)
            assert scale == min(target_w / width, target_h / height)
            assert abs(cw - width * scale) <= 1 and abs(ch - height * scale) <= 1
            assert cw == target_w or ch == target_h
            right, bottom = target_w - cw - left, target_h - ch - top
            assert right - left in (0, 1) and bottom - top in (0, 1)

            rows = np.flatnonzero(out[..., 0].any(axis=1))
            cols = np.flatnonzero(out[..., 0].any(axis=0))
            assert (rows[0], rows[-1] + 1) == (top, top + ch)
            assert (cols[0], cols[-1] + 1) == (left, left + cw)

    def test_zero_dimension_rejected(self):
        """Test empty images cannot be letterboxed"""
        with pytest.raises(ValueError):
            letterbox_geometry(0, 10, 512, 170)

    def test_normalize_range(self):
        """Test 8-bit values map into [0, 1] and other dtypes are refused"""
        image = np.array([[[0, 128, 255]]], dtype=np.uint8)
        out = normalize_pixels(image, "float64")
        assert out.dtype == np.float64
        assert out.tolist() == [[[0.0, 128 / 255, 1.0]]]
        with pytest.raises(ValueError):
            normalize_pixels(out)


class TestPipeline:
    """Test suite for the composed augmentation pipeline"""

    @pytest.fixture
    def slot(self, slot_image):
        """Create an eye slot with a label"""
        return EyeSlot(image=slot_image, valence=0.3, arousal=-0.6, record_id="s")

    def test_label_is_untouched(self, slot):
        """Test augmentation never alters the label"""
        for seed in range(5):
            result = augment_pipeline(slot, AugmentConfig(), seed, target=(64, 24))
            assert result.label == (0.3, -0.6)
            assert result.tensor.shape == (24, 64, 3)
            assert 0.0 <= result.tensor.min() and result.tensor.max() <= 1.0

    def test_pipeline_is_deterministic(self, slot):
        """Test the same seed gives the same tensor"""
        first = augment_pipeline(slot, AugmentConfig(), 9, target=(64, 24)).tensor
        second = augment_pipeline(slot, AugmentConfig(), 9, target=(64, 24)).tensor
        assert np.array_equal(first, second)

    def test_identity_matches_eval_input(self, slot):
        """Test identity augmentation equals the validation-time input"""
        augmented = augment_pipeline(slot, AugmentConfig.identity(), 0, target=(64, 24)).tensor
        assert np.array_equal(augmented, prepare_input(slot.image, (64, 24)))

    def test_preview_panel_layout(self, slot):
        """Test the preview stacks the plain slot and one row per seed"""
        panel = preview_panel(slot, AugmentConfig(), [1, 2, 3], target=(64, 24), gap=4)
        assert panel.shape == (4 * 24 + 3 * 4, 64, 3)
        assert np.array_equal(panel[:24], letterbox(slot.image, 64, 24))
