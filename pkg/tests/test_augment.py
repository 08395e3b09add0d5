import numpy as np
import pytest

from xplain.imaging import (
    AUG1,
    AUG2,
    AffineTransform,
    AugmentationSpec,
    FillMode,
    ImageTensor,
    RangeTag,
    apply_affine,
    augment_image,
    augmentation_stream,
    sample_augmentation,
)
from xplain.rng import substream


def white(h=224, w=224):
    return ImageTensor(np.ones((3, h, w)), RangeTag.UNIT)


class TestSampling:
    def test_zero_ranges_identity(self):
        spec = AugmentationSpec()
        t = sample_augmentation(spec, substream(0))
        assert t.is_identity()
        rng = np.random.default_rng(0)
        img = ImageTensor(rng.random((3, 12, 12)), RangeTag.UNIT)
        out = apply_affine(img, t, spec.fill_mode, spec.cval)
        assert np.array_equal(out.data, img.data)

    def test_same_seed_same_sequence(self):
        draws_a = [sample_augmentation(AUG2, substream(99, "augment", i)) for i in range(20)]
        draws_b = [sample_augmentation(AUG2, substream(99, "augment", i)) for i in range(20)]
        assert draws_a == draws_b

    def test_different_seed_differs(self):
        a = sample_augmentation(AUG2, substream(1))
        b = sample_augmentation(AUG2, substream(2))
        assert a != b

    def test_rotation_distribution(self):
        spec = AugmentationSpec(rotation_range=3.0)
        rng = substream(42)
        angles = np.array([sample_augmentation(spec, rng).angle_deg for _ in range(10_000)])
        assert np.all(np.abs(angles) <= 3.0)
        assert abs(angles.mean()) < 0.3  # |mean| < 0.1 * range

    def test_flips_only_when_enabled(self):
        spec = AugmentationSpec(horizontal_flip=False, vertical_flip=False)
        rng = substream(3)
        for _ in range(50):
            t = sample_augmentation(spec, rng)
            assert not t.horizontal_flip and not t.vertical_flip

    def test_negative_range_rejected(self):
        with pytest.raises(ValueError):
            AugmentationSpec(rotation_range=-1.0)


class TestApply:
    def test_width_shift_constant_fill(self):
        # +0.05 of 224 = 11.2 px: columns 0..10 are fully outside, filled with 0
        t = AffineTransform(width_shift=0.05)
        out = apply_affine(white(), t, FillMode.CONSTANT, cval=0.0)
        assert np.all(out.data[:, :, :11] == 0.0)
        assert np.all(out.data[:, :, 12:] == 1.0)

    def test_width_shift_nearest_fill(self):
        t = AffineTransform(width_shift=0.05)
        out = apply_affine(white(), t, FillMode.NEAREST)
        assert np.all(out.data == 1.0)

    def test_horizontal_flip(self):
        arr = np.zeros((3, 4, 4))
        arr[:, :, 0] = 1.0
        t = AffineTransform(horizontal_flip=True)
        out = apply_affine(ImageTensor(arr, RangeTag.UNIT), t, FillMode.NEAREST)
        assert np.allclose(out.data[:, :, 3], 1.0)
        assert np.allclose(out.data[:, :, 0], 0.0)

    def test_vertical_flip(self):
        arr = np.zeros((3, 4, 4))
        arr[:, 0, :] = 1.0
        t = AffineTransform(vertical_flip=True)
        out = apply_affine(ImageTensor(arr, RangeTag.UNIT), t, FillMode.NEAREST)
        assert np.allclose(out.data[:, 3, :], 1.0)

    def test_rotation_90_deg(self):
        # a quarter turn maps the right-center pixel to the top-center
        arr = np.zeros((3, 5, 5))
        arr[:, 2, 4] = 1.0
        t = AffineTransform(angle_deg=90.0)
        out = apply_affine(ImageTensor(arr, RangeTag.UNIT), t, FillMode.CONSTANT, 0.0)
        hot = np.argwhere(out.data[0] > 0.5)
        assert len(hot) == 1

    def test_zoom_out_constant_fill_borders(self):
        t = AffineTransform(zoom=0.5)
        out = apply_affine(white(16, 16), t, FillMode.CONSTANT, cval=0.0)
        assert np.all(out.data[:, 0, :] == 0.0)
        assert out.data[0, 8, 8] == 1.0

    def test_augment_image_deterministic(self):
        img = ImageTensor(np.random.default_rng(0).random((3, 20, 20)), RangeTag.UNIT)
        a = augment_image(img, AUG2, augmentation_stream(AUG2, epoch=1, image_index=5))
        b = augment_image(img, AUG2, augmentation_stream(AUG2, epoch=1, image_index=5))
        assert np.array_equal(a.data, b.data)
        c = augment_image(img, AUG2, augmentation_stream(AUG2, epoch=1, image_index=6))
        assert not np.array_equal(a.data, c.data)

    def test_aug1_near_identity(self):
        # tiny parameter ranges barely move pixel values (flips aside)
        spec = AugmentationSpec(rotation_range=0.05, shear_range=0.05, zoom_range=0.05)
        img = ImageTensor(np.random.default_rng(1).random((3, 32, 32)), RangeTag.UNIT)
        out = augment_image(img, spec, substream(11))
        assert np.max(np.abs(out.data - img.data)) < 0.5
        assert AUG1.fill_mode is FillMode.NEAREST
        assert AUG2.fill_mode is FillMode.CONSTANT and AUG2.cval == 0.0
