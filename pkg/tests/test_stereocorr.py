import numpy as np
import pytest

from nirfuse.attnfuse import FusionModelWeights, build_model_tensors
from nirfuse.errors import ArgumentError
from nirfuse.image import Image, ImageKind
from nirfuse.stereocorr import (
    CorrVolume,
    FeatureMode,
    VolumeKind,
    VolumeSchedule,
    correlation_volume,
    image_to_features,
    wta_disparity,
)


def feature_image(arr):
    return Image(np.asarray(arr, dtype=np.float64), ImageKind.FEATURE)


def unit_features(rng, c, h, w):
    raw = rng.normal(size=(c, h, w))
    return feature_image(raw / np.linalg.norm(raw, axis=0, keepdims=True))


class TestCorrelationVolume:
    def test_hand_computed_strip(self):
        left = feature_image([[1.0, 2.0, 3.0, 4.0]])
        right = feature_image([[10.0, 20.0, 30.0, 40.0]])
        vol = correlation_volume(left, right, 2)
        np.testing.assert_allclose(vol.values[0, 0], [10.0, 40.0, 90.0, 160.0])
        assert np.isneginf(vol.values[1, 0, 0])
        np.testing.assert_allclose(vol.values[1, 0, 1:], [20.0, 60.0, 120.0])

    def test_self_correlation_peaks_at_zero(self, rng):
        f = unit_features(rng, 4, 6, 16)
        vol = correlation_volume(f, f, 5)
        np.testing.assert_allclose(vol.values[0], 1.0, atol=1e-12)
        interior = vol.values[:, :, 5:]
        assert (interior.argmax(axis=0) == 0).all()

    def test_zero_shift_equals_squared_norm(self, rng):
        f = feature_image(rng.normal(size=(3, 4, 9)))
        vol = correlation_volume(f, f, 3)
        np.testing.assert_allclose(
            vol.values[0], (f.data.astype(np.float64) ** 2).sum(axis=0), atol=1e-6)

    def test_scaling_right_scales_volume(self, rng):
        # Power-of-two factor: exact even through float32 storage.
        left = feature_image(rng.normal(size=(2, 3, 8)))
        right_arr = rng.normal(size=(2, 3, 8))
        base = correlation_volume(left, feature_image(right_arr), 3)
        scaled = correlation_volume(left, feature_image(2.0 * right_arr), 3)
        finite = np.isfinite(base.values)
        np.testing.assert_allclose(scaled.values[finite], 2.0 * base.values[finite],
                                   atol=1e-12)
        assert np.isneginf(scaled.values[~finite]).all()

    def test_literal_shift_samples_forward(self):
        left = feature_image([[1.0, 1.0, 1.0, 1.0]])
        right = feature_image([[5.0, 6.0, 7.0, 8.0]])
        vol = correlation_volume(left, right, 2, literal_shift=True)
        np.testing.assert_allclose(vol.values[1, 0, :3], [6.0, 7.0, 8.0])
        assert np.isneginf(vol.values[1, 0, 3])

    def test_validation(self, rng):
        f = feature_image(rng.normal(size=(1, 2, 6)))
        g = feature_image(rng.normal(size=(2, 2, 6)))
        with pytest.raises(ArgumentError, match="shapes"):
            correlation_volume(f, g, 2)
        with pytest.raises(ArgumentError, match="disparity"):
            correlation_volume(f, f, 6)
        with pytest.raises(ArgumentError, match="disparity"):
            correlation_volume(f, f, 0)

    def test_volume_rejects_nan(self):
        with pytest.raises(ArgumentError):
            CorrVolume(np.full((1, 2, 2), np.nan))


def shifted_pair(rng, shift, h=24, w=128):
    base = rng.uniform(0.0, 1.0, (h, w + shift))
    left = base[:, :w]
    right = base[:, shift:]  # right[x] = left[x + shift], so disparity = shift
    return Image(left, ImageKind.GRAY), Image(right, ImageKind.GRAY)


class TestWTA:
    def test_single_volume_is_plain_argmax(self, rng):
        vol = CorrVolume(rng.normal(size=(6, 5, 10)))
        disp = wta_disparity({VolumeKind.NIR: vol},
                             VolumeSchedule((VolumeKind.NIR,)), rounds=1,
                             subpixel=False)
        np.testing.assert_array_equal(disp.plane(0), vol.values.argmax(axis=0))

    def test_two_round_schedule_sums_volumes(self, rng):
        a = CorrVolume(rng.normal(size=(5, 4, 12)))
        b = CorrVolume(rng.normal(size=(5, 4, 12)))
        disp = wta_disparity(
            {VolumeKind.FUSION: a, VolumeKind.NIR: b},
            VolumeSchedule((VolumeKind.FUSION, VolumeKind.NIR)), rounds=2,
            subpixel=False)
        np.testing.assert_array_equal(
            disp.plane(0), (a.values + b.values).argmax(axis=0))

    def test_ties_break_toward_smaller_k(self):
        vals = np.zeros((4, 1, 3))
        vals[1, 0, :] = 2.0
        vals[3, 0, :] = 2.0
        disp = wta_disparity({VolumeKind.RGB: CorrVolume(vals)},
                             VolumeSchedule((VolumeKind.RGB,)), subpixel=False)
        np.testing.assert_array_equal(disp.plane(0), 1.0)

    def test_scale_invariant_argmax(self, rng):
        vol = CorrVolume(rng.normal(size=(7, 6, 14)))
        sched = VolumeSchedule((VolumeKind.FUSION,))
        a = wta_disparity({VolumeKind.FUSION: vol}, sched, subpixel=False)
        scaled = CorrVolume(3.7 * vol.values)
        b = wta_disparity({VolumeKind.FUSION: scaled}, sched, subpixel=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_recovers_integer_shift(self, rng):
        shift = 3
        left, right = shifted_pair(rng, shift)
        fl = image_to_features(left, FeatureMode.INTENSITY_GRAD, normalize=True)
        fr = image_to_features(right, FeatureMode.INTENSITY_GRAD, normalize=True)
        vol = correlation_volume(fl, fr, 8)
        sched = VolumeSchedule((VolumeKind.FUSION,))

        exact = wta_disparity({VolumeKind.FUSION: vol}, sched, subpixel=False)
        region = exact.plane(0)[:, :left.width - shift]
        assert (region == shift).mean() >= 0.95

        refined = wta_disparity({VolumeKind.FUSION: vol}, sched, subpixel=True)
        region = refined.plane(0)[:, :left.width - shift]
        assert (np.abs(region - shift) <= 0.5).mean() >= 0.95

    def test_subpixel_parabola_on_synthetic_peak(self):
        # V(k) = -(k - 2.25)^2 has its maximum at k = 2.25.
        ks = np.arange(5.0)
        vals = -((ks - 2.25) ** 2)[:, None, None] * np.ones((1, 1, 1))
        vol = CorrVolume(np.broadcast_to(vals, (5, 2, 3)).copy())
        disp = wta_disparity({VolumeKind.NIR: vol}, VolumeSchedule((VolumeKind.NIR,)))
        np.testing.assert_allclose(disp.plane(0), 2.25, atol=1e-6)

    def test_missing_volume_errors(self, rng):
        vol = CorrVolume(rng.normal(size=(3, 2, 5)))
        with pytest.raises(ArgumentError, match="nir"):
            wta_disparity({VolumeKind.FUSION: vol},
                          VolumeSchedule((VolumeKind.FUSION, VolumeKind.NIR)),
                          rounds=2)

    def test_rounds_validation(self, rng):
        vol = CorrVolume(rng.normal(size=(3, 2, 5)))
        with pytest.raises(ArgumentError, match="rounds"):
            wta_disparity({VolumeKind.NIR: vol}, VolumeSchedule((VolumeKind.NIR,)),
                          rounds=0)

    def test_shape_mismatch_errors(self, rng):
        a = CorrVolume(rng.normal(size=(3, 2, 5)))
        b = CorrVolume(rng.normal(size=(3, 2, 6)))
        with pytest.raises(ArgumentError, match="shape"):
            wta_disparity({VolumeKind.FUSION: a, VolumeKind.NIR: b},
                          VolumeSchedule((VolumeKind.FUSION, VolumeKind.NIR)),
                          rounds=2)


class TestFeatures:
    def test_intensity_identity(self, rng):
        img = Image(rng.uniform(0, 1, (5, 7)), ImageKind.GRAY)
        feats = image_to_features(img, FeatureMode.INTENSITY)
        assert feats.kind is ImageKind.FEATURE
        np.testing.assert_array_equal(feats.data, img.data)

    def test_constant_image_has_zero_gradients(self):
        img = Image(np.full((6, 8), 0.4), ImageKind.GRAY)
        feats = image_to_features(img, FeatureMode.INTENSITY_GRAD)
        assert feats.channels == 3
        np.testing.assert_array_equal(feats.data[1:], 0.0)

    def test_gradient_channel_count_scales(self, rng):
        img = Image(rng.uniform(0, 1, (3, 6, 8)), ImageKind.RGB)
        feats = image_to_features(img, FeatureMode.INTENSITY_GRAD)
        assert feats.channels == 9

    def test_encoder_zero_weights_zero_features(self, rng):
        weights = FusionModelWeights.from_tensors(build_model_tensors(channels=4))
        img = Image(rng.uniform(0, 1, (16, 24)), ImageKind.NIR)
        feats = image_to_features(img, FeatureMode.ENCODER, weights=weights)
        assert feats.height == 4 and feats.width == 6
        np.testing.assert_array_equal(feats.data, 0.0)

    def test_encoder_requires_weights(self, rng):
        img = Image(rng.uniform(0, 1, (8, 8)), ImageKind.GRAY)
        with pytest.raises(ArgumentError, match="weights"):
            image_to_features(img, FeatureMode.ENCODER)

    def test_normalize_gives_unit_vectors(self, rng):
        img = Image(rng.uniform(0.1, 1, (3, 5, 6)), ImageKind.RGB)
        feats = image_to_features(img, FeatureMode.INTENSITY, normalize=True)
        norms = np.linalg.norm(feats.data.astype(np.float64), axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_schedule_parsing(self):
        sched = VolumeSchedule.parse("fusion,nir")
        assert sched.tags == (VolumeKind.FUSION, VolumeKind.NIR)
        with pytest.raises(ArgumentError):
            VolumeSchedule.parse("fusion,sonar")
        with pytest.raises(ArgumentError):
            VolumeSchedule(())
