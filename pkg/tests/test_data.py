import logging

import numpy as np
import pytest
from PIL import Image

from src.core.errors import ConfigurationError
from src.data.augment import augment, sample_transform
from src.data.dataset import load_manifest, write_dataset
from src.data.pts_dataset import crop_box, crop_sample, load_pts_dataset
from src.data.synthetic import generate, generate_one
from src.landmarks.pts import write_pts
from src.models.landmarks import LandmarkSet
from src.models.training import AugmentConfig, SynthConfig


class TestSynthetic:
    def test_same_seed_same_samples(self):
        cfg = SynthConfig(seed=3)
        a, b = generate(cfg, 3), generate(cfg, 3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.image, y.image)
            np.testing.assert_array_equal(x.landmarks.points, y.landmarks.points)

    def test_sample_depends_only_on_index(self):
        cfg = SynthConfig(seed=1)
        tail = generate(cfg, 2, start=4)
        np.testing.assert_array_equal(tail[1].image, generate_one(cfg, 5).image)

    @pytest.mark.parametrize("n", [5, 68])
    def test_samples_are_valid(self, n):
        for sample in generate(SynthConfig(n_landmarks=n), 2):
            assert sample.image.shape == (3, 128, 128)
            assert sample.landmarks.n == n
            assert not sample.validate()
            assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0

    def test_left_eye_is_left_of_right_eye(self):
        points = generate_one(SynthConfig(), 0).landmarks.points
        assert points[0, 0] < points[1, 0]

    def test_unsupported_layout(self):
        with pytest.raises(ConfigurationError):
            generate(SynthConfig(n_landmarks=7), 1)


def test_manifest_roundtrip(tmp_path):
    dataset = generate(SynthConfig(seed=2), 3)
    manifest = write_dataset(dataset, str(tmp_path / "set"), description="unit")
    loaded = load_manifest(manifest)
    assert [s.id for s in loaded] == [s.id for s in dataset]
    for original, back in zip(dataset, loaded):
        np.testing.assert_array_equal(back.landmarks.points, original.landmarks.points)
        # 8-bit PNG quantisation
        assert np.abs(back.image - original.image).max() <= 0.5 / 255 + 1e-6
    assert len(load_manifest(str(tmp_path / "set"))) == 3


class TestPtsFolder:
    def make_folder(self, tmp_path):
        Image.new('RGB', (200, 100), (90, 120, 150)).save(tmp_path / "a.png")
        write_pts(tmp_path / "a.pts", LandmarkSet([[50.0, 20.0], [150.0, 80.0]]))
        Image.new('RGB', (64, 64)).save(tmp_path / "orphan.jpg")
        (tmp_path / "notes.txt").write_text("ignored")
        return tmp_path

    def test_crop_box_is_square_around_landmarks(self):
        x0, y0, side = crop_box(LandmarkSet([[50.0, 20.0], [150.0, 80.0]]))
        assert side == pytest.approx(150.0)
        assert (x0, y0) == pytest.approx((25.0, -25.0))

    def test_cropped_pixels_line_up_with_cropped_landmarks(self):
        canvas = np.zeros((100, 100), dtype=np.uint8)
        canvas[30, 40] = 255
        lms = LandmarkSet([[20.0, 20.0], [60.0, 60.0], [40.0, 30.0]])
        # box (10, 10, 60) at size 120 is an exact 2x upscale
        pixels, cropped = crop_sample(Image.fromarray(canvas), lms, size=120)
        weights = pixels[0].astype(np.float64)
        rows, cols = np.indices(weights.shape)
        centroid = [np.sum(cols * weights) / weights.sum(), np.sum(rows * weights) / weights.sum()]
        np.testing.assert_allclose(cropped.points[2], [60.0, 40.0])
        np.testing.assert_allclose(centroid, cropped.points[2], atol=0.1)

    def test_loads_cropped_sample_and_skips_orphans(self, tmp_path, caplog):
        folder = self.make_folder(tmp_path)
        with caplog.at_level(logging.WARNING):
            dataset = load_pts_dataset(str(folder))
        assert len(dataset) == 1
        assert "orphan.jpg" in caplog.text
        sample = dataset[0]
        assert sample.id == "a" and sample.image.shape == (3, 128, 128)
        k = 128 / 150.0
        np.testing.assert_allclose(sample.landmarks.points, [[25.0 * k, 45.0 * k], [125.0 * k, 105.0 * k]])

    def test_landmark_count_filter(self, tmp_path):
        folder = self.make_folder(tmp_path)
        assert len(load_pts_dataset(str(folder), n_landmarks=68)) == 0


class TestAugment:
    def test_seeded_draws_repeat(self):
        cfg = AugmentConfig()
        a = sample_transform(np.random.default_rng([1, 2]), cfg, 5)
        b = sample_transform(np.random.default_rng([1, 2]), cfg, 5)
        np.testing.assert_array_equal(a.affine, b.affine)
        assert a.flip == b.flip

    def test_disabled_ranges_give_identity(self, rng):
        cfg = AugmentConfig(max_rotation=0.0, min_scale=1.0, max_scale=1.0, flip_probability=0.0)
        assert sample_transform(rng, cfg, 5).is_identity()

    def test_flip_always_carries_pairs(self, rng):
        cfg = AugmentConfig(flip_probability=1.0)
        t = sample_transform(rng, cfg, 68)
        assert t.flip and len(t.flip_pairs) == 68

    def test_augment_moves_landmarks_with_transform(self, rng):
        sample = generate_one(SynthConfig(), 0)
        moved, t = augment(sample, rng)
        expected = t.forward_points(sample.landmarks.points)[t.channel_permutation(5)]
        np.testing.assert_allclose(moved.landmarks.points, expected)
        assert moved.image.dtype == np.float32
