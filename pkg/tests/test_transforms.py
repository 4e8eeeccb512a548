import numpy as np
import pytest

from src.core.errors import ConfigurationError, DimensionError, SingularTransformError
from src.core.tensor import Tensor
from src.models.landmarks import HeatmapStack, LandmarkSet
from src.models.transform_spec import TransformSpec
from src.transform.flip_pairs import flip_pairs_for, parse_flip_pairs
from src.transform.transforms import apply_to_heatmaps, apply_to_image, apply_to_landmarks, warp_images


def test_identity_is_a_no_op(rng):
    t = TransformSpec.identity(size=16)
    assert t.is_identity()
    image = rng.normal(size=(3, 16, 16))
    np.testing.assert_array_equal(apply_to_image(t, image), image)
    lms = LandmarkSet(rng.uniform(0, 15, size=(5, 2)))
    np.testing.assert_array_equal(apply_to_landmarks(t, lms).points, lms.points)


def test_flip_mirrors_and_permutes_landmarks():
    pairs = flip_pairs_for(5)
    points = np.array([[30.0, 40.0], [98.0, 40.0], [64.0, 70.0], [40.0, 90.0], [88.0, 90.0]])
    flipped = apply_to_landmarks(TransformSpec.from_params(flip=True, flip_pairs=pairs), LandmarkSet(points))
    # the left eye of the result is the mirrored right eye of the source
    np.testing.assert_allclose(flipped.points[0], [29.0, 40.0])
    np.testing.assert_allclose(flipped.points[1], [97.0, 40.0])
    np.testing.assert_allclose(flipped.points[2], [63.0, 70.0])
    np.testing.assert_allclose(flipped.points[3], [39.0, 90.0])


def test_rotation_by_quarter_turn_matches_rot90(rng):
    image = rng.normal(size=(1, 4, 4))
    out = apply_to_image(TransformSpec.from_params(rotation_deg=90.0, size=4), image)
    np.testing.assert_allclose(out[0], np.rot90(image[0]), atol=1e-9)


def test_points_follow_the_image(rng):
    t = TransformSpec.from_params(rotation_deg=25.0, scale=1.1, translation=(2.0, -3.0), size=32)
    image = np.zeros((1, 32, 32))
    image[0, 12, 9] = 1.0
    out = apply_to_image(t, image)
    x, y = t.forward_points(np.array([9.0, 12.0]))
    row, col = np.unravel_index(np.argmax(out[0]), out[0].shape)
    assert abs(row - y) <= 1.0 and abs(col - x) <= 1.0


def test_inverse_undoes_forward(rng):
    t = TransformSpec.from_params(rotation_deg=-17.0, scale=0.9, flip=True, size=64)
    points = rng.uniform(0, 63, size=(10, 2))
    np.testing.assert_allclose(t.inverse_points(t.forward_points(points)), points, atol=1e-9)


def test_heatmap_flip_is_an_exact_permutation(rng):
    pairs = flip_pairs_for(5)
    maps = rng.uniform(size=(5, 64, 64))
    out = apply_to_heatmaps(TransformSpec.from_params(flip=True, flip_pairs=pairs), HeatmapStack(maps)).maps
    np.testing.assert_array_equal(out, maps[pairs][:, :, ::-1])


def test_heatmap_warp_accepts_tensors(rng):
    maps = Tensor(rng.uniform(size=(2, 5, 64, 64)))
    out = apply_to_heatmaps(TransformSpec.from_params(rotation_deg=10.0), maps)
    assert isinstance(out, Tensor) and out.shape == (2, 5, 64, 64)


def test_singular_transform_rejected(rng):
    t = TransformSpec.from_params(scale=0.0, size=8)
    assert t.validate()
    with pytest.raises(SingularTransformError):
        apply_to_image(t, rng.normal(size=(1, 8, 8)))
    with pytest.raises(SingularTransformError):
        t.inverse_points(np.zeros(2))


def test_frame_size_must_match(rng):
    with pytest.raises(DimensionError):
        warp_images([TransformSpec.identity(size=16)], Tensor(rng.normal(size=(1, 1, 8, 8))))


def test_flip_pairs_must_cover_every_landmark():
    t = TransformSpec.from_params(flip=True, flip_pairs=flip_pairs_for(5))
    with pytest.raises(ConfigurationError):
        apply_to_landmarks(t, LandmarkSet(np.zeros((68, 2))))


def test_shipped_pairings_are_involutions():
    for n in (5, 68):
        pairs = flip_pairs_for(n)
        assert sorted(pairs.tolist()) == list(range(n))
        np.testing.assert_array_equal(pairs[pairs], np.arange(n))
    assert flip_pairs_for(5).tolist() == [1, 0, 2, 4, 3]
    assert flip_pairs_for(68)[36] == 45


def test_non_involution_is_reported():
    t = TransformSpec.from_params(flip=True, flip_pairs=[1, 2, 0])
    assert any("involution" in e for e in t.validate())


@pytest.mark.parametrize("text", ["0 9", "0 1\n1 2", "a b", "0 1 2"])
def test_bad_flip_pair_files(text):
    with pytest.raises(ConfigurationError):
        parse_flip_pairs(text, 5)


def test_flip_pair_comments_are_ignored():
    assert parse_flip_pairs("# eyes\n0 1  # outer\n\n3 4\n", 5).tolist() == [1, 0, 2, 4, 3]


def test_unknown_layout_has_no_shipped_pairing():
    with pytest.raises(ConfigurationError):
        flip_pairs_for(7)
