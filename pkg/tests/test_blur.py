"""
Frame-averaging blur synthesis.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.data.blur import (
    average_frames,
    linear_trajectory,
    middle_frame,
    random_trajectory,
    shift_image,
    static_trajectory,
    synth_blur,
)
from src.exceptions import ConfigError
from src.tensor import Tensor


@pytest.fixture
def sharp(rng):
    return Tensor(rng.uniform(0.0, 1.0, (1, 3, 24, 20)), dtype="f64")


@pytest.mark.parametrize("frames,middle", [(1, 0), (7, 3), (8, 3), (13, 6)])
def test_middle_frame(frames, middle):
    assert middle_frame(frames) == middle


def test_single_frame_is_the_sharp_image(sharp, rng):
    sample = synth_blur(sharp, 1, rng=rng)
    assert_array_equal(sample.blurry.data, sharp.data)
    assert sample.sharp is sharp


def test_static_camera_gives_no_blur(sharp):
    sample = synth_blur(sharp, 9, static_trajectory(9))
    assert_array_equal(sample.blurry.data, sharp.data)
    assert sample.meta["trajectory"] == "static"


@pytest.mark.parametrize("frames", [7, 10, 13])
def test_random_trajectory_is_centered_and_bounded(frames):
    trajectory = random_trajectory(frames, np.random.default_rng(frames), max_shift=2.0)
    assert trajectory.frames == frames
    assert_array_equal(trajectory.offsets[middle_frame(frames)], [0.0, 0.0])
    steps = np.hypot(*np.diff(trajectory.offsets, axis=0).T)
    assert np.all(steps <= 2.0 + 1e-9)


def test_linear_trajectory():
    trajectory = linear_trajectory(5, (0.0, 4.0))
    assert_allclose(trajectory.offsets[:, 1], [-2.0, -1.0, 0.0, 1.0, 2.0])
    assert not trajectory.offsets[:, 0].any()


def test_integer_shift_translates():
    image = np.arange(2 * 5 * 6, dtype=np.float64).reshape(2, 5, 6)
    out = shift_image(image, 0, 1)
    assert_array_equal(out[:, :, 1:], image[:, :, :-1])
    out = shift_image(image, -2, 0)
    assert_array_equal(out[:, :-2, :], image[:, 2:, :])


def test_half_pixel_shift_interpolates():
    image = np.tile(np.arange(8, dtype=np.float64), (1, 4, 1))
    out = shift_image(image, 0, 0.5)
    assert_allclose(out[0, :, 2:], image[0, :, 2:] - 0.5)


def test_average_frames_weights_repeated_offsets():
    image = np.random.default_rng(0).uniform(0.0, 1.0, (1, 6, 6))
    offsets = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    expected = (2 * image + shift_image(image, 0.0, 1.0)) / 3
    assert_allclose(average_frames(image, offsets), expected, atol=1e-12)


def test_blur_preserves_constant_images():
    flat = Tensor(np.full((1, 3, 16, 16), 0.3), dtype="f64")
    sample = synth_blur(flat, 11, rng=np.random.default_rng(2))
    assert_allclose(sample.blurry.data, 0.3, atol=1e-12)


def test_blur_changes_textured_images(sharp):
    sample = synth_blur(sharp, 7, linear_trajectory(7, (0.0, 6.0)))
    assert not np.allclose(sample.blurry.data, sharp.data)
    assert sample.blurry.shape == sharp.shape
    assert sample.blurry.data.min() >= 0.0
    assert sample.blurry.data.max() <= 1.0


def test_same_generator_seed_same_blur(sharp):
    first = synth_blur(sharp, 9, rng=np.random.default_rng(5))
    second = synth_blur(sharp, 9, rng=np.random.default_rng(5))
    assert_array_equal(first.blurry.data, second.blurry.data)
    assert first.meta["frames"] == 9


def test_frame_count_errors(sharp):
    with pytest.raises(ConfigError):
        synth_blur(sharp, 0)
    with pytest.raises(ConfigError, match="offsets"):
        synth_blur(sharp, 7, static_trajectory(5))


def test_blur_grows_with_displacement(sharp):
    errors = []
    for extent in (0.0, 1.0, 2.0, 4.0):
        sample = synth_blur(sharp, 9, linear_trajectory(9, (0.0, extent)))
        errors.append(float(np.mean((sample.blurry.data - sharp.data) ** 2)))
    assert errors[0] == 0.0
    assert all(a < b for a, b in zip(errors, errors[1:]))


def test_blur_conserves_intensity(rng):
    image = np.zeros((1, 3, 32, 32))
    image[:, :, 10:22, 10:22] = rng.uniform(0.0, 1.0, (1, 3, 12, 12))
    sample = synth_blur(Tensor(image, dtype="f64"), 7, rng=np.random.default_rng(4), max_shift=1.0)
    assert_allclose(sample.blurry.data.sum(axis=(2, 3)), image.sum(axis=(2, 3)), rtol=1e-12)


def test_three_frame_edge_profile():
    edge = np.zeros((1, 6, 8))
    edge[:, :, 4:] = 1.0
    trajectory = linear_trajectory(3, (0.0, 2.0))
    assert_allclose(trajectory.offsets[:, 1], [-1.0, 0.0, 1.0])
    blurry = average_frames(edge, trajectory.offsets)
    assert_allclose(blurry[0, :, 1:7], np.tile([0.0, 0.0, 1 / 3, 2 / 3, 1.0, 1.0], (6, 1)), atol=1e-12)
