import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acrloss.errors import InvalidInputError
from acrloss.hardness import hardness_weights
from acrloss.shape_model import fit_shape_model, smooth_face


def brute_force_phi(face, smooth):
    diffs = [abs(s - f) for f, s in zip(face, smooth)]
    peak = max(diffs)
    if peak < 1e-12:
        return [0.0] * len(diffs)
    return [d / peak for d in diffs]


coords = arrays(np.float64, st.integers(2, 12).map(lambda p: 2 * p),
                elements=st.floats(0, 1, allow_nan=False))


def test_identical_inputs_degenerate_zero():
    face = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(hardness_weights(face, face), np.zeros(4))


def test_normalization_example():
    face = np.zeros(4)
    smooth = np.array([0.2, -0.1, 0.05, 0.0])
    np.testing.assert_allclose(hardness_weights(face, smooth), [1.0, 0.5, 0.25, 0.0], atol=1e-15)


def test_against_smooth_face_and_oracle(rng):
    samples = rng.uniform(0.2, 0.8, size=(40, 10))
    model = fit_shape_model(samples)
    for face in samples[:10]:
        smooth = smooth_face(model, face, 0.8)
        phi = hardness_weights(face, smooth)
        assert phi.max() == 1.0
        assert phi.min() >= 0.0
        np.testing.assert_allclose(phi, brute_force_phi(face, smooth), atol=1e-15)
        diffs = np.abs(smooth - face)
        assert np.array_equal(np.argsort(phi, kind="stable"), np.argsort(diffs, kind="stable"))


def test_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        hardness_weights(np.zeros(4), np.zeros(6))


def test_point_mode_shares_weight_between_coordinates():
    face = np.zeros(4)
    smooth = np.array([0.3, 0.4, 0.0, 0.1])  # point distances 0.5 and 0.1
    np.testing.assert_allclose(hardness_weights(face, smooth, mode="point"), [1, 1, 0.2, 0.2])
    with pytest.raises(InvalidInputError):
        hardness_weights(face, smooth, mode="bogus")


def test_batch_rows_are_independent(rng):
    faces = rng.uniform(size=(5, 8))
    smooth = rng.uniform(size=(5, 8))
    batch = hardness_weights(faces, smooth)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], hardness_weights(faces[i], smooth[i]))


@given(coords, st.data())
def test_range_and_peak(face, data):
    smooth = data.draw(arrays(np.float64, face.shape, elements=st.floats(0, 1)))
    phi = hardness_weights(face, smooth)
    assert np.all((phi >= 0) & (phi <= 1))
    if np.abs(smooth - face).max() >= 1e-12:
        assert phi.max() == 1.0
    else:
        assert np.all(phi == 0)


@given(coords, st.data(), st.sampled_from([0.1, 0.5, 3.0, 7.3]))
def test_scale_invariance(face, data, c):
    diff = data.draw(arrays(np.float64, face.shape, elements=st.floats(-0.5, 0.5)))
    if np.abs(diff).max() < 1e-6:
        return
    base = hardness_weights(face, face + diff)
    scaled = hardness_weights(face, face + c * diff)
    np.testing.assert_allclose(scaled, base, atol=1e-12)


@given(coords, st.data())
def test_permutation_equivariance(face, data):
    smooth = data.draw(arrays(np.float64, face.shape, elements=st.floats(0, 1)))
    perm = data.draw(st.permutations(range(face.size)))
    np.testing.assert_array_equal(hardness_weights(face[perm], smooth[perm]),
                                  hardness_weights(face, smooth)[perm])
