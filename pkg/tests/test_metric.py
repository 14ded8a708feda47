import numpy as np
import pytest

from ppnet import (CompiledModel, InputError, build_bio_model, channel_errors,
                   distance_from_errors, perceptual_distance)
from ppnet.model import with_param_vector
from ppnet.synthetic import distort, make_test_image


@pytest.fixture(scope="module")
def pair():
    ref = make_test_image(24, 24, seed=41)
    return ref, distort(ref, 0.08, seed=42, kind="noise")


class TestDistanceAxioms:
    def test_identity_of_indiscernibles(self, compiled_bio, pair):
        ref, _ = pair
        assert perceptual_distance(compiled_bio, ref, ref) <= 1e-12

    def test_symmetry(self, compiled_bio, pair):
        ref, dist = pair
        d1 = perceptual_distance(compiled_bio, ref, dist)
        d2 = perceptual_distance(compiled_bio, dist, ref)
        assert abs(d1 - d2) <= 1e-12
        assert d1 > 0

    def test_dimension_mismatch_raises(self, compiled_bio, pair):
        ref, _ = pair
        other = make_test_image(16, 16, seed=7)
        with pytest.raises(InputError):
            perceptual_distance(compiled_bio, ref, other)

    def test_doubling_scale_doubles_distance(self, bio_state, pair):
        ref, dist = pair
        d1 = perceptual_distance(bio_state, ref, dist)
        doubled = with_param_vector(bio_state, ("layer8",),
                                    2.0 * bio_state.params["layer8"]["b"])
        d2 = perceptual_distance(doubled, ref, dist)
        assert d2 == pytest.approx(2.0 * d1, rel=1e-12)


class TestChannelErrors:
    def test_identical_pair_gives_zero_vector(self, compiled_bio, pair):
        ref, _ = pair
        err = channel_errors(compiled_bio, ref, ref)
        np.testing.assert_array_equal(err.e, 0.0)

    def test_reconstruction_identity(self, compiled_bio, bio_state, pair):
        ref, dist = pair
        err = channel_errors(compiled_bio, ref, dist)
        d_direct = perceptual_distance(compiled_bio, ref, dist)
        d_cached = distance_from_errors(bio_state.params["layer8"]["b"], err)
        assert d_cached == pytest.approx(d_direct, rel=1e-10)

    def test_masking_chromatic_channels_removes_their_share(
            self, compiled_bio, bio_state, pair):
        ref, dist = pair
        err = channel_errors(compiled_bio, ref, dist)
        b = bio_state.params["layer8"]["b"].copy()
        b[64:] = 0.0
        expected = np.sqrt(np.sum(b[:64] ** 2 * err.e[:64]) / err.n)
        assert distance_from_errors(b, err) == pytest.approx(expected, rel=1e-12)

        masked_state = with_param_vector(bio_state, ("layer8",), b)
        d_masked = perceptual_distance(masked_state, ref, dist)
        assert d_masked == pytest.approx(distance_from_errors(b, err), rel=1e-10)

    def test_cached_distances_match_recomputation_for_many_scales(
            self, bio_state, rng):
        """The cache must agree with full forward recomputation for 100
        candidate scaling vectors."""
        ref = make_test_image(12, 12, seed=51)
        dist = distort(ref, 0.1, seed=52, kind="noise")
        err = channel_errors(bio_state, ref, dist)
        for _ in range(100):
            b = rng.uniform(0.0, 2.0, size=128)
            cached = distance_from_errors(b, err)
            full = perceptual_distance(
                with_param_vector(bio_state, ("layer8",), b), ref, dist)
            assert cached == pytest.approx(full, rel=1e-10, abs=1e-15)

    def test_monotone_in_scale_magnitude(self, compiled_bio, bio_state, pair):
        ref, dist = pair
        err = channel_errors(compiled_bio, ref, dist)
        b = np.ones(128)
        base = distance_from_errors(b, err)
        for c in range(0, 128, 17):
            bumped = b.copy()
            bumped[c] *= 3.0
            assert distance_from_errors(bumped, err) >= base
