import collections
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gcpreg import similarity
from gcpreg.errors import DegenerateHistogram, SizeMismatch, ZeroVariance
from gcpreg.similarity import JointHistogram, cra, entropy, mutual_information, ncc, ssd

windows = arrays(np.int64, (6, 6), elements=st.integers(0, 255))
pairs = st.tuples(windows, windows)


def cra_oracle(r, s, bins, max_value):
    """Straight transcription with Counters, independent of JointHistogram."""
    b = lambda v: int(v) * bins // (max_value + 1)  # noqa: E731
    r = [b(v) for v in np.ravel(r)]
    s = [b(v) for v in np.ravel(s)]
    joint = collections.Counter(zip(r, s))
    hr = collections.Counter(r)
    hs = collections.Counter(s)
    p = len(r)
    phi = sum(c * c for c in joint.values())
    f = math.sqrt(sum(c * c for c in hr.values()) * sum(c * c for c in hs.values()))
    return (phi / f - f / p ** 2) / (1 - f / p ** 2)


class TestSSD:
    def test_identical(self):
        w = np.arange(9).reshape(3, 3)
        assert ssd(w, w) == 0

    def test_hand_values(self):
        assert ssd([[1, 2], [3, 4]], [[1, 2], [3, 5]]) == 1
        assert ssd([[0, 0], [0, 0]], [[2, 2], [2, 2]]) == 16

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            ssd(np.zeros((3, 3)), np.zeros((2, 2)))

    @given(pairs)
    def test_zero_iff_equal(self, pair):
        r, s = pair
        assert (ssd(r, s) == 0) == bool(np.array_equal(r, s))


class TestNCC:
    def test_identities(self, rng):
        r = rng.integers(0, 256, (11, 11))
        assert ncc(r, r) == pytest.approx(1.0, abs=1e-12)
        assert ncc(3 * r + 7, r) == pytest.approx(1.0, abs=1e-12)
        assert ncc(r, 255 - r) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance) as exc:
            ncc(np.full((3, 3), 7), np.arange(9).reshape(3, 3))
        assert exc.value.which == "reference"
        with pytest.raises(ZeroVariance) as exc:
            ncc(np.arange(9).reshape(3, 3), np.zeros((3, 3)))
        assert exc.value.which == "sensed"

    @given(pairs)
    def test_range_and_symmetry(self, pair):
        r, s = pair
        try:
            v = ncc(r, s)
        except ZeroVariance:
            return
        assert -1.0 <= v <= 1.0
        assert ncc(s, r) == v


class TestCRA:
    def test_identical_two_level_window(self):
        w = np.array([[0, 0, 200], [200, 0, 200], [0, 0, 0]])
        assert cra(w, w, bins=4) == pytest.approx(1.0, abs=1e-12)
        assert cra_oracle(w, w, 4, 255) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateHistogram):
            cra(np.full((3, 3), 5), np.full((3, 3), 9), bins=8)

    def test_matches_oracle(self, rng):
        for _ in range(50):
            r = rng.integers(0, 256, (5, 5))
            s = rng.integers(0, 256, (5, 5))
            assert cra(r, s, 8) == pytest.approx(cra_oracle(r, s, 8, 255), rel=1e-12)

    def test_bin_permutation_invariance(self, rng):
        bins = 4
        r = rng.integers(0, bins, (4, 4))
        s = rng.integers(0, bins, (4, 4))
        perm = rng.permutation(bins)
        base = cra(r, s, bins, max_value=bins - 1)
        assert cra(perm[r], perm[s], bins, max_value=bins - 1) == pytest.approx(base, rel=1e-12)
        assert cra_oracle(perm[r], perm[s], bins, bins - 1) == pytest.approx(base, rel=1e-12)

    @given(pairs)
    def test_symmetric(self, pair):
        r, s = pair
        try:
            v = cra(r, s, 16)
        except DegenerateHistogram:
            return
        assert cra(s, r, 16) == pytest.approx(v, rel=1e-12, abs=1e-12)


class TestMI:
    def test_self_information(self, rng):
        w = rng.integers(0, 256, (11, 11))
        h = entropy(JointHistogram.from_windows(w, w, 64).reference_marginal)
        assert mutual_information(w, w, 64) == pytest.approx(h, abs=1e-12)

    def test_constant_window(self, rng):
        w = rng.integers(0, 256, (5, 5))
        assert mutual_information(w, np.full((5, 5), 9)) == 0.0
        assert mutual_information(np.full((5, 5), 9), w) == 0.0

    def test_independent_uniform(self):
        r = [[0, 0], [255, 255]]
        s = [[0, 255], [0, 255]]
        jh = JointHistogram.from_windows(r, s, bins=2)
        np.testing.assert_array_equal(jh.counts, [[1, 1], [1, 1]])
        assert entropy(jh.reference_marginal) == pytest.approx(1.0)
        assert entropy(jh.counts) == pytest.approx(2.0)
        assert mutual_information(r, s, bins=2) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=200)
    @given(pairs)
    def test_bounds_and_symmetry(self, pair):
        r, s = pair
        jh = JointHistogram.from_windows(r, s, 16)
        mi = mutual_information(r, s, 16)
        hr, hs = entropy(jh.reference_marginal), entropy(jh.sensed_marginal)
        assert 0.0 <= mi <= min(hr, hs) + 1e-12
        assert mutual_information(s, r, 16) == pytest.approx(mi, abs=1e-12)


@given(pairs, st.integers(2, 64))
def test_joint_histogram_marginals(pair, bins):
    r, s = pair
    jh = JointHistogram.from_windows(r, s, bins)
    assert jh.total == r.size
    assert (jh.counts >= 0).all()
    np.testing.assert_array_equal(jh.reference_marginal, np.bincount(similarity.bin_index(r, bins, 255).ravel(), minlength=bins))
    np.testing.assert_array_equal(jh.sensed_marginal, np.bincount(similarity.bin_index(s, bins, 255).ravel(), minlength=bins))


def test_bin_index_mapping():
    np.testing.assert_array_equal(similarity.bin_index([0, 3, 4, 255], 64, 255), [0, 0, 1, 63])
    np.testing.assert_array_equal(similarity.bin_index([0, 1023], 64, 1023), [0, 63])
    with pytest.raises(ValueError):
        similarity.bin_index([0], 1, 255)


def test_entropy_convention():
    assert entropy([0, 0, 4]) == 0.0
    assert entropy([1, 1, 1, 1]) == pytest.approx(2.0)
    assert entropy([]) == 0.0


def test_evaluate_dispatch():
    r = np.arange(9).reshape(3, 3)
    assert similarity.evaluate("ssd", r, r) == 0
    assert similarity.evaluate("ncc", r, r) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        similarity.evaluate("sad", r, r)
