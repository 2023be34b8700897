import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import reference as ref
from caproute.analysis import (
    accuracy_report,
    class_mean_correlations,
    gt_columns,
    gt_correlation_matrix,
    master_class_correlations,
    pearson,
    tuning_curves,
)
from caproute.errors import DimensionError, MissingClassError, ValidationError
from caproute.master import build_master, route_dataset
from caproute.routing import RoutingConfig, fast_route

vectors = arrays(np.float64, st.integers(2, 30), elements=st.floats(-100, 100))
# the naive loop oracle squares raw deviations, so keep it away from underflow
moderate = arrays(np.float64, st.integers(2, 30), elements=st.floats(-100, 100).map(lambda v: round(v, 6)))


class TestPearson:
    def test_self(self):
        assert pearson([1.0, 4.0, 2.0], [1.0, 4.0, 2.0]) == pytest.approx(1.0, abs=1e-15)

    def test_anti(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)

    def test_hand_value(self):
        # centred x = (-1, 0, 1), centred y = (-4/3, -1/3, 5/3): r = 3 / sqrt(2 * 42/9)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(9 / math.sqrt(84), abs=1e-15)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)

    def test_zero_variance(self):
        assert pearson([2, 2, 2], [1, 2, 3]) == 0.0
        assert pearson([1, 2, 3], [0.1, 0.1, 0.1]) == 0.0

    def test_errors(self):
        with pytest.raises(DimensionError):
            pearson([1, 2], [1, 2, 3])
        with pytest.raises(DimensionError):
            pearson([1], [1])

    @given(vectors, st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 1000))
    def test_positive_affine_invariance(self, x, alpha, beta, seed):
        y = np.random.default_rng(seed).standard_normal(x.size)
        if np.ptp(x) < 1e-3:
            return
        assert pearson(alpha * x + beta, y) == pytest.approx(pearson(x, y), abs=1e-12)

    @given(vectors, st.integers(0, 1000))
    def test_bounded(self, x, seed):
        y = np.random.default_rng(seed).standard_normal(x.size)
        assert -1 <= pearson(x, y) <= 1

    def test_tiny_values(self):
        assert pearson([3e-229, 0.0], [1.0, 0.0]) == 1.0
        assert pearson([1e300, -1e300, 0.0], [1.0, -1.0, 0.0]) == pytest.approx(1.0, abs=1e-15)

    @given(moderate, st.integers(0, 1000))
    def test_matches_reference(self, x, seed):
        y = np.random.default_rng(seed).standard_normal(x.size)
        r = pearson(x, y)
        assert -1 <= r <= 1
        assert r == pytest.approx(ref.pearson(x.tolist(), y.tolist()), abs=1e-12)


def _routed(small_planted):
    train, _ = small_planted
    coeffs, outputs = route_dataset(train, RoutingConfig())
    return train, coeffs, outputs


class TestCorrelations:
    def test_gt_matrix_diag_and_symmetry(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        r = gt_correlation_matrix(coeffs, train.labels, first=20)
        assert r.values.shape == (20, 20) and r.symmetric
        np.testing.assert_allclose(np.diag(r.values), 1.0, atol=1e-12)
        np.testing.assert_allclose(r.values, r.values.T, atol=1e-12)
        assert np.all(np.abs(r.values) <= 1)

    def test_gt_matrix_against_loop(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        r = gt_correlation_matrix(coeffs, train.labels, first=8).values
        cols = gt_columns(coeffs[:8], train.labels[:8])
        for a in range(8):
            for b in range(8):
                assert r[a, b] == pytest.approx(ref.pearson(cols[a].tolist(), cols[b].tolist()), abs=1e-12)

    def test_identical_examples(self, rng):
        m = rng.random((5, 3))
        r = gt_correlation_matrix(np.stack([m, m]), [1, 1])
        assert r.values[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_intra_beats_inter(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        r = gt_correlation_matrix(coeffs, train.labels).values
        same = train.labels[:, None] == train.labels[None, :]
        off = ~np.eye(len(train), dtype=bool)
        assert r[same & off].mean() > r[~same].mean()

    def test_class_mean_against_loop(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        cm = class_mean_correlations(coeffs, train.labels, 4).values
        cols = gt_columns(coeffs, train.labels)
        for a in range(4):
            for b in range(4):
                pairs = [
                    ref.pearson(cols[x].tolist(), cols[y].tolist())
                    for x in np.flatnonzero(train.labels == a)
                    for y in np.flatnonzero(train.labels == b)
                    if x != y
                ]
                assert cm[a, b] == pytest.approx(np.mean(pairs), abs=1e-12)

    def test_class_mean_consistent_with_gt_matrix(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        cm = class_mean_correlations(coeffs, train.labels, 4).values
        for k in range(4):
            idx = np.flatnonzero(train.labels == k)
            block = gt_correlation_matrix(coeffs[idx], train.labels[idx]).values
            n = idx.size
            assert cm[k, k] == pytest.approx((block.sum() - np.trace(block)) / (n * (n - 1)), abs=1e-12)

    def test_class_mean_identical_class(self, rng):
        m = rng.random((6, 2))
        coeffs = np.stack([m, m, m, rng.random((6, 2)), rng.random((6, 2))])
        cm = class_mean_correlations(coeffs, [0, 0, 0, 1, 1], 2)
        assert cm.values[0, 0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(cm.values, cm.values.T, atol=1e-12)

    def test_class_mean_independent_classes(self, rng):
        coeffs = rng.random((400, 500, 2))
        cm = class_mean_correlations(coeffs, np.arange(400) % 2, 2).values
        assert abs(cm[0, 1]) < 0.01

    def test_class_mean_needs_two(self, rng):
        with pytest.raises(ValidationError):
            class_mean_correlations(rng.random((3, 4, 2)), [0, 0, 1], 2)

    def test_master_corr_single_example_diag(self, small_planted):
        train, _ = small_planted
        first = train.subset(np.arange(4))
        master = build_master(first)
        coeffs, _ = route_dataset(first, RoutingConfig())
        r = master_class_correlations(master, coeffs, first.labels, 4)
        assert not r.symmetric
        np.testing.assert_allclose(np.diag(r.values), 1.0, atol=1e-12)

    def test_master_corr_constant_column(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        master = np.full(coeffs.shape[1:], 0.3)
        np.testing.assert_array_equal(master_class_correlations(master, coeffs, train.labels, 4).values, 0.0)

    def test_master_corr_shape_mismatch(self, small_planted):
        train, coeffs, _ = _routed(small_planted)
        with pytest.raises(DimensionError):
            master_class_correlations(np.ones((3, 4)), coeffs, train.labels, 4)


class TestTuning:
    def test_single_example(self):
        v = np.array([[[0.0, 0.2], [0.5, 0.0], [0.0, 0.0]]])
        np.testing.assert_allclose(tuning_curves(v, [0], 1).values, [[0.2, 0.5, 0.0]])

    def test_zero(self):
        assert np.all(tuning_curves(np.zeros((4, 3, 2)), [0, 1, 2, 0], 3).values == 0)

    def test_planted_peaks(self, small_planted):
        train, _, outputs = _routed(small_planted)
        curves = tuning_curves(outputs, train.labels, 4).values
        np.testing.assert_array_equal(curves.argmax(axis=1), np.arange(4))
        assert np.all((curves >= 0) & (curves < 1))

    def test_fast_peaks(self, small_planted):
        train, test = small_planted
        outputs = fast_route(test.predictions, build_master(train))
        np.testing.assert_array_equal(tuning_curves(outputs, test.labels, 4).values.argmax(axis=1), np.arange(4))

    def test_missing_class(self):
        with pytest.raises(MissingClassError):
            tuning_curves(np.zeros((2, 3, 2)), [0, 0], 2)


class TestAccuracy:
    def test_perfect(self):
        assert accuracy_report([0, 1, 2], [0, 1, 2]).overall == 1.0

    def test_disjoint(self):
        assert accuracy_report([1, 0], [0, 1]).overall == 0.0

    def test_three_quarters(self):
        rep = accuracy_report([0, 1, 1, 0], [0, 1, 0, 0])
        assert rep.overall == 0.75
        np.testing.assert_allclose(rep.per_class, [2 / 3, 1.0])
        np.testing.assert_array_equal(rep.counts, [3, 1])

    def test_empty_class_is_nan(self):
        rep = accuracy_report([0, 0], [0, 0], n_classes=2)
        assert np.isnan(rep.per_class[1])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            accuracy_report([0, 1], [0])


def test_planted_overlap_shows_in_class_means():
    from caproute.synth import PlantedSpec, generate_planted

    train, _ = generate_planted(PlantedSpec(overlap=0.5, per_class_train=30, per_class_test=0, seed=0))
    coeffs, _ = route_dataset(train, RoutingConfig())
    cm = class_mean_correlations(coeffs, train.labels, 10).values
    adjacent = np.zeros((10, 10), dtype=bool)
    adjacent[np.arange(1, 10), np.arange(9)] = True
    adjacent |= adjacent.T
    others = ~adjacent & ~np.eye(10, dtype=bool)
    assert cm[adjacent].mean() > cm[others].mean() + 0.05
    assert cm[0, 1] > cm[others].mean() + 0.05
