"""Tests for weight-average merging and interference measures."""

import numpy as np
import pytest

from flylora.core.adapters import AdapterConfig, build_adapter
from flylora.core.errors import DegenerateInputError, DimensionError, InvalidParameterError
from flylora.core.merging import (
    InterferenceReport,
    MergeSpec,
    cross_term_scaling,
    interference_report,
    linear_cka,
    merge_weight_average,
    merged_norm_decomposition,
    pairwise_matrix,
    pairwise_task_orthogonality,
)

FIRST = np.array([[2.0, 0.0], [0.0, 0.0]])
SECOND = np.array([[0.0, 0.0], [0.0, 4.0]])


def test_average_of_two_updates():
    merged = merge_weight_average(MergeSpec([FIRST, SECOND]))
    np.testing.assert_allclose(merged, [[1.0, 0.0], [0.0, 2.0]])


def test_explicit_weights():
    merged = merge_weight_average(MergeSpec([FIRST, SECOND], weights=[1.0, 0.25]))
    np.testing.assert_allclose(merged, [[2.0, 0.0], [0.0, 1.0]])


def test_identical_updates_merge_to_themselves(rng):
    update = rng.standard_normal((4, 6))
    np.testing.assert_allclose(merge_weight_average(MergeSpec([update] * 3)), update, atol=1e-15)


def test_merge_is_linear(rng):
    updates = [rng.standard_normal((3, 5)) for _ in range(3)]
    w = np.array([0.2, 0.5, 0.3])
    expected = sum(wi * u for wi, u in zip(w, updates))
    np.testing.assert_allclose(merge_weight_average(MergeSpec(updates, weights=w)), expected, atol=1e-14)


def test_adapters_merge_through_their_scaled_updates(rng):
    config = AdapterConfig(m=4, n=16, r=4, k=2, variant='flylora')
    adapters = [build_adapter(config, seed=0, key=f"task{i}") for i in range(2)]
    for adapter in adapters:
        adapter.B[...] = rng.standard_normal(adapter.B.shape)
    merged = merge_weight_average(MergeSpec(adapters))
    expected = 0.5 * (adapters[0].delta_weight() + adapters[1].delta_weight())
    np.testing.assert_allclose(merged, expected, atol=1e-14)


def test_merge_spec_validation():
    with pytest.raises(InvalidParameterError):
        MergeSpec([FIRST])
    with pytest.raises(DimensionError):
        MergeSpec([FIRST, np.zeros((3, 2))])
    with pytest.raises(InvalidParameterError):
        MergeSpec([FIRST, SECOND], weights=[1.0])
    with pytest.raises(InvalidParameterError):
        MergeSpec([FIRST, SECOND], weights=[1.0, np.nan])


def test_pairwise_orthogonality(rng):
    update = rng.standard_normal((4, 4))
    assert pairwise_task_orthogonality(update, update) == pytest.approx(1.0)
    assert pairwise_task_orthogonality(update, -2.0 * update) == pytest.approx(-1.0)
    assert pairwise_task_orthogonality(FIRST, SECOND) == 0.0
    with pytest.raises(DegenerateInputError):
        pairwise_task_orthogonality(FIRST, np.zeros((2, 2)))


def test_pairwise_matrix():
    P = pairwise_matrix([FIRST, SECOND, FIRST])
    np.testing.assert_allclose(P, [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])


def test_norm_decomposition():
    disjoint = merged_norm_decomposition(MergeSpec([FIRST, SECOND]))
    assert disjoint.cross_term == 0.0
    assert disjoint.cross_term_fraction == 0.0
    assert disjoint.merged_sq_norm == pytest.approx(disjoint.weighted_sq_sum)

    same = merged_norm_decomposition(MergeSpec([FIRST, FIRST]))
    assert same.cross_term_fraction == pytest.approx(1.0)
    assert same.merged_sq_norm == pytest.approx(same.weighted_sq_sum + same.cross_term)


def test_linear_cka(rng):
    X = rng.standard_normal((50, 6))
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    assert linear_cka(X, X) == pytest.approx(1.0)
    assert linear_cka(X, 3.0 * X @ Q) == pytest.approx(1.0)
    assert 0.0 <= linear_cka(X, rng.standard_normal((50, 4))) < 1.0
    with pytest.raises(DimensionError):
        linear_cka(X, X[:10])
    with pytest.raises(DegenerateInputError):
        linear_cka(X, np.ones((50, 2)))


def test_interference_report():
    report = interference_report(MergeSpec([FIRST, SECOND]), ['a', 'b'])
    assert report.pairwise == [[1.0, 0.0], [0.0, 1.0]]
    assert report.mean_abs_pairwise == 0.0
    assert report.weights == [0.5, 0.5]
    assert report.to_dict()['tasks'] == ['a', 'b']


def test_delta_pct_sign_convention():
    mse = InterferenceReport(['a'], [1.0], [[1.0]], 0.0, 1.0, 1.0,
                             before={'a': 1.0}, after={'a': 1.5}, metric='mse')
    assert mse.delta_pct == {'a': pytest.approx(50.0)}
    accuracy = InterferenceReport(['a'], [1.0], [[1.0]], 0.0, 1.0, 1.0,
                                  before={'a': 0.8}, after={'a': 0.6}, metric='accuracy')
    assert accuracy.delta_pct == {'a': pytest.approx(25.0)}
    assert accuracy.mean_delta_pct == pytest.approx(25.0)


def test_cross_terms_shrink_with_width():
    fractions = cross_term_scaling([64, 1024], r=16, rho=0.25, pairs=20, seed=0)
    assert set(fractions) == {64, 1024}
    assert fractions[1024] < fractions[64]
    with pytest.raises(InvalidParameterError):
        cross_term_scaling([64], pairs=0)
