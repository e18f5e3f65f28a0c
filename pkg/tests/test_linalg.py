"""Tests for dense/sparse primitives and seeded streams."""

import numpy as np
import pytest

from flylora.core.errors import DimensionError, InvalidParameterError
from flylora.core.linalg import (
    RowSparseMatrix,
    SeededStream,
    as_dense,
    densify,
    frobenius_inner,
    frobenius_norm,
    frozen_copy,
    spectral_norm,
    spmv,
    stable_key,
)


def test_frobenius_inner_examples():
    assert frobenius_inner(np.eye(2), np.eye(2)) == 2.0
    assert frobenius_inner([[1, 0], [0, 0]], [[0, 0], [0, 1]]) == 0.0
    assert frobenius_inner([[1, 2], [3, 4]], [[1, 2], [3, 4]]) == 30.0


def test_frobenius_inner_shape_mismatch():
    with pytest.raises(DimensionError):
        frobenius_inner(np.ones((2, 2)), np.ones((2, 3)))


def test_frobenius_norm_matches_inner():
    X = np.arange(6.0).reshape(2, 3)
    assert frobenius_norm(X) == pytest.approx(np.sqrt(frobenius_inner(X, X)))


def test_spectral_norm_zero_and_diagonal():
    assert spectral_norm(np.zeros((3, 3))) == 0.0
    assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, abs=1e-9)


def test_spectral_norm_matches_svd(rng):
    X = rng.standard_normal((8, 8))
    assert spectral_norm(X) == pytest.approx(np.linalg.svd(X, compute_uv=False)[0], abs=1e-6)


def test_spectral_norm_never_exceeds_frobenius(rng):
    for _ in range(10):
        X = rng.standard_normal((5, 7))
        assert spectral_norm(X) <= frobenius_norm(X) + 1e-12


def test_spmv_selector(selector):
    np.testing.assert_array_equal(spmv(selector, [2.0, 4.0]), [1.0, 2.0])
    np.testing.assert_array_equal(spmv(selector, [0.0, 0.0]), [0.0, 0.0])


def test_spmv_matches_dense(rng):
    indices = np.sort(np.stack([rng.choice(20, size=5, replace=False) for _ in range(6)]), axis=1)
    A = RowSparseMatrix(indices=indices, values=rng.standard_normal((6, 5)), n_cols=20)
    x = rng.standard_normal(20)
    np.testing.assert_allclose(spmv(A, x), A.to_dense() @ x, atol=1e-12)
    np.testing.assert_allclose(A.apply(x[None, :])[0], A.to_dense() @ x, atol=1e-12)


def test_spmv_wrong_length(selector):
    with pytest.raises(DimensionError):
        spmv(selector, [1.0, 2.0, 3.0])


def test_row_sparse_rejects_bad_rows():
    with pytest.raises(InvalidParameterError):
        RowSparseMatrix(indices=[[1, 0]], values=[[1.0, 1.0]], n_cols=3)
    with pytest.raises(DimensionError):
        RowSparseMatrix(indices=[[0, 5]], values=[[1.0, 1.0]], n_cols=3)
    with pytest.raises(InvalidParameterError):
        RowSparseMatrix(indices=[[0, 1]], values=[[1.0, np.nan]], n_cols=3)
    with pytest.raises(InvalidParameterError):
        RowSparseMatrix(indices=[[0, 1]], values=[[1.0, 1.0]], n_cols=2)


def test_row_sparse_is_read_only(selector):
    with pytest.raises(ValueError):
        selector.values[0, 0] = 2.0
    with pytest.raises(ValueError):
        selector.to_dense()[0, 0] = 2.0


def test_row_sparse_checksum_and_equality(selector):
    same = RowSparseMatrix(indices=[[0], [1]], values=[[0.5], [0.5]], n_cols=2)
    other = RowSparseMatrix(indices=[[0], [1]], values=[[0.5], [0.25]], n_cols=2)
    assert selector == same
    assert selector.checksum() == same.checksum()
    assert selector != other
    assert selector.checksum() != other.checksum()


def test_densify_accepts_both_forms(selector):
    np.testing.assert_array_equal(densify(selector), [[0.5, 0.0], [0.0, 0.5]])
    np.testing.assert_array_equal(densify([[1.0, 2.0]]), [[1.0, 2.0]])


def test_as_dense_rejects_non_finite():
    with pytest.raises(InvalidParameterError):
        as_dense([[np.inf]])
    with pytest.raises(DimensionError):
        as_dense([1.0, 2.0])


def test_frozen_copy_is_read_only():
    source = np.ones((2, 2))
    copy = frozen_copy(source)
    source[0, 0] = 5.0
    assert copy[0, 0] == 1.0
    with pytest.raises(ValueError):
        copy[0, 0] = 2.0


def test_seeded_stream_is_order_independent():
    stream = SeededStream(42, stream_id=3)
    first = stream.generator(1).standard_normal(4)
    stream.generator(2).standard_normal(100)
    np.testing.assert_array_equal(stream.generator(1).standard_normal(4), first)
    assert not np.array_equal(stream.generator(2).standard_normal(4), first)
    assert not np.array_equal(SeededStream(42, stream_id=4).generator(1).standard_normal(4), first)


def test_stable_key_is_deterministic():
    assert stable_key('flylora', 3) == stable_key('flylora', 3)
    assert stable_key('flylora', 3) != stable_key('flylora', 4)
    assert 0 <= stable_key('x') < 2 ** 63
