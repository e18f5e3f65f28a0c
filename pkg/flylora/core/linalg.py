"""Dense/sparse primitives, seeded randomness and norms.

Dense matrices are plain ``float64`` numpy arrays in row-major (C) order.
The frozen projection is a :class:`RowSparseMatrix` that stores exactly ``p``
entries per row, which is what makes ``spmv`` cost ``O(r * p)``.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionError, InvalidParameterError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeededStream:
    """Deterministic, splittable source of random draws.

    Draws come from numpy's counter-based Philox generator keyed by
    ``(seed, stream_id, *subkeys)`` through a ``SeedSequence`` spawn key, so the
    sequence depends only on those integers and never on call order.
    """

    seed: int
    stream_id: int = 0

    def generator(self, *subkeys: int) -> np.random.Generator:
        spawn_key = (self.stream_id & _MASK64,) + tuple(int(key) & _MASK64 for key in subkeys)
        sequence = np.random.SeedSequence(entropy=self.seed & _MASK64, spawn_key=spawn_key)
        return np.random.Generator(np.random.Philox(sequence))


def stable_key(*parts: object) -> int:
    """Map labels (variant ids, task ids) to a platform-stable 63-bit stream id."""
    text = '\x1f'.join(str(part) for part in parts).encode('utf-8')
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), 'big') >> 1


def as_dense(data, name: str = 'matrix') -> np.ndarray:
    """Validate and return a finite 2-D float64 array."""
    array = np.asarray(data, dtype=np.float64)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return array


def as_vector(data, length: Optional[int] = None, name: str = 'vector') -> np.ndarray:
    array = np.asarray(data, dtype=np.float64)
    if array.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {array.shape}")
    if length is not None and array.shape[0] != length:
        raise DimensionError(f"{name} has length {array.shape[0]}, expected {length}")
    return array


def frozen_copy(array: np.ndarray) -> np.ndarray:
    """Return a read-only C-contiguous copy."""
    copy = np.array(array, dtype=np.float64, order='C', copy=True)
    copy.setflags(write=False)
    return copy


@dataclass(frozen=True, eq=False)
class RowSparseMatrix:
    """``r x n`` matrix with exactly ``p`` stored entries per row.

    ``indices`` is an ``(r, p)`` integer array whose rows are strictly
    increasing column positions; ``values`` holds the matching reals.
    Both arrays are stored read-only.
    """

    indices: np.ndarray
    values: np.ndarray
    n_cols: int
    _dense: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        indices = np.array(self.indices, dtype=np.int64, copy=True)
        values = np.array(self.values, dtype=np.float64, copy=True)
        if indices.ndim != 2 or values.shape != indices.shape:
            raise DimensionError(
                f"indices {indices.shape} and values {values.shape} must share an (r, p) shape"
            )
        rows, per_row = indices.shape
        if rows < 1 or per_row < 1:
            raise InvalidParameterError('sparse matrix needs at least one row and one entry per row')
        if per_row >= self.n_cols:
            raise InvalidParameterError(f"p={per_row} must be smaller than n={self.n_cols}")
        if indices.min() < 0 or indices.max() >= self.n_cols:
            raise DimensionError(f"column indices must lie in [0, {self.n_cols})")
        if per_row > 1 and not np.all(np.diff(indices, axis=1) > 0):
            raise InvalidParameterError('column indices must be strictly increasing within each row')
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError('sparse values must be finite')
        indices.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, 'indices', indices)
        object.__setattr__(self, 'values', values)

    @property
    def n_rows(self) -> int:
        return self.indices.shape[0]

    @property
    def nnz_per_row(self) -> int:
        return self.indices.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    def to_dense(self) -> np.ndarray:
        if self._dense is None:
            dense = np.zeros(self.shape, dtype=np.float64)
            rows = np.arange(self.n_rows)[:, None]
            dense[rows, self.indices] = self.values
            dense.setflags(write=False)
            object.__setattr__(self, '_dense', dense)
        return self._dense

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Batched product: rows of ``X`` (``batch x n``) mapped to ``batch x r``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_cols:
            raise DimensionError(f"batch must have shape (*, {self.n_cols}), got {X.shape}")
        return np.einsum('rp,brp->br', self.values, X[:, self.indices])

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.int64(self.n_cols).tobytes())
        digest.update(self.indices.tobytes())
        digest.update(self.values.tobytes())
        return digest.hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RowSparseMatrix):
            return NotImplemented
        return (
            self.n_cols == other.n_cols
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


def frobenius_inner(X, Y) -> float:
    """Return ``sum_ij X_ij * Y_ij``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise DimensionError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return float(np.vdot(X, Y))


def frobenius_norm(X) -> float:
    return float(np.linalg.norm(np.asarray(X, dtype=np.float64)))


def spectral_norm(X, iters: int = 1000, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``X^T X``.

    Returns ``||X v||`` for the final unit iterate ``v``, which never exceeds
    the true spectral norm (and hence the Frobenius norm).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise DimensionError(f"spectral_norm needs a nonempty 2-D matrix, got shape {X.shape}")
    if iters < 1:
        raise InvalidParameterError('iters must be at least 1')
    if not np.any(X):
        return 0.0

    v = SeededStream(seed).generator().standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    estimate = float(np.linalg.norm(X @ v))
    for _ in range(iters):
        u = X.T @ (X @ v)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
        previous, estimate = estimate, float(np.linalg.norm(X @ v))
        if abs(estimate - previous) <= tol * max(estimate, np.finfo(np.float64).tiny):
            break
    return estimate


def spmv(A: RowSparseMatrix, x) -> np.ndarray:
    """``y_i = sum over stored entries of row i of value * x[index]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.n_cols:
        raise DimensionError(f"x has shape {x.shape}, expected ({A.n_cols},)")
    return np.einsum('rp,rp->r', A.values, x[A.indices])


def densify(A) -> np.ndarray:
    """Dense view of either a sparse projection or an already dense matrix."""
    if isinstance(A, RowSparseMatrix):
        return A.to_dense()
    return as_dense(A)

