"""FLYMAT v1 text codec for dense and row-sparse matrices.

Layout::

    FLYMAT v1 <rows> <cols> <p|dense>
    <row 0>
    ...

Dense rows are whitespace-separated reals; sparse rows are ``idx:val`` pairs.
Reals are written with 17 significant digits, which round-trips float64
exactly.
"""

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from .errors import MatrixFormatError, ReportError
from .linalg import RowSparseMatrix, as_dense

logger = logging.getLogger(__name__)

MAGIC = 'FLYMAT'
VERSION = 'v1'

Matrix = Union[np.ndarray, RowSparseMatrix]


def format_real(value: float) -> str:
    return format(float(value), '.17g')


def dumps_matrix(matrix: Matrix) -> str:
    """Serialize a dense array or a :class:`RowSparseMatrix` to FLYMAT text."""
    lines: List[str] = []
    if isinstance(matrix, RowSparseMatrix):
        rows, cols = matrix.shape
        lines.append(f"{MAGIC} {VERSION} {rows} {cols} {matrix.nnz_per_row}")
        for idx_row, val_row in zip(matrix.indices, matrix.values):
            lines.append(' '.join(f"{int(i)}:{format_real(v)}" for i, v in zip(idx_row, val_row)))
    else:
        dense = as_dense(matrix)
        rows, cols = dense.shape
        lines.append(f"{MAGIC} {VERSION} {rows} {cols} dense")
        for row in dense:
            lines.append(' '.join(format_real(v) for v in row))
    return '\n'.join(lines) + '\n'


def _parse_real(token: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError as e:
        raise MatrixFormatError(f"line {line_no}: '{token}' is not a real number") from e


def loads_matrix(text: str) -> Matrix:
    """Parse FLYMAT text back into a dense array or a :class:`RowSparseMatrix`."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise MatrixFormatError('empty FLYMAT document')

    header = lines[0].split()
    if len(header) != 5 or header[0] != MAGIC or header[1] != VERSION:
        raise MatrixFormatError(f"bad header: '{lines[0]}'")
    try:
        rows, cols = int(header[2]), int(header[3])
    except ValueError as e:
        raise MatrixFormatError(f"bad dimensions in header: '{lines[0]}'") from e

    body = lines[1:]
    if len(body) != rows:
        raise MatrixFormatError(f"header declares {rows} rows, found {len(body)}")

    if header[4] == 'dense':
        data = np.empty((rows, cols), dtype=np.float64)
        for i, line in enumerate(body):
            tokens = line.split()
            if len(tokens) != cols:
                raise MatrixFormatError(f"line {i + 2}: expected {cols} values, found {len(tokens)}")
            data[i] = [_parse_real(token, i + 2) for token in tokens]
        return data

    try:
        per_row = int(header[4])
    except ValueError as e:
        raise MatrixFormatError(f"storage tag must be 'dense' or an integer, got '{header[4]}'") from e

    indices = np.empty((rows, per_row), dtype=np.int64)
    values = np.empty((rows, per_row), dtype=np.float64)
    for i, line in enumerate(body):
        pairs = line.split()
        if len(pairs) != per_row:
            raise MatrixFormatError(f"line {i + 2}: expected {per_row} entries, found {len(pairs)}")
        for j, pair in enumerate(pairs):
            idx, sep, val = pair.partition(':')
            if not sep:
                raise MatrixFormatError(f"line {i + 2}: entry '{pair}' is not idx:val")
            try:
                indices[i, j] = int(idx)
            except ValueError as e:
                raise MatrixFormatError(f"line {i + 2}: bad column index '{idx}'") from e
            values[i, j] = _parse_real(val, i + 2)
    return RowSparseMatrix(indices=indices, values=values, n_cols=cols)


def write_matrix(matrix: Matrix, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_matrix(matrix), encoding='utf-8')
    except OSError as e:
        raise ReportError(str(path), 'could not write matrix', e) from e
    logger.debug("Wrote FLYMAT matrix to %s", path)
    return path


def read_matrix(path: Union[str, Path]) -> Matrix:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ReportError(str(path), 'could not read matrix', e) from e
    try:
        return loads_matrix(text)
    except MatrixFormatError as e:
        raise ReportError(str(path), str(e), e) from e
