"""Result rows and the CSV/JSON artifacts built from them."""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidParameterError, ReportError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

METRICS = (
    'mse',
    'accuracy',
    'param-count',
    'energy-q25',
    'offdiag-corr',
    'cross-term-fraction',
    'delta-pct',
    'pairwise-cosine',
)


class Phase(str, Enum):
    BEFORE_MERGE = 'before-merge'
    AFTER_MERGE = 'after-merge'


class ReportFormat(str, Enum):
    CSV = 'csv'
    JSON = 'json'


@dataclass(frozen=True)
class ResultRow:
    variant: str
    task: str
    seed: int
    metric: str
    phase: str
    value: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise InvalidParameterError(f"unknown metric '{self.metric}'")
        object.__setattr__(self, 'phase', Phase(self.phase).value)
        object.__setattr__(self, 'seed', int(self.seed))
        object.__setattr__(self, 'value', float(self.value))


COLUMNS = tuple(f.name for f in fields(ResultRow))


def _format_value(value: float) -> str:
    return repr(float(value))


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([row.variant, row.task, row.seed, row.metric, row.phase, _format_value(row.value)])
    return buffer.getvalue()


def rows_to_json(rows: Iterable[ResultRow]) -> str:
    return json.dumps([asdict(row) for row in rows], indent=2) + '\n'


def _write_text(text: str, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding='utf-8')
    except OSError as e:
        raise ReportError(str(path), f"cannot write: {e.strerror or e}", e) from e
    logger.info("Wrote %s", path)
    return path


def emit_report(rows: Sequence[ResultRow], path: PathLike, fmt: Union[str, ReportFormat] = ReportFormat.CSV) -> Path:
    """Write ``rows`` in the given order.

    CSV columns are ``variant,task,seed,metric,phase,value``; reals are written
    with ``repr`` so they round-trip exactly. JSON is an array of objects
    with the same keys.
    """
    fmt = ReportFormat(fmt)
    text = rows_to_csv(rows) if fmt is ReportFormat.CSV else rows_to_json(rows)
    return _write_text(text, path)


def load_report(path: PathLike) -> List[ResultRow]:
    """Read a CSV or JSON report back, choosing the parser from the suffix."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ReportError(str(path), f"cannot read: {e.strerror or e}", e) from e
    try:
        if path.suffix.lower() == '.json':
            return [ResultRow(**item) for item in json.loads(text)]
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [
            ResultRow(
                variant=item['variant'], task=item['task'], seed=int(item['seed']),
                metric=item['metric'], phase=item['phase'], value=float(item['value']),
            )
            for item in reader
        ]
    except (ValueError, TypeError, KeyError) as e:
        raise ReportError(str(path), f"malformed report: {e}", e) from e


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Enum):
        return obj.value
    return obj


def write_json(obj: Any, path: PathLike) -> Path:
    """Deterministic JSON: sorted keys, numpy values converted to plain Python."""
    return _write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + '\n', path)


def write_trace_csv(trace, path: PathLike) -> Path:
    """Per-epoch trace with columns ``epoch,train_loss,eval_loss,histogram``.

    The histogram cell holds the per-rank assignment counts joined by ``;``.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['epoch', 'train_loss', 'eval_loss', 'histogram'])
    for record in trace.records:
        writer.writerow([
            record.epoch,
            _format_value(record.train_loss),
            _format_value(record.eval_loss),
            ';'.join(str(c) for c in record.histogram),
        ])
    return _write_text(buffer.getvalue(), path)


def summarize_rows(rows: Iterable[ResultRow]) -> List[Dict[str, Any]]:
    """Mean and spread of each (variant, metric, phase) over tasks and seeds."""
    groups: Dict[Tuple[str, str, str], List[float]] = {}
    for row in rows:
        groups.setdefault((row.variant, row.metric, row.phase), []).append(row.value)
    summary = []
    for (variant, metric, phase), values in groups.items():
        arr = np.asarray(values)
        summary.append({
            'variant': variant,
            'metric': metric,
            'phase': phase,
            'count': int(arr.size),
            'mean': float(arr.mean()),
            'std': float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        })
    return summary
