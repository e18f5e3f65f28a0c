"""Numerical core: projections, routing, adapters, training, merging and artifacts."""

from .adapters import AdapterConfig, AdapterVariant, build_adapter, count_activated_params
from .config_parser import ExperimentConfig, parse_experiment_config
from .linalg import RowSparseMatrix, SeededStream
from .merging import MergeSpec, merge_weight_average
from .projection import ProjectionSpec, make_sparse_projection
from .report_engine import ResultRow, emit_report, load_report
from .routing import BalanceState, select_topk
from .training import train_adapter

__all__ = [
    'AdapterConfig',
    'AdapterVariant',
    'BalanceState',
    'ExperimentConfig',
    'MergeSpec',
    'ProjectionSpec',
    'ResultRow',
    'RowSparseMatrix',
    'SeededStream',
    'build_adapter',
    'count_activated_params',
    'emit_report',
    'load_report',
    'make_sparse_projection',
    'merge_weight_average',
    'parse_experiment_config',
    'select_topk',
    'train_adapter',
]
