"""Concrete experiment steps: task preparation, grid training, diagnostics, merging, artifacts."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.adapters import Adapter, build_adapter, count_activated_params
from ..core.checkpoint import save_checkpoint
from ..core.config_parser import ExperimentConfig, GridEntry
from ..core.diagnostics import activation_energy_profile
from ..core.errors import FlyLoRAError
from ..core.merging import MergeSpec, interference_report, merge_weight_average
from ..core.report_engine import Phase, ResultRow, emit_report, write_json, write_trace_csv
from ..core.tasks import ToyTask, make_task_family
from ..core.training import (
    Evaluation,
    TrainingTrace,
    evaluate_adapter,
    evaluate_weight,
    gradient_correlation_matrix,
    train_adapter,
)
from .base_action import ActionContext, ActionError, BaseAction

logger = logging.getLogger(__name__)

BEFORE = Phase.BEFORE_MERGE.value
AFTER = Phase.AFTER_MERGE.value


@dataclass
class CellResult:
    """One trained (grid entry, task, seed) cell."""
    entry: GridEntry
    task: ToyTask
    seed: int
    adapter: Adapter
    trace: TrainingTrace
    evaluation: Evaluation

    @property
    def metric(self) -> Tuple[str, float]:
        if self.task.is_classification:
            return 'accuracy', self.evaluation.accuracy
        return 'mse', self.evaluation.mse


def _map(func, items, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def _targets(task: ToyTask, Y: np.ndarray) -> np.ndarray:
    if task.is_classification:
        return np.eye(task.m)[Y]
    return Y


class PrepareTasksAction(BaseAction):
    """Draws one task family per seed; tasks depend only on (task spec, seed)."""

    def __init__(self):
        super().__init__('prepare_tasks', 'Generate synthetic tasks for every seed')

    def execute(self, context: ActionContext) -> ActionContext:
        config: ExperimentConfig = context.config
        spec = config.task
        try:
            tasks = {
                seed: make_task_family(
                    spec.kind, spec.n, spec.m, spec.samples, spec.noise, spec.tasks,
                    spec.shared_fraction, seed, input_correlation=spec.input_correlation,
                )
                for seed in config.seeds
            }
        except FlyLoRAError as e:
            raise ActionError(self.name, str(e), e) from e
        context.update({'tasks': tasks, 'rows': context.get('rows', [])})
        return context


class TrainGridAction(BaseAction):
    """Trains every grid entry on every task and seed.

    The projection draw and the shuffling order are keyed by (task, seed) and
    shared across entries, so variants are compared on paired randomness.
    """

    def __init__(self, grid: Optional[List[GridEntry]] = None):
        super().__init__('train_grid', 'Train each variant on each task and seed')
        self.grid = grid

    def get_required_inputs(self) -> List[str]:
        return ['tasks']

    def _cells(self, context: ActionContext) -> List[Tuple[GridEntry, ToyTask, int]]:
        config: ExperimentConfig = context.config
        grid = self.grid if self.grid is not None else config.grid
        return [
            (entry, task, seed)
            for entry in grid
            for seed in config.seeds
            for task in context.get('tasks')[seed]
        ]

    def execute(self, context: ActionContext) -> ActionContext:
        config: ExperimentConfig = context.config
        cells = self._cells(context)
        if not cells:
            raise ActionError(self.name, 'the variant grid is empty')

        def run(cell: Tuple[GridEntry, ToyTask, int]) -> CellResult:
            entry, task, seed = cell
            try:
                adapter = build_adapter(config.adapter_config(entry), seed, W0=task.base, key=task.name)
                trace = train_adapter(
                    adapter, task, config.epochs, config.lr, seed,
                    batch_size=config.batch_size, momentum=config.momentum,
                    input_lr_scale=config.input_lr_scale,
                )
                trace.variant = entry.id
                return CellResult(entry, task, seed, adapter, trace, evaluate_adapter(adapter, task))
            except FlyLoRAError as e:
                raise ActionError(self.name, f"{entry.id} on {task.name} (seed {seed}): {e}", e) from e

        results = _map(run, cells, config.threads)
        rows: List[ResultRow] = context.get('rows', [])
        for cell in results:
            metric, value = cell.metric
            rows.append(ResultRow(cell.entry.id, cell.task.name, cell.seed, metric, BEFORE, value))
            rows.append(ResultRow(
                cell.entry.id, cell.task.name, cell.seed, 'param-count', BEFORE,
                count_activated_params(cell.adapter.config),
            ))
        logger.info("Trained %d cells", len(results))
        context.update({'cells': results, 'rows': rows})
        return context


class DiagnosticsAction(BaseAction):
    """Energy profile at the top quarter of dimensions and gradient correlation per cell."""

    def __init__(self):
        super().__init__('diagnostics', 'Energy profile and gradient correlation diagnostics')

    def get_required_inputs(self) -> List[str]:
        return ['cells']

    def execute(self, context: ActionContext) -> ActionContext:
        config: ExperimentConfig = context.config
        rows: List[ResultRow] = context.get('rows', [])
        for cell in context.get('cells'):
            X = cell.task.X_test
            profile = activation_energy_profile(cell.adapter, X)
            rows.append(ResultRow(cell.entry.id, cell.task.name, cell.seed, 'energy-q25', BEFORE,
                                  profile.at_fraction(0.25)))
            columns = min(config.corr_columns, cell.adapter.config.r)
            corr = gradient_correlation_matrix(
                cell.adapter, X, _targets(cell.task, cell.task.Y_test), columns=columns, seed=cell.seed,
                mode=config.corr_mode,
            )
            rows.append(ResultRow(cell.entry.id, cell.task.name, cell.seed, 'offdiag-corr', BEFORE,
                                  corr.mean_abs_offdiag))
        context.set('rows', rows)
        return context


class MergeAction(BaseAction):
    """Weight-averages each (entry, seed) group of task adapters and re-evaluates every task."""

    def __init__(self):
        super().__init__('merge', 'Merge task adapters and measure interference')

    def get_required_inputs(self) -> List[str]:
        return ['cells']

    def execute(self, context: ActionContext) -> ActionContext:
        config: ExperimentConfig = context.config
        groups: Dict[Tuple[str, int], List[CellResult]] = {}
        for cell in context.get('cells'):
            groups.setdefault((cell.entry.id, cell.seed), []).append(cell)

        rows: List[ResultRow] = context.get('rows', [])
        reports = []
        for (entry_id, seed), cells in groups.items():
            try:
                spec = MergeSpec([cell.adapter for cell in cells], weights=config.merge_weights)
                merged = merge_weight_average(spec)
                report = interference_report(spec, [cell.task.name for cell in cells], metric=cells[0].metric[0])
            except FlyLoRAError as e:
                raise ActionError(self.name, f"{entry_id} (seed {seed}): {e}", e) from e

            for cell in cells:
                metric, before = cell.metric
                after = evaluate_weight(cell.task.base + merged, cell.task)
                after_value = after.accuracy if cell.task.is_classification else after.mse
                report.before[cell.task.name] = before
                report.after[cell.task.name] = after_value
                rows.append(ResultRow(entry_id, cell.task.name, seed, metric, AFTER, after_value))
            for task_name, delta in report.delta_pct.items():
                rows.append(ResultRow(entry_id, task_name, seed, 'delta-pct', AFTER, delta))
            rows.append(ResultRow(entry_id, 'all', seed, 'cross-term-fraction', AFTER, report.cross_term_fraction))
            rows.append(ResultRow(entry_id, 'all', seed, 'pairwise-cosine', AFTER, report.mean_abs_pairwise))
            reports.append({'variant': entry_id, 'seed': seed, **report.to_dict()})
            logger.info("Merged %s seed %d: mean delta %.2f%%, cross-term fraction %.4f",
                        entry_id, seed, report.mean_delta_pct, report.cross_term_fraction)

        context.update({'rows': rows, 'interference': reports})
        return context


class SaveCheckpointsAction(BaseAction):
    def __init__(self):
        super().__init__('save_checkpoints', 'Write adapter checkpoints')

    def get_required_inputs(self) -> List[str]:
        return ['cells']

    def execute(self, context: ActionContext) -> ActionContext:
        root = Path(context.config.out) / 'checkpoints'
        paths = []
        try:
            for cell in context.get('cells'):
                directory = root / cell.entry.id / cell.task.name / f"seed{cell.seed}"
                paths.append(str(save_checkpoint(cell.adapter, directory, seed=cell.seed, task=cell.task.name)))
        except FlyLoRAError as e:
            raise ActionError(self.name, str(e), e) from e
        context.set('checkpoints', paths)
        return context


class WriteReportAction(BaseAction):
    """Writes ``<out>/<name>.csv`` and ``.json``, per-cell traces and the interference report."""

    def __init__(self, report_name: str):
        super().__init__('write_report', f"Write {report_name} report files")
        self.report_name = report_name

    def get_required_inputs(self) -> List[str]:
        return ['rows']

    def execute(self, context: ActionContext) -> ActionContext:
        out = Path(context.config.out)
        rows = context.get('rows')
        try:
            files = [
                emit_report(rows, out / f"{self.report_name}.csv", 'csv'),
                emit_report(rows, out / f"{self.report_name}.json", 'json'),
            ]
            for cell in context.get('cells', []):
                name = f"{cell.entry.id}_{cell.task.name}_seed{cell.seed}.csv"
                files.append(write_trace_csv(cell.trace, out / 'traces' / name))
            if context.get('interference'):
                files.append(write_json(context.get('interference'), out / 'interference.json'))
        except FlyLoRAError as e:
            raise ActionError(self.name, str(e), e) from e
        context.set('files', [str(path) for path in files])
        return context
