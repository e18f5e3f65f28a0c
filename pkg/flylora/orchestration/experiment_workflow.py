"""Experiment workflows: single-task grids, multi-task merging and one-axis sweeps."""

import logging
from dataclasses import replace
from typing import Any, Dict, List

from ..actions.base_action import BaseAction
from ..actions.experiment_actions import (
    DiagnosticsAction,
    MergeAction,
    PrepareTasksAction,
    SaveCheckpointsAction,
    TrainGridAction,
    WriteReportAction,
)
from ..core.config_parser import ExperimentConfig, sweep_grid
from ..core.errors import ConfigError
from .base_workflow import ConditionalWorkflow, SequentialWorkflow

logger = logging.getLogger(__name__)


def _diagnostics_on(context) -> bool:
    return context.config.diagnostics


def _checkpoints_on(context) -> bool:
    return context.config.save_checkpoints


class SingleTaskWorkflow(ConditionalWorkflow):
    """Train the grid on every task and seed, then report per-cell metrics."""

    def __init__(self, report_name: str = 'train'):
        super().__init__(
            name='single_task',
            action_conditions=[
                (lambda context: True, PrepareTasksAction()),
                (lambda context: True, TrainGridAction()),
                (_diagnostics_on, DiagnosticsAction()),
                (_checkpoints_on, SaveCheckpointsAction()),
                (lambda context: True, WriteReportAction(report_name)),
            ],
            description='Single-task comparison of adapter variants',
        )


class MergeWorkflow(ConditionalWorkflow):
    """Train one adapter per task, merge per (variant, seed) and measure interference."""

    def __init__(self, report_name: str = 'merge'):
        super().__init__(
            name='merge',
            action_conditions=[
                (lambda context: True, PrepareTasksAction()),
                (lambda context: True, TrainGridAction()),
                (_checkpoints_on, SaveCheckpointsAction()),
                (lambda context: True, MergeAction()),
                (lambda context: True, WriteReportAction(report_name)),
            ],
            description='Weight-average merging of task adapters',
        )


class SweepWorkflow(SequentialWorkflow):
    """One-axis sweep: expert granularity (Split-LoRA next to FlyLoRA) or FlyLoRA over rho, k or r."""

    def __init__(self, config: ExperimentConfig, report_name: str = 'sweep'):
        actions: List[BaseAction] = [
            PrepareTasksAction(),
            TrainGridAction(grid=sweep_grid(config)),
            WriteReportAction(report_name),
        ]
        super().__init__('sweep', actions, description=f"Sweep over {config.sweep.vary}")


WORKFLOWS = {
    'train': SingleTaskWorkflow,
    'merge': MergeWorkflow,
    'sweep': SweepWorkflow,
}


def create_workflow_from_config(kind: str, config: ExperimentConfig):
    """Build the workflow registered under ``kind``."""
    if kind not in WORKFLOWS:
        raise ConfigError('workflow', f"unknown workflow '{kind}', expected one of {sorted(WORKFLOWS)}")
    if kind == 'sweep':
        return SweepWorkflow(config)
    return WORKFLOWS[kind]()


def run_single_task(config: ExperimentConfig) -> Dict[str, Any]:
    """Returns the workflow data; ``rows`` holds the ResultRows, ``files`` the artifacts."""
    return SingleTaskWorkflow().execute(config)


def run_merge_experiment(config: ExperimentConfig) -> Dict[str, Any]:
    """Like :func:`run_single_task` plus after-merge rows and ``interference`` reports."""
    if config.task.tasks < 2:
        raise ConfigError('tasks', f"merging needs at least 2 tasks, got {config.task.tasks}")
    return MergeWorkflow().execute(config)


def run_sweep(config: ExperimentConfig) -> Dict[str, Any]:
    # the sweep fixes one task per seed so cells differ only along the swept axis
    if config.task.tasks != 1:
        config = replace(config, task=replace(config.task, tasks=1), merge_weights=None)
    return SweepWorkflow(config).execute(config)
