"""End-to-end tests of the experiment workflows on a tiny configuration."""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from flylora.actions.base_action import ActionContext, ActionError, BaseAction
from flylora.core.checkpoint import load_checkpoint
from flylora.core.config_parser import parse_experiment_config
from flylora.core.diagnostics import sign_test
from flylora.core.errors import ConfigError, TrainingFailureError
from flylora.core.report_engine import load_report
from flylora.orchestration.base_workflow import SequentialWorkflow, WorkflowError
from flylora.orchestration.experiment_workflow import (
    create_workflow_from_config,
    run_merge_experiment,
    run_single_task,
    run_sweep,
)


@pytest.fixture
def tiny(tiny_config_file, tmp_path):
    return parse_experiment_config(tiny_config_file).with_out(str(tmp_path / 'run'))


def _metrics(rows, phase='before-merge'):
    return sorted({row.metric for row in rows if row.phase == phase})


def test_single_task_rows_and_files(tiny):
    data = run_single_task(tiny)
    rows = data['rows']
    assert _metrics(rows) == ['energy-q25', 'mse', 'offdiag-corr', 'param-count']
    mse = [row for row in rows if row.metric == 'mse']
    assert len(mse) == 2 * 2 * 2
    assert {row.variant for row in mse} == {'fly', 'lora_fa'}
    out = Path(tiny.out)
    assert load_report(out / 'train.csv') == rows
    assert (out / 'train.json').exists()
    assert (out / 'traces' / 'fly_task0_seed0.csv').exists()
    checkpoint = out / 'checkpoints' / 'fly' / 'task1' / 'seed1'
    assert load_checkpoint(checkpoint).config.k == 2


def test_param_counts_follow_the_grid(tiny):
    rows = run_single_task(replace(tiny, diagnostics=False, save_checkpoints=False))['rows']
    counts = {row.variant: row.value for row in rows if row.metric == 'param-count'}
    assert counts['fly'] < counts['lora_fa']
    assert not (Path(tiny.out) / 'checkpoints').exists()


def test_runs_are_reproducible(tiny, tmp_path):
    first = replace(tiny, out=str(tmp_path / 'a'))
    second = replace(tiny, out=str(tmp_path / 'b'), threads=2)
    run_single_task(first)
    run_single_task(second)
    assert (tmp_path / 'a' / 'train.csv').read_bytes() == (tmp_path / 'b' / 'train.csv').read_bytes()


def test_correlation_mode_drives_fly_diagnostic(tiny, tmp_path):
    def offdiag(mode):
        config = replace(tiny, out=str(tmp_path / mode), corr_mode=mode, save_checkpoints=False)
        rows = run_single_task(config)['rows']
        return {(row.variant, row.task, row.seed): row.value for row in rows if row.metric == 'offdiag-corr'}

    signed, magnitude = offdiag('signed'), offdiag('magnitude')
    assert signed.keys() == magnitude.keys()
    for key in signed:
        if key[0] == 'fly':
            assert signed[key] != magnitude[key]
        else:
            assert signed[key] == magnitude[key]


def test_merge_experiment(tiny):
    data = run_merge_experiment(replace(tiny, diagnostics=False))
    rows = data['rows']
    assert _metrics(rows, 'after-merge') == ['cross-term-fraction', 'delta-pct', 'mse', 'pairwise-cosine']
    assert len(data['interference']) == 2 * 2
    report = data['interference'][0]
    assert report['tasks'] == ['task0', 'task1']
    assert set(report['delta_pct']) == {'task0', 'task1'}
    assert (Path(tiny.out) / 'interference.json').exists()
    assert (Path(tiny.out) / 'merge.csv').exists()


def test_merge_needs_two_tasks(tiny):
    with pytest.raises(ConfigError) as info:
        run_merge_experiment(replace(tiny, task=replace(tiny.task, tasks=1)))
    assert info.value.key == 'tasks'


def test_sweep_holds_total_and_active_rank(tiny):
    config = replace(tiny, sweep=replace(tiny.sweep, total_rank=8, active_rank=4, experts=[2, 4, 8]))
    rows = run_sweep(config)['rows']
    variants = sorted({row.variant for row in rows})
    assert variants == ['flylora-8x1', 'split-2x4', 'split-4x2', 'split-8x1']
    assert {row.task for row in rows} == {'task0'}
    assert (Path(tiny.out) / 'sweep.csv').exists()


def test_divergence_surfaces_the_root_cause(tiny):
    config = replace(tiny, lr=1e6, epochs=40, input_lr_scale=1.0, grid=tiny.grid[:1])
    with np.errstate(all='ignore'), pytest.raises(WorkflowError) as info:
        run_single_task(config)
    assert isinstance(info.value.root_cause, TrainingFailureError)


def test_unknown_workflow(tiny):
    with pytest.raises(ConfigError):
        create_workflow_from_config('finetune', tiny)


class _Fails(BaseAction):
    def __init__(self):
        super().__init__('fails')

    def execute(self, context: ActionContext) -> ActionContext:
        raise ActionError(self.name, 'boom', ValueError('inner'))


class _Records(BaseAction):
    def __init__(self):
        super().__init__('records')

    def get_required_inputs(self):
        return ['seed']

    def execute(self, context: ActionContext) -> ActionContext:
        context.set('seen', context.get('seed'))
        return context


def test_sequential_workflow_skips_and_wraps():
    assert SequentialWorkflow('w', [_Records()]).execute(None) == {}
    assert SequentialWorkflow('w', [_Records()]).execute(None, {'seed': 3})['seen'] == 3
    with pytest.raises(WorkflowError) as info:
        SequentialWorkflow('w', [_Fails()]).execute(None)
    assert isinstance(info.value.root_cause, ValueError)
    assert "Workflow 'w' failed" in str(info.value)


MERGE_DIRECTION = """
name = merge-direction
n = 64
m = 8
samples = 512
tasks = 2
shared_fraction = 0.5
seeds = 0, 1, 2, 3, 4
epochs = 60
lr = 0.05
input_lr_scale = 1.0
diagnostics = off
save_checkpoints = off
grid.frozen = variant:flylora r:8 k:8
grid.trainable = variant:flylora r:8 k:8 trainable_a:true
"""


@pytest.mark.slow
def test_frozen_projections_interfere_less_than_trainable(tmp_path):
    config = parse_experiment_config(MERGE_DIRECTION).with_out(str(tmp_path))
    rows = run_merge_experiment(config)['rows']

    def per_seed(variant, metric):
        values = {}
        for row in rows:
            if row.variant == variant and row.metric == metric and row.phase == 'after-merge':
                values.setdefault(row.seed, []).append(abs(row.value) if metric == 'pairwise-cosine' else row.value)
        return [float(np.mean(values[seed])) for seed in config.seeds]

    assert sign_test(per_seed('frozen', 'pairwise-cosine'), per_seed('trainable', 'pairwise-cosine')) >= 4
    assert sign_test(per_seed('frozen', 'delta-pct'), per_seed('trainable', 'delta-pct')) >= 4
