"""Command-line surface: exit codes and artifacts."""

import json

import pytest
from typer.testing import CliRunner

from flylora.cli import app, exit_code
from flylora.core.errors import ConfigError, InvalidParameterError, TrainingFailureError
from flylora.core.matrix_io import read_matrix
from flylora.core.projection import ProjectionSpec, make_sparse_projection
from flylora.core.report_engine import load_report
from flylora.orchestration.base_workflow import WorkflowError

runner = CliRunner()


@pytest.fixture(autouse=True)
def quick_env(monkeypatch):
    monkeypatch.setenv('FLYLORA_ENV', 'quick')
    monkeypatch.delenv('FLYLORA_SEED', raising=False)


def test_exit_code_mapping():
    assert exit_code(ConfigError('n', 'bad')) == 2
    assert exit_code(InvalidParameterError('bad')) == 2
    assert exit_code(TrainingFailureError('diverged')) == 1
    wrapped = WorkflowError('train', 'failed', ConfigError('tasks', 'bad'))
    assert exit_code(wrapped) == 2


def test_gen_proj(tmp_path):
    result = runner.invoke(app, ['gen-proj', '--n', '64', '--r', '8', '--rho', '0.25', '--seed', '3', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    stored = read_matrix(tmp_path / 'A.flymat')
    expected = make_sparse_projection(ProjectionSpec.from_ratio(64, 8, 0.25, seed=3))
    assert stored.checksum() == expected.checksum()
    assert f"checksum: {expected.checksum()}" in result.output


def test_gen_proj_rejects_bad_sparsity(tmp_path):
    result = runner.invoke(app, ['gen-proj', '--n', '64', '--r', '8', '--p', '65', '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_verify_distance_preservation(tmp_path):
    result = runner.invoke(app, ['verify', 'thm1', '--n', '256', '--r', '32', '--p', '64', '--eps', '0.5',
                                 '--trials', '200', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    data = json.loads((tmp_path / 'verify_thm1.json').read_text(encoding='utf-8'))
    assert data['check'] == 'thm1'
    assert data['holds'] is True
    assert data['params']['trials'] == 200


def test_verify_covariance_attenuation(tmp_path):
    result = runner.invoke(app, ['verify', 'thm2', '--r', '8', '--k', '2', '--samples', '20000', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert json.loads((tmp_path / 'verify_thm2.json').read_text(encoding='utf-8'))['passed'] is True


def test_verify_orthogonality_fails_on_entry_variance(tmp_path):
    result = runner.invoke(app, ['verify', 'thm3', '--n', '512', '--r', '2', '--p', '4', '--eps', '0.9',
                                 '--pairs', '50', '--seed', '3', '--out', str(tmp_path)])
    assert result.exit_code == 1, result.output
    data = json.loads((tmp_path / 'verify_thm3.json').read_text(encoding='utf-8'))
    assert data['variance_relative_error'] > 0.10
    assert data['holds'] is False


def test_verify_epsilon_out_of_range(tmp_path):
    result = runner.invoke(app, ['verify', 'thm1', '--eps', '1.5', '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_verify_unknown_check(tmp_path):
    result = runner.invoke(app, ['verify', 'thm9', '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_gradcheck_defaults(tmp_path):
    result = runner.invoke(app, ['gradcheck', '--instances', '5', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    data = json.loads((tmp_path / 'gradcheck.json').read_text(encoding='utf-8'))
    assert set(data['max_relative_error']) == {'lora', 'lora_fa', 'split_lora', 'flylora'}
    assert data['instances'] == 5


def test_gradcheck_config_grid(tiny_config_file, tmp_path):
    result = runner.invoke(app, ['gradcheck', str(tiny_config_file), '--instances', '2', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    data = json.loads((tmp_path / 'gradcheck.json').read_text(encoding='utf-8'))
    assert set(data['max_relative_error']) == {'fly', 'lora_fa'}


def test_train_then_merge_checkpoints_then_report(tiny_config_file, tmp_path):
    out = tmp_path / 'train'
    result = runner.invoke(app, ['train', str(tiny_config_file), '--out', str(out), '--seed', '4'])
    assert result.exit_code == 0, result.output
    assert (out / 'train.csv').exists()
    assert (out / 'checkpoints' / 'fly' / 'task0' / 'seed4' / 'adapter.json').exists()

    merged = tmp_path / 'merged'
    result = runner.invoke(app, ['merge',
                                 '-c', str(out / 'checkpoints' / 'fly' / 'task0' / 'seed4'),
                                 '-c', str(out / 'checkpoints' / 'fly' / 'task1' / 'seed4'),
                                 '--out', str(merged)])
    assert result.exit_code == 0, result.output
    assert read_matrix(merged / 'merged_delta.flymat').shape == (8, 32)
    assert len(json.loads((merged / 'interference.json').read_text(encoding='utf-8'))['tasks']) == 2

    result = runner.invoke(app, ['report', str(out / 'train.csv')])
    assert result.exit_code == 0, result.output
    assert 'mse' in result.output


def test_merge_experiment_from_config(tiny_config_file, tmp_path):
    result = runner.invoke(app, ['merge', str(tiny_config_file), '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / 'merge.csv').exists()
    assert (tmp_path / 'interference.json').exists()


def _sweep_config(tiny_config_file):
    path = tiny_config_file.parent / 'sweep.conf'
    path.write_text(
        tiny_config_file.read_text(encoding='utf-8')
        + "sweep.total_rank = 8\nsweep.active_rank = 2\nsweep.active_ranks = 1, 4\n",
        encoding='utf-8',
    )
    return path


def test_sweep_over_active_rank(tiny_config_file, tmp_path):
    out = tmp_path / 'sweep'
    result = runner.invoke(app, ['sweep', str(_sweep_config(tiny_config_file)), '--vary', 'k', '--out', str(out)])
    assert result.exit_code == 0, result.output
    rows = load_report(out / 'sweep.csv')
    assert {row.variant for row in rows} == {'flylora-8k1', 'flylora-8k4'}


def test_sweep_rejects_unknown_axis(tiny_config_file, tmp_path):
    result = runner.invoke(app, ['sweep', str(_sweep_config(tiny_config_file)), '--vary', 'depth',
                                 '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_merge_needs_two_checkpoints(tmp_path):
    result = runner.invoke(app, ['merge', '-c', str(tmp_path / 'only'), '--out', str(tmp_path)])
    assert result.exit_code == 2


def test_unknown_config_key(tmp_path):
    path = tmp_path / 'bad.conf'
    path.write_text('bogus = 1\n', encoding='utf-8')
    result = runner.invoke(app, ['train', str(path), '--out', str(tmp_path)])
    assert result.exit_code == 2
    assert 'bogus' in result.output


def test_report_of_missing_file(tmp_path):
    result = runner.invoke(app, ['report', str(tmp_path / 'absent.csv')])
    assert result.exit_code == 1


def test_info():
    result = runner.invoke(app, ['info'])
    assert result.exit_code == 0
    assert 'flylora' in result.output
    assert 'quick' in result.output
