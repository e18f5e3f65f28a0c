"""Tests for the key-value experiment file parser."""

import pytest

from flylora.core.config_parser import (
    ExperimentConfig,
    parse_experiment_config,
    parse_grid_entry,
    sweep_grid,
)
from flylora.core.errors import ConfigError

DEFAULTS = {
    'experiment': {'epochs': 7, 'seeds': [0, 1, 2]},
    'grid': {'fly': 'variant:flylora r:16 k:4'},
    'sweep': {'total_rank': 16, 'active_rank': 4, 'experts': [4, 16]},
}


def test_tiny_file(tiny_config_file):
    config = parse_experiment_config(tiny_config_file)
    assert config.name == 'tiny'
    assert (config.task.n, config.task.m, config.task.samples, config.task.tasks) == (32, 8, 128, 2)
    assert config.seeds == [0, 1]
    assert config.lr == 0.05
    assert [entry.id for entry in config.grid] == ['fly', 'lora_fa']
    fly = config.adapter_config(config.grid[0])
    assert (fly.r, fly.k, fly.variant.value) == (8, 2, 'flylora')


def test_raw_text_and_comments():
    config = parse_experiment_config("epochs = 3   # short\n\n# nothing here\nnoise = 0\n")
    assert config.epochs == 3
    assert config.task.noise == 0.0


def test_defaults_apply_and_file_grid_replaces_them():
    config = parse_experiment_config(None, DEFAULTS)
    assert config.epochs == 7
    assert config.seeds == [0, 1, 2]
    assert [entry.id for entry in config.grid] == ['fly']
    overridden = parse_experiment_config("epochs = 2\ngrid.lora = variant:lora r:8\n", DEFAULTS)
    assert overridden.epochs == 2
    assert [entry.id for entry in overridden.grid] == ['lora']


def test_grid_entry_fields():
    entry = parse_grid_entry('x', 'variant:flylora r:16 k:4 mode:magnitude balance:off trainable_a:yes alpha:8')
    assert entry.mode == 'magnitude'
    assert entry.balance is False
    assert entry.trainable_a is True
    assert entry.alpha == 8.0
    config = ExperimentConfig().adapter_config(entry)
    assert config.balance_rate == 0.0
    assert config.scale == pytest.approx(0.5)


@pytest.mark.parametrize('text, key', [
    ('bogus = 1', 'bogus'),
    ('epochs = many', 'epochs'),
    ('diagnostics = maybe', 'diagnostics'),
    ('kind = spiral', 'kind'),
    ('seeds =', 'seeds'),
    ('lr = -1', 'lr'),
    ('samples = 10', 'samples'),
    ('tasks = 2\nmerge_weights = 1.0', 'merge_weights'),
    ('grid.bad = variant:flylora', 'grid.bad'),
    ('grid.bad = variant:flylora r:8 colour:red', 'grid.bad'),
    ('grid.bad = variant:flylora r:8 k:9', 'grid.bad'),
    ('grid.bad = variant:split_lora r:8 k:3 experts:4', 'grid.bad'),
    ('just words', 'line 1'),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(text + '\n')
    assert info.value.key == key


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(tmp_path / 'absent.conf')
    assert info.value.key == 'config'


def test_seed_and_out_overrides(tiny_config_file):
    config = parse_experiment_config(tiny_config_file)
    assert config.with_seed(None) is config
    assert config.with_seed(9).seeds == [9]
    assert config.with_out('elsewhere').out == 'elsewhere'


def test_sweep_grid():
    config = parse_experiment_config(None, DEFAULTS)
    entries = sweep_grid(config)
    assert [entry.id for entry in entries] == ['split-4x4', 'split-16x1', 'flylora-16x1']
    for entry in entries:
        adapter_config = config.adapter_config(entry)
        assert (adapter_config.r, adapter_config.k) == (16, 4)


def test_sweep_rejects_uneven_experts():
    config = parse_experiment_config("sweep.total_rank = 16\nsweep.active_rank = 4\nsweep.experts = 3\n")
    with pytest.raises(ConfigError) as info:
        sweep_grid(config)
    assert info.value.key == 'sweep.experts'


SENSITIVITY = (
    "sweep.total_rank = 16\n"
    "sweep.active_rank = 4\n"
    "sweep.rhos = 0.125, 0.5\n"
    "sweep.active_ranks = 2, 8\n"
    "sweep.total_ranks = 8, 16\n"
)


@pytest.mark.parametrize('vary, ids', [
    ('rho', ['flylora-rho0.125', 'flylora-rho0.5']),
    ('k', ['flylora-16k2', 'flylora-16k8']),
    ('r', ['flylora-8k4', 'flylora-16k4']),
])
def test_sensitivity_sweeps(vary, ids):
    config = parse_experiment_config(SENSITIVITY)
    entries = sweep_grid(config, vary)
    assert [entry.id for entry in entries] == ids
    assert {entry.variant for entry in entries} == {'flylora'}


def test_rho_sweep_sets_sparsity():
    config = parse_experiment_config(SENSITIVITY + "sweep.vary = rho\n")
    assert config.sweep.vary == 'rho'
    entries = sweep_grid(config)
    assert [config.adapter_config(entry).p for entry in entries] == [32, 128]
    assert {(entry.r, entry.k) for entry in entries} == {(16, 4)}


def test_sweep_rejects_unknown_axis():
    with pytest.raises(ConfigError) as info:
        parse_experiment_config("sweep.vary = depth\n")
    assert info.value.key == 'sweep.vary'
    with pytest.raises(ConfigError) as info:
        sweep_grid(parse_experiment_config(SENSITIVITY), 'depth')
    assert info.value.key == 'sweep.vary'


def test_sweep_rejects_active_rank_above_total():
    config = parse_experiment_config(SENSITIVITY + "sweep.active_ranks = 2, 32\n")
    with pytest.raises(ConfigError) as info:
        sweep_grid(config, 'k')
    assert info.value.key == 'sweep.flylora-16k32'
