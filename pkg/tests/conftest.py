"""Shared fixtures for the flylora test suite."""

import logging

import numpy as np
import pytest

from flylora.core.adapters import AdapterConfig, build_adapter
from flylora.core.linalg import RowSparseMatrix
from flylora.core.tasks import make_synthetic_task


@pytest.fixture(autouse=True)
def reset_flylora_logger():
    """CLI runs install a non-propagating handler; undo it so caplog sees records."""
    yield
    logger = logging.getLogger('flylora')
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def selector():
    """2x2 projection keeping one coordinate per row, scaled by 0.5."""
    return RowSparseMatrix(indices=[[0], [1]], values=[[0.5], [0.5]], n_cols=2)


@pytest.fixture
def identity_projection():
    """r = n = 2 identity stored as a row-sparse matrix."""
    return RowSparseMatrix(indices=[[0], [1]], values=[[1.0], [1.0]], n_cols=2)


@pytest.fixture
def small_task():
    return make_synthetic_task('linear-teacher', n=32, m=8, samples=256, noise=0.0, seed=3)


@pytest.fixture
def fly_adapter(small_task):
    config = AdapterConfig(m=8, n=32, r=8, k=2, variant='flylora')
    return build_adapter(config, seed=5, W0=small_task.base, key=small_task.name)


@pytest.fixture
def tiny_config_file(tmp_path):
    """Small experiment file that trains two variants on two tasks in seconds."""
    path = tmp_path / 'tiny.conf'
    path.write_text(
        "# tiny run\n"
        "name = tiny\n"
        "n = 32\n"
        "m = 8\n"
        "samples = 128\n"
        "tasks = 2\n"
        "seeds = 0, 1\n"
        "epochs = 3\n"
        "lr = 0.05\n"
        "batch_size = 32\n"
        "corr_columns = 4\n"
        "grid.fly = variant:flylora r:8 k:2\n"
        "grid.lora_fa = variant:lora_fa r:8\n",
        encoding='utf-8',
    )
    return path
