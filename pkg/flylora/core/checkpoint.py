"""Adapter checkpoints: a JSON manifest plus FLYMAT matrices in one directory."""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .adapters import Adapter, AdapterConfig, AdapterVariant, FlyAdapter, LoRAAdapter, SplitAdapter
from .errors import ReportError
from .linalg import RowSparseMatrix
from .matrix_io import read_matrix, write_matrix
from .report_engine import write_json
from .routing import BalanceState

logger = logging.getLogger(__name__)

MANIFEST = 'adapter.json'
FORMAT_VERSION = 1


def _config_dict(config: AdapterConfig) -> Dict[str, Any]:
    data = asdict(config)
    data['variant'] = config.variant.value
    data['mode'] = config.mode.value
    return data


def save_checkpoint(adapter: Adapter, directory: Union[str, Path], seed: int = 0, task: str = '') -> Path:
    """Write ``adapter`` under ``directory`` and return the manifest path.

    Files: ``A.flymat`` (sparse for a frozen FlyLoRA projection, dense
    otherwise), ``B.flymat``, ``W0.flymat``; FlyLoRA adds ``bias.flymat``
    and Split-LoRA adds ``W_g.flymat`` with ``A``/``B`` stored rank-stacked.
    """
    directory = Path(directory)
    matrices: Dict[str, Any] = {'W0': adapter.W0}
    if isinstance(adapter, FlyAdapter):
        matrices['A'] = adapter.A
        if adapter.A_train is not None:
            matrices['A_train'] = adapter.A_train
        matrices['B'] = adapter.B
        matrices['bias'] = adapter.bias[None, :]
    elif isinstance(adapter, SplitAdapter):
        matrices['A'] = adapter.stacked_A()
        matrices['B'] = adapter.stacked_B()
        matrices['W_g'] = adapter.W_g
    else:
        matrices['A'] = adapter.A
        matrices['B'] = adapter.B

    files = {}
    for name, matrix in matrices.items():
        filename = f"{name}.flymat"
        write_matrix(matrix, directory / filename)
        files[name] = filename

    manifest = {
        'format': FORMAT_VERSION,
        'seed': int(seed),
        'task': task,
        'config': _config_dict(adapter.config),
        'files': files,
    }
    path = write_json(manifest, directory / MANIFEST)
    logger.info("Saved %s checkpoint to %s", adapter.variant.value, directory)
    return path


def load_checkpoint(path: Union[str, Path]) -> Adapter:
    """Rebuild an adapter from a checkpoint directory or its manifest file."""
    path = Path(path)
    manifest_path = path / MANIFEST if path.is_dir() else path
    try:
        manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ReportError(str(manifest_path), f"cannot read checkpoint: {e.strerror or e}", e) from e
    except json.JSONDecodeError as e:
        raise ReportError(str(manifest_path), f"malformed checkpoint manifest: {e}", e) from e

    try:
        config = AdapterConfig(**manifest['config'])
        files = manifest['files']
    except (KeyError, TypeError) as e:
        raise ReportError(str(manifest_path), f"incomplete checkpoint manifest: {e}", e) from e

    root = manifest_path.parent

    def load(name: str):
        if name not in files:
            raise ReportError(str(manifest_path), f"checkpoint lists no '{name}' matrix")
        return read_matrix(root / files[name])

    W0 = load('W0')
    if config.variant is AdapterVariant.FLYLORA:
        A = load('A')
        if not isinstance(A, RowSparseMatrix):
            raise ReportError(str(root / files['A']), 'FlyLoRA projection must be stored sparse')
        balance = BalanceState(r=config.r, k=config.k, rate=config.balance_rate, bias=load('bias')[0])
        A_dense = load('A_train') if 'A_train' in files else None
        return FlyAdapter(config, A, B=load('B'), W0=W0, balance=balance, A_dense=A_dense)
    if config.variant is AdapterVariant.SPLIT_LORA:
        N, re = config.experts, config.expert_rank
        A = np.asarray(load('A')).reshape(N, re, config.n)
        B = np.asarray(load('B')).reshape(config.m, N, re).transpose(1, 0, 2)
        return SplitAdapter(config, A, B_experts=B, W_g=load('W_g'), W0=W0)
    return LoRAAdapter(config, load('A'), B=load('B'), W0=W0)
