"""Key-value experiment files parsed into typed configuration objects.

Format: one ``key = value`` per line, ``#`` comments, comma-separated lists,
booleans spelled ``true/false/on/off/yes/no``. Grid entries look like::

    grid.fly = variant:flylora r:16 k:4 mode:signed balance:on
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from .adapters import AdapterConfig, AdapterVariant
from .errors import ConfigError, FlyLoRAError
from .routing import SelectionMode
from .tasks import TaskKind

_TRUE = {'true', 'on', 'yes', '1'}
_FALSE = {'false', 'off', 'no', '0'}


@dataclass
class TaskSpec:
    kind: str = TaskKind.LINEAR_TEACHER.value
    n: int = 256
    m: int = 32
    samples: int = 4096
    noise: float = 0.1
    tasks: int = 2
    shared_fraction: float = 0.0
    input_correlation: float = 0.0


@dataclass
class GridEntry:
    id: str
    variant: str
    r: int
    k: Optional[int] = None
    experts: int = 1
    rho: float = 0.25
    mode: str = SelectionMode.SIGNED.value
    balance: bool = True
    trainable_a: bool = False
    alpha: Optional[float] = None

    def adapter_config(self, task: TaskSpec, balance_rate: float) -> AdapterConfig:
        return AdapterConfig(
            m=task.m,
            n=task.n,
            r=self.r,
            k=self.k,
            alpha=self.alpha,
            rho=self.rho,
            variant=self.variant,
            mode=self.mode,
            experts=self.experts,
            balance_rate=balance_rate if self.balance else 0.0,
            trainable_a=self.trainable_a,
        )


class SweepAxis(str, Enum):
    EXPERTS = 'experts'
    RHO = 'rho'
    K = 'k'
    R = 'r'


@dataclass
class SweepSpec:
    """What one sweep varies. Every axis other than ``vary`` stays at ``total_rank`` / ``active_rank``."""

    total_rank: int = 32
    active_rank: int = 8
    experts: List[int] = field(default_factory=lambda: [4, 8, 16, 32])
    vary: str = SweepAxis.EXPERTS.value
    rhos: List[float] = field(default_factory=lambda: [0.0625, 0.125, 0.25, 0.5])
    active_ranks: List[int] = field(default_factory=lambda: [2, 4, 8, 16])
    total_ranks: List[int] = field(default_factory=lambda: [8, 16, 32])


@dataclass
class ExperimentConfig:
    name: str = 'toy'
    task: TaskSpec = field(default_factory=TaskSpec)
    grid: List[GridEntry] = field(default_factory=list)
    seeds: List[int] = field(default_factory=lambda: [0])
    epochs: int = 100
    lr: float = 0.1
    batch_size: int = 32
    momentum: float = 0.0
    input_lr_scale: Optional[float] = None
    balance_rate: float = 1e-3
    threads: int = 1
    out: str = 'runs'
    merge_weights: Optional[List[float]] = None
    corr_columns: int = 10
    corr_mode: str = SelectionMode.MAGNITUDE.value
    checkpoints: List[str] = field(default_factory=list)
    diagnostics: bool = True
    save_checkpoints: bool = True
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def adapter_config(self, entry: GridEntry) -> AdapterConfig:
        return entry.adapter_config(self.task, self.balance_rate)

    def with_seed(self, seed: Optional[int]) -> 'ExperimentConfig':
        """A command-line seed replaces every seed from the file."""
        return self if seed is None else replace(self, seeds=[int(seed)])

    def with_out(self, out: Optional[str]) -> 'ExperimentConfig':
        return self if out is None else replace(self, out=str(out))


def _parse_bool(key: str, value: str) -> bool:
    text = value.strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ConfigError(key, f"expected a boolean, got '{value}'")


def _parse_scalar(key: str, value: str, kind: Callable[[str], Any]) -> Any:
    if kind is bool:
        return _parse_bool(key, value)
    try:
        return kind(value.strip())
    except ValueError as e:
        raise ConfigError(key, f"expected {kind.__name__}, got '{value}'") from e


def _parse_list(key: str, value: str, kind: Callable[[str], Any]) -> list:
    items = [item for item in (part.strip() for part in value.split(',')) if item]
    return [_parse_scalar(key, item, kind) for item in items]


def _choice(options: List[str]) -> Callable[[str], str]:
    def parse(value: str) -> str:
        if value not in options:
            raise ValueError(value)
        return value
    parse.__name__ = 'one of ' + '|'.join(options)
    return parse


# key -> (target section, field name, element type, is list)
SCALAR_KEYS: Dict[str, tuple] = {
    'name': ('experiment', 'name', str, False),
    'kind': ('task', 'kind', _choice([k.value for k in TaskKind]), False),
    'n': ('task', 'n', int, False),
    'm': ('task', 'm', int, False),
    'samples': ('task', 'samples', int, False),
    'noise': ('task', 'noise', float, False),
    'tasks': ('task', 'tasks', int, False),
    'shared_fraction': ('task', 'shared_fraction', float, False),
    'input_correlation': ('task', 'input_correlation', float, False),
    'seeds': ('experiment', 'seeds', int, True),
    'epochs': ('experiment', 'epochs', int, False),
    'lr': ('experiment', 'lr', float, False),
    'batch_size': ('experiment', 'batch_size', int, False),
    'momentum': ('experiment', 'momentum', float, False),
    'input_lr_scale': ('experiment', 'input_lr_scale', float, False),
    'balance_rate': ('experiment', 'balance_rate', float, False),
    'threads': ('experiment', 'threads', int, False),
    'out': ('experiment', 'out', str, False),
    'merge_weights': ('experiment', 'merge_weights', float, True),
    'corr_columns': ('experiment', 'corr_columns', int, False),
    'corr_mode': ('experiment', 'corr_mode', _choice([m.value for m in SelectionMode]), False),
    'checkpoints': ('experiment', 'checkpoints', str, True),
    'diagnostics': ('experiment', 'diagnostics', bool, False),
    'save_checkpoints': ('experiment', 'save_checkpoints', bool, False),
    'sweep.total_rank': ('sweep', 'total_rank', int, False),
    'sweep.active_rank': ('sweep', 'active_rank', int, False),
    'sweep.experts': ('sweep', 'experts', int, True),
    'sweep.vary': ('sweep', 'vary', _choice([a.value for a in SweepAxis]), False),
    'sweep.rhos': ('sweep', 'rhos', float, True),
    'sweep.active_ranks': ('sweep', 'active_ranks', int, True),
    'sweep.total_ranks': ('sweep', 'total_ranks', int, True),
}

GRID_FIELDS: Dict[str, Callable[[str], Any]] = {
    'variant': _choice([v.value for v in AdapterVariant]),
    'r': int,
    'k': int,
    'experts': int,
    'rho': float,
    'mode': _choice([m.value for m in SelectionMode]),
    'balance': bool,
    'trainable_a': bool,
    'alpha': float,
}


def parse_grid_entry(entry_id: str, text: str) -> GridEntry:
    """Parse ``variant:<v> r:<int> ...`` into a :class:`GridEntry`."""
    key = f"grid.{entry_id}"
    values: Dict[str, Any] = {}
    for token in text.split():
        name, sep, raw = token.partition(':')
        if not sep or name not in GRID_FIELDS:
            raise ConfigError(key, f"unknown grid field '{token}'")
        values[name] = _parse_scalar(f"{key}.{name}", raw, GRID_FIELDS[name])
    for required in ('variant', 'r'):
        if required not in values:
            raise ConfigError(key, f"missing '{required}'")
    return GridEntry(id=entry_id, **values)


def _split_lines(text: str) -> List[tuple]:
    pairs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise ConfigError(f"line {line_no}", f"expected 'key = value', got '{raw.strip()}'")
        pairs.append((key.strip(), value.strip()))
    return pairs


def _apply(sections: Dict[str, Dict[str, Any]], key: str, value: Any) -> None:
    section, name, kind, is_list = SCALAR_KEYS[key]
    if isinstance(value, str):
        value = _parse_list(key, value, kind) if is_list else _parse_scalar(key, value, kind)
    sections[section][name] = value


def _build(sections: Dict[str, Dict[str, Any]], grid: List[GridEntry]) -> ExperimentConfig:
    config = ExperimentConfig(
        task=TaskSpec(**sections['task']),
        sweep=SweepSpec(**sections['sweep']),
        grid=grid,
        **sections['experiment'],
    )
    _validate(config)
    return config


def _validate(config: ExperimentConfig) -> None:
    if not config.seeds:
        raise ConfigError('seeds', 'at least one seed is required')
    if config.epochs < 0:
        raise ConfigError('epochs', f"must be non-negative, got {config.epochs}")
    if config.lr < 0.0:
        raise ConfigError('lr', f"must be non-negative, got {config.lr}")
    if config.batch_size < 1:
        raise ConfigError('batch_size', f"must be positive, got {config.batch_size}")
    if config.threads < 1:
        raise ConfigError('threads', f"must be positive, got {config.threads}")
    if config.task.samples < 64:
        raise ConfigError('samples', f"must be at least 64, got {config.task.samples}")
    if config.task.tasks < 1:
        raise ConfigError('tasks', f"must be positive, got {config.task.tasks}")
    if config.merge_weights is not None and len(config.merge_weights) != config.task.tasks:
        raise ConfigError('merge_weights', f"need {config.task.tasks} weights, got {len(config.merge_weights)}")
    for entry in config.grid:
        try:
            config.adapter_config(entry)
        except FlyLoRAError as e:
            raise ConfigError(f"grid.{entry.id}", str(e)) from e


def _default_sections(defaults: Optional[Dict[str, Any]]) -> tuple:
    sections: Dict[str, Dict[str, Any]] = {'experiment': {}, 'task': {}, 'sweep': {}}
    grid: List[GridEntry] = []
    if not defaults:
        return sections, grid
    for key, value in (defaults.get('experiment') or {}).items():
        if key not in SCALAR_KEYS:
            raise ConfigError(key, 'unknown default key')
        _apply(sections, key, value)
    for key, value in (defaults.get('sweep') or {}).items():
        _apply(sections, f"sweep.{key}", value)
    for entry_id, text in (defaults.get('grid') or {}).items():
        grid.append(parse_grid_entry(entry_id, text))
    return sections, grid


def parse_experiment_config(
    source: Union[str, Path, None] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """Parse an experiment file on top of the application defaults.

    Args:
        source: path to a key-value file, raw text, or None for defaults only
        defaults: the ``experiment``/``grid``/``sweep`` sections of the app config

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: unknown key, bad value or an invalid grid entry
    """
    sections, grid = _default_sections(defaults)
    if source is None:
        return _build(sections, grid)

    if isinstance(source, Path) or ('\n' not in str(source) and '=' not in str(source)):
        path = Path(source)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError('config', f"cannot read {path}: {e.strerror or e}") from e
    else:
        text = str(source)

    file_grid: List[GridEntry] = []
    for key, value in _split_lines(text):
        if key.startswith('grid.'):
            entry_id = key[len('grid.'):]
            if not entry_id:
                raise ConfigError(key, 'grid entry needs an id')
            file_grid.append(parse_grid_entry(entry_id, value))
        elif key in SCALAR_KEYS:
            _apply(sections, key, value)
        else:
            raise ConfigError(key, 'unknown key')
    return _build(sections, file_grid or grid)


def _granularity_entries(config: ExperimentConfig) -> List[GridEntry]:
    total, active = config.sweep.total_rank, config.sweep.active_rank
    entries = []
    for experts in config.sweep.experts:
        if experts < 1 or total % experts:
            raise ConfigError('sweep.experts', f"{experts} experts do not divide total rank {total}")
        entries.append(GridEntry(
            id=f"split-{experts}x{total // experts}",
            variant=AdapterVariant.SPLIT_LORA.value,
            r=total,
            k=active,
            experts=experts,
        ))
    entries.append(GridEntry(id=f"flylora-{total}x1", variant=AdapterVariant.FLYLORA.value, r=total, k=active))
    return entries


def _fly(entry_id: str, r: int, k: int, rho: float = 0.25) -> GridEntry:
    return GridEntry(id=entry_id, variant=AdapterVariant.FLYLORA.value, r=r, k=k, rho=rho)


def sweep_grid(config: ExperimentConfig, vary: Union[str, SweepAxis, None] = None) -> List[GridEntry]:
    """Grid entries for one sweep axis.

    ``experts`` runs Split-LoRA at each expert count plus FlyLoRA, all at the
    fixed total and activated rank. ``rho``, ``k`` and ``r`` run FlyLoRA over
    ``rhos``, ``active_ranks`` or ``total_ranks`` with the other two held.
    ``vary`` defaults to ``config.sweep.vary``.
    """
    sweep = config.sweep
    try:
        axis = SweepAxis(vary or sweep.vary)
    except ValueError as e:
        raise ConfigError('sweep.vary', f"unknown sweep axis '{vary or sweep.vary}'") from e

    total, active = sweep.total_rank, sweep.active_rank
    if axis is SweepAxis.EXPERTS:
        entries = _granularity_entries(config)
    elif axis is SweepAxis.RHO:
        entries = [_fly(f"flylora-rho{rho:g}", total, active, rho) for rho in sweep.rhos]
    elif axis is SweepAxis.K:
        entries = [_fly(f"flylora-{total}k{k}", total, k) for k in sweep.active_ranks]
    else:
        entries = [_fly(f"flylora-{r}k{active}", r, active) for r in sweep.total_ranks]
    if not entries:
        raise ConfigError('sweep.vary', f"no values to sweep for axis '{axis.value}'")
    for entry in entries:
        try:
            config.adapter_config(entry)
        except FlyLoRAError as e:
            raise ConfigError(f"sweep.{entry.id}", str(e)) from e
    return entries
