"""Desk-scale synthetic tasks.

Inputs are standard normal. A linear-teacher task regresses
``y = (W0 + T) x + noise``; a gaussian-cluster task classifies points drawn
around ``m`` class means, with logits read from ``W0 x + delta(x)``.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Union

import numpy as np

from .errors import DimensionError, InvalidParameterError
from .linalg import SeededStream, frozen_copy, stable_key

logger = logging.getLogger(__name__)

CLUSTER_SEPARATION = 3.0
BASE_STREAM = 11
TEACHER_STREAM = 12
DATA_STREAM = 13


class TaskKind(str, Enum):
    LINEAR_TEACHER = 'linear-teacher'
    GAUSSIAN_CLUSTER = 'gaussian-cluster'

    @classmethod
    def parse(cls, value: Union[str, 'TaskKind']) -> 'TaskKind':
        try:
            return cls(value)
        except ValueError as e:
            raise InvalidParameterError(f"unknown task kind '{value}'") from e


@dataclass
class ToyTask:
    """Train/test split of one synthetic task.

    For regression ``Y`` holds ``m``-dimensional targets; for classification it
    holds integer labels in ``[0, m)``. ``teacher`` is the teacher update ``T``
    or the matrix of class means.
    """

    name: str
    kind: TaskKind
    n: int
    m: int
    seed: int
    noise: float
    teacher: np.ndarray = field(repr=False)
    base: np.ndarray = field(repr=False)
    X_train: np.ndarray = field(repr=False)
    Y_train: np.ndarray = field(repr=False)
    X_test: np.ndarray = field(repr=False)
    Y_test: np.ndarray = field(repr=False)
    input_correlation: float = 0.0

    @property
    def samples(self) -> int:
        return self.X_train.shape[0] + self.X_test.shape[0]

    @property
    def is_classification(self) -> bool:
        return self.kind is TaskKind.GAUSSIAN_CLUSTER


def _validate(n: int, m: int, samples: int, noise: float, test_fraction: float,
              input_correlation: float = 0.0) -> None:
    if n < 2 or m < 1:
        raise DimensionError(f"task needs n >= 2 and m >= 1, got n={n}, m={m}")
    if samples < 64:
        raise InvalidParameterError(f"samples must be at least 64, got {samples}")
    if noise < 0.0:
        raise InvalidParameterError(f"noise must be non-negative, got {noise}")
    if not 0.0 < test_fraction < 1.0:
        raise InvalidParameterError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if not 0.0 <= input_correlation < 1.0:
        raise InvalidParameterError(f"input_correlation must lie in [0, 1), got {input_correlation}")


def _inputs(samples: int, n: int, input_correlation: float, rng: np.random.Generator) -> np.ndarray:
    # a shared scalar factor on every coordinate gives pairwise input correlation c
    X = rng.standard_normal((samples, n))
    if input_correlation > 0.0:
        common = rng.standard_normal((samples, 1))
        X = np.sqrt(1.0 - input_correlation) * X + np.sqrt(input_correlation) * common
    return X


def _draw_data(kind: TaskKind, teacher: np.ndarray, base: np.ndarray, samples: int,
               noise: float, rng: np.random.Generator, input_correlation: float = 0.0):
    m, n = teacher.shape
    if kind is TaskKind.LINEAR_TEACHER:
        X = _inputs(samples, n, input_correlation, rng)
        Y = X @ (base + teacher).T
        if noise > 0.0:
            Y = Y + noise * rng.standard_normal(Y.shape)
        return X, Y

    labels = rng.integers(0, m, size=samples)
    X = teacher[labels] + _inputs(samples, n, input_correlation, rng)
    if noise > 0.0:
        # noise is the label-flip probability for clusters
        flip = rng.random(samples) < noise
        labels = np.where(flip, rng.integers(0, m, size=samples), labels)
    return X, labels.astype(np.int64)


def _teacher_scale(kind: TaskKind, n: int) -> float:
    if kind is TaskKind.LINEAR_TEACHER:
        return 1.0 / np.sqrt(n)
    return CLUSTER_SEPARATION / np.sqrt(n)


def _assemble(name: str, kind: TaskKind, teacher: np.ndarray, base: np.ndarray, samples: int,
              noise: float, seed: int, test_fraction: float, rng: np.random.Generator,
              input_correlation: float = 0.0) -> ToyTask:
    m, n = teacher.shape
    X, Y = _draw_data(kind, teacher, base, samples, noise, rng, input_correlation)
    n_test = max(1, int(round(test_fraction * samples)))
    split = samples - n_test
    return ToyTask(
        name=name, kind=kind, n=n, m=m, seed=seed, noise=noise,
        teacher=frozen_copy(teacher), base=frozen_copy(base),
        X_train=X[:split], Y_train=Y[:split], X_test=X[split:], Y_test=Y[split:],
        input_correlation=input_correlation,
    )


def make_synthetic_task(
    kind: Union[str, TaskKind],
    n: int,
    m: int,
    samples: int,
    noise: float,
    seed: int,
    name: str = 'task0',
    base: Optional[np.ndarray] = None,
    teacher: Optional[np.ndarray] = None,
    test_fraction: float = 0.25,
    input_correlation: float = 0.0,
) -> ToyTask:
    """Draw one task; identical arguments give identical datasets.

    The frozen base ``W0`` is ``N(0, 1/n)`` for regression and zero for
    classification unless given. The teacher is ``N(0, 1/n)`` for regression and
    class means of norm about ``CLUSTER_SEPARATION`` for classification.
    """
    kind = TaskKind.parse(kind)
    _validate(n, m, samples, noise, test_fraction, input_correlation)
    stream = SeededStream(seed, stable_key('task', name))
    if base is None:
        if kind is TaskKind.LINEAR_TEACHER:
            base = stream.generator(BASE_STREAM).normal(0.0, 1.0 / np.sqrt(n), size=(m, n))
        else:
            base = np.zeros((m, n))
    if teacher is None:
        teacher = stream.generator(TEACHER_STREAM).normal(0.0, _teacher_scale(kind, n), size=(m, n))
    base = np.asarray(base, dtype=np.float64)
    teacher = np.asarray(teacher, dtype=np.float64)
    if base.shape != (m, n) or teacher.shape != (m, n):
        raise DimensionError(f"base {base.shape} and teacher {teacher.shape} must be {(m, n)}")
    rng = SeededStream(seed, stable_key('data', name)).generator()
    task = _assemble(name, kind, teacher, base, samples, noise, seed, test_fraction, rng, input_correlation)
    logger.debug("Built %s task '%s' (n=%d, m=%d, samples=%d)", kind.value, name, n, m, samples)
    return task


def make_task_family(
    kind: Union[str, TaskKind],
    n: int,
    m: int,
    samples: int,
    noise: float,
    tasks: int,
    shared_fraction: float,
    seed: int,
    test_fraction: float = 0.25,
    input_correlation: float = 0.0,
) -> List[ToyTask]:
    """Draw related tasks over one frozen base.

    Teacher ``i`` is ``sqrt(f) S + sqrt(1 - f) U_i`` with a shared component
    ``S`` and independent ``U_i``, where ``f`` is ``shared_fraction``.
    """
    kind = TaskKind.parse(kind)
    _validate(n, m, samples, noise, test_fraction, input_correlation)
    if tasks < 1:
        raise InvalidParameterError(f"tasks must be positive, got {tasks}")
    if not 0.0 <= shared_fraction <= 1.0:
        raise InvalidParameterError(f"shared_fraction must lie in [0, 1], got {shared_fraction}")

    family = SeededStream(seed, stable_key('family', kind.value))
    scale = _teacher_scale(kind, n)
    if kind is TaskKind.LINEAR_TEACHER:
        base = family.generator(BASE_STREAM).normal(0.0, 1.0 / np.sqrt(n), size=(m, n))
    else:
        base = np.zeros((m, n))
    shared = family.generator(TEACHER_STREAM).normal(0.0, scale, size=(m, n))

    out = []
    for i in range(tasks):
        name = f"task{i}"
        own = family.generator(TEACHER_STREAM, i + 1).normal(0.0, scale, size=(m, n))
        teacher = np.sqrt(shared_fraction) * shared + np.sqrt(1.0 - shared_fraction) * own
        rng = family.generator(DATA_STREAM, i)
        out.append(_assemble(name, kind, teacher, base, samples, noise, seed, test_fraction, rng, input_correlation))
    logger.info("Built a family of %d %s tasks (shared fraction %.2f)", tasks, kind.value, shared_fraction)
    return out
