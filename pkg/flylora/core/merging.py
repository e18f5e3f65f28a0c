"""Training-free weight-average merging and inter-task interference measures."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .adapters import BaseAdapter
from .errors import DegenerateInputError, DimensionError, InvalidParameterError
from .linalg import SeededStream, as_dense, frobenius_inner, frobenius_norm
from .projection import ProjectionSpec, draw_sparse_projection

logger = logging.getLogger(__name__)

UpdateLike = Union[BaseAdapter, np.ndarray]


def _update_of(item: UpdateLike) -> np.ndarray:
    if isinstance(item, BaseAdapter):
        return item.delta_weight()
    return as_dense(item, 'delta')


@dataclass
class MergeSpec:
    """Task updates to combine, with weights defaulting to ``1/t``.

    Entries may be adapters (their scaled ``delta_weight`` is used) or dense
    updates that already carry the ``alpha/r`` factor.
    """

    adapters: List[UpdateLike]
    weights: Optional[np.ndarray] = None
    updates: List[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        t = len(self.adapters)
        if t < 2:
            raise InvalidParameterError(f"merging needs at least 2 adapters, got {t}")
        self.updates = [_update_of(item) for item in self.adapters]
        shape = self.updates[0].shape
        for i, update in enumerate(self.updates[1:], start=1):
            if update.shape != shape:
                raise DimensionError(f"adapter {i} update has shape {update.shape}, expected {shape}")
        if self.weights is None:
            self.weights = np.full(t, 1.0 / t)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (t,) or not np.all(np.isfinite(self.weights)):
                raise InvalidParameterError(f"need {t} finite merge weights, got {self.weights}")

    @property
    def t(self) -> int:
        return len(self.updates)

    @property
    def shape(self):
        return self.updates[0].shape


def merge_weight_average(spec: MergeSpec) -> np.ndarray:
    """``sum_i w_i (alpha_i / r_i) B_i A_i`` as one dense update; ``W0`` is not added."""
    merged = np.zeros(spec.shape)
    for w, update in zip(spec.weights, spec.updates):
        merged += w * update
    return merged


def pairwise_task_orthogonality(adapter_i: UpdateLike, adapter_j: UpdateLike) -> float:
    """Normalized Frobenius inner product of two task updates, in ``[-1, 1]``."""
    X, Y = _update_of(adapter_i), _update_of(adapter_j)
    nx, ny = frobenius_norm(X), frobenius_norm(Y)
    if nx == 0.0 or ny == 0.0:
        raise DegenerateInputError('normalized inner product is undefined for a zero update')
    return float(np.clip(frobenius_inner(X, Y) / (nx * ny), -1.0, 1.0))


def pairwise_matrix(updates: Sequence[UpdateLike]) -> np.ndarray:
    t = len(updates)
    out = np.eye(t)
    for i in range(t):
        for j in range(i + 1, t):
            out[i, j] = out[j, i] = pairwise_task_orthogonality(updates[i], updates[j])
    return out


@dataclass
class NormDecomposition:
    merged_sq_norm: float
    weighted_sq_sum: float
    cross_term: float

    @property
    def cross_term_fraction(self) -> float:
        if self.weighted_sq_sum == 0.0:
            return 0.0
        return abs(self.cross_term) / self.weighted_sq_sum


def merged_norm_decomposition(spec: MergeSpec) -> NormDecomposition:
    """Split ``||sum w_i dW_i||^2`` into the diagonal sum and the cross terms."""
    w = spec.weights
    weighted = float(sum(wi ** 2 * frobenius_inner(u, u) for wi, u in zip(w, spec.updates)))
    cross = 0.0
    for i in range(spec.t):
        for j in range(spec.t):
            if i != j:
                cross += w[i] * w[j] * frobenius_inner(spec.updates[i], spec.updates[j])
    merged = merge_weight_average(spec)
    return NormDecomposition(
        merged_sq_norm=frobenius_inner(merged, merged),
        weighted_sq_sum=weighted,
        cross_term=float(cross),
    )


def linear_cka(X, Y) -> float:
    """Linear CKA between two ``samples x features`` activation matrices."""
    X = as_dense(X, 'X')
    Y = as_dense(Y, 'Y')
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"sample counts differ: {X.shape[0]} vs {Y.shape[0]}")
    X = X - X.mean(axis=0)
    Y = Y - Y.mean(axis=0)
    xx = np.linalg.norm(X.T @ X)
    yy = np.linalg.norm(Y.T @ Y)
    if xx == 0.0 or yy == 0.0:
        raise DegenerateInputError('CKA is undefined for zero-variance features')
    xy = np.linalg.norm(Y.T @ X)
    return float(np.clip(xy ** 2 / (xx * yy), 0.0, 1.0))


@dataclass
class InterferenceReport:
    tasks: List[str]
    weights: List[float]
    pairwise: List[List[float]]
    cross_term_fraction: float
    merged_sq_norm: float
    weighted_sq_sum: float
    before: Dict[str, float] = field(default_factory=dict)
    after: Dict[str, float] = field(default_factory=dict)
    metric: str = 'mse'

    @property
    def delta_pct(self) -> Dict[str, float]:
        """Relative change per task, signed so that positive means degradation."""
        out = {}
        for task, before in self.before.items():
            after = self.after[task]
            change = after - before if self.metric == 'mse' else before - after
            out[task] = 100.0 * change / abs(before) if before else 0.0
        return out

    @property
    def mean_delta_pct(self) -> float:
        values = list(self.delta_pct.values())
        return float(np.mean(values)) if values else 0.0

    @property
    def mean_abs_pairwise(self) -> float:
        P = np.asarray(self.pairwise)
        off = ~np.eye(P.shape[0], dtype=bool)
        return float(np.abs(P[off]).mean()) if P.shape[0] > 1 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tasks': self.tasks,
            'weights': self.weights,
            'metric': self.metric,
            'pairwise': self.pairwise,
            'mean_abs_pairwise': self.mean_abs_pairwise,
            'cross_term_fraction': self.cross_term_fraction,
            'merged_sq_norm': self.merged_sq_norm,
            'weighted_sq_sum': self.weighted_sq_sum,
            'before': self.before,
            'after': self.after,
            'delta_pct': self.delta_pct,
            'mean_delta_pct': self.mean_delta_pct,
        }


def interference_report(spec: MergeSpec, tasks: Sequence[str], metric: str = 'mse') -> InterferenceReport:
    decomposition = merged_norm_decomposition(spec)
    return InterferenceReport(
        tasks=list(tasks),
        weights=[float(w) for w in spec.weights],
        pairwise=pairwise_matrix(spec.updates).tolist(),
        cross_term_fraction=decomposition.cross_term_fraction,
        merged_sq_norm=decomposition.merged_sq_norm,
        weighted_sq_sum=decomposition.weighted_sq_sum,
        metric=metric,
    )


def cross_term_scaling(
    ns: Sequence[int],
    r: int = 16,
    rho: float = 0.25,
    pairs: int = 20,
    seed: int = 0,
    m: int = 32,
) -> Dict[int, float]:
    """Mean cross-term fraction of random-``B`` updates over independent sparse ``A``.

    Each pair draws ``B_i, B_j ~ N(0, 1)`` and two independent projections; the
    fraction should shrink as ``n`` grows at fixed ``rho`` and ``r``.
    """
    if pairs < 1:
        raise InvalidParameterError(f"pairs must be positive, got {pairs}")
    out = {}
    for n in ns:
        spec = ProjectionSpec.from_ratio(n, r, rho)
        stream = SeededStream(seed, 404)
        fractions = []
        for t in range(pairs):
            rng = stream.generator(n, t)
            updates = []
            for _ in range(2):
                A = draw_sparse_projection(spec.n, spec.r, spec.p, rng)
                B = rng.standard_normal((m, r))
                updates.append(B @ A.to_dense())
            fractions.append(merged_norm_decomposition(MergeSpec(updates)).cross_term_fraction)
        out[int(n)] = float(np.mean(fractions))
        logger.debug("Cross-term fraction at n=%d: %.5f", n, out[int(n)])
    return out
