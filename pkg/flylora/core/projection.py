"""Frozen sparse random projections and their empirical guarantees.

The projection ``A`` (``r x n``) keeps exactly ``p`` nonzeros per row, with
column positions drawn uniformly without replacement and values drawn from
``N(0, 1/r^2)``. Two Monte Carlo harnesses check the distance-preservation
bound and the near-orthogonality of independently drawn projections.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import DegenerateInputError, DimensionError, InvalidParameterError
from .linalg import RowSparseMatrix, SeededStream, spectral_norm, spmv

logger = logging.getLogger(__name__)

# Substream ids keep the Monte Carlo harnesses independent of the default draw.
PROJECTION_STREAM = 0
DISTORTION_STREAM = 101
ORTHOGONALITY_STREAM = 303
# relative error allowed between sample and expected cross-Gram entry variance
VARIANCE_TOLERANCE = 0.10


@dataclass(frozen=True)
class ProjectionSpec:
    n: int
    r: int
    p: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameterError(f"n must be at least 2, got {self.n}")
        if self.r < 1:
            raise InvalidParameterError(f"r must be positive, got {self.r}")
        if not 0 < self.p < self.n:
            raise InvalidParameterError(f"p must satisfy 0 < p < n, got p={self.p}, n={self.n}")

    @classmethod
    def from_ratio(cls, n: int, r: int, rho: float, seed: int = 0) -> 'ProjectionSpec':
        """Build a spec from a sparsity ratio, rounding ``rho * n`` to the nearest count."""
        if not 0.0 < rho < 1.0:
            raise InvalidParameterError(f"sparsity ratio must lie in (0, 1), got {rho}")
        p = min(max(1, int(round(rho * n))), n - 1)
        return cls(n=n, r=r, p=p, seed=seed)

    @property
    def rho(self) -> float:
        return self.p / self.n

    @property
    def sigma2(self) -> float:
        """Per-entry variance of ``A`` averaged over positions, ``p / (n r^2)``."""
        return self.p / (self.n * self.r ** 2)


def draw_sparse_projection(n: int, r: int, p: int, rng: np.random.Generator) -> RowSparseMatrix:
    """Draw one exact-p projection from an already keyed generator."""
    columns = np.tile(np.arange(n, dtype=np.int64), (r, 1))
    indices = np.sort(rng.permuted(columns, axis=1)[:, :p], axis=1)
    values = rng.normal(0.0, 1.0 / r, size=(r, p))
    return RowSparseMatrix(indices=indices, values=values, n_cols=n)


def make_sparse_projection(spec: ProjectionSpec, stream_id: int = PROJECTION_STREAM) -> RowSparseMatrix:
    """Construct the frozen projection for ``spec``; identical specs give identical matrices."""
    rng = SeededStream(spec.seed, stream_id).generator()
    return draw_sparse_projection(spec.n, spec.r, spec.p, rng)


def distortion_ratio(A: RowSparseMatrix, x, y) -> float:
    """Return ``||A(x - y)||^2 / (r sigma^2 ||x - y||^2)`` with ``sigma^2 = p / (n r^2)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"x and y shapes differ: {x.shape} vs {y.shape}")
    diff = x - y
    distance = float(diff @ diff)
    if distance == 0.0:
        raise DegenerateInputError('distortion ratio is undefined for x == y')
    r, n = A.shape
    sigma2 = A.nnz_per_row / (n * r ** 2)
    projected = spmv(A, diff)
    return float(projected @ projected) / (r * sigma2 * distance)


def distance_preservation_bound(eps: float, n: int, r: int, p: int) -> float:
    """Lower bound on ``P(|ratio - 1| <= eps)`` for one sparse projection.

    ``1 - exp(-(eps^2 - eps^3) r / 4) - exp(-(eps^2 - eps^3) r / (2 (3p/n + 1)))``
    """
    if not 0.0 < eps < 1.0:
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {eps}")
    c = eps ** 2 - eps ** 3
    return 1.0 - math.exp(-c * r / 4.0) - math.exp(-c * r / (2.0 * (3.0 * p / n + 1.0)))


def chebyshev_tail_bound(eps: float, n: int, r: int, p: int) -> float:
    """Chebyshev bound ``p^2 / (n r^2 eps^2)`` on ``P(||A_i A_j^T||_2 >= eps r)``."""
    if eps <= 0.0:
        raise InvalidParameterError(f"epsilon must be positive, got {eps}")
    return p ** 2 / (n * r ** 2 * eps ** 2)


@dataclass
class DistortionReport:
    n: int
    r: int
    p: int
    epsilon: float
    trials: int
    success_rate: float
    bound: float
    ratios: List[float] = field(default_factory=list, repr=False)

    @property
    def informative(self) -> bool:
        return 0.0 < self.bound < 1.0

    @property
    def holds(self) -> bool:
        return self.success_rate >= self.bound

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else float('nan')

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(informative=self.informative, holds=self.holds, mean_ratio=self.mean_ratio)
        return data


def _run_parallel(func, items, threads: int) -> list:
    # Executor.map yields results in submission order.
    if threads <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def verify_distance_preservation(
    spec: ProjectionSpec,
    eps: float,
    trials: int,
    seed: Optional[int] = None,
    threads: int = 1,
) -> DistortionReport:
    """Monte Carlo check of the distance-preservation bound.

    Every trial draws a fresh projection and a fresh standard-normal pair
    ``(x, y)`` from the stream keyed by ``(seed, trial)``.

    Args:
        spec: projection shape; its ``seed`` is used when ``seed`` is None
        eps: distortion tolerance in (0, 1)
        trials: number of trials, at least 100
        seed: Monte Carlo seed
        threads: worker threads for the trials

    Returns:
        DistortionReport with the per-trial ratios in trial order
    """
    bound = distance_preservation_bound(eps, spec.n, spec.r, spec.p)
    if trials < 100:
        raise InvalidParameterError(f"trials must be at least 100, got {trials}")
    stream = SeededStream(spec.seed if seed is None else seed, DISTORTION_STREAM)

    def trial(index: int) -> float:
        rng = stream.generator(index)
        A = draw_sparse_projection(spec.n, spec.r, spec.p, rng)
        x = rng.standard_normal(spec.n)
        y = rng.standard_normal(spec.n)
        return distortion_ratio(A, x, y)

    ratios = _run_parallel(trial, range(trials), threads)
    arr = np.asarray(ratios)
    success = float(np.mean((arr >= 1.0 - eps) & (arr <= 1.0 + eps)))
    report = DistortionReport(
        n=spec.n, r=spec.r, p=spec.p, epsilon=eps, trials=trials,
        success_rate=success, bound=bound, ratios=[float(v) for v in ratios],
    )
    if not report.informative:
        logger.warning("Distance-preservation bound %.4f is not informative for n=%d r=%d p=%d eps=%g",
                       bound, spec.n, spec.r, spec.p, eps)
    logger.info("Distance preservation: success %.4f vs bound %.4f over %d trials", success, bound, trials)
    return report


def cross_projection_gram(A_i: RowSparseMatrix, A_j: RowSparseMatrix) -> np.ndarray:
    """Return the ``r x r`` product ``A_i A_j^T``."""
    if A_i.shape != A_j.shape:
        raise DimensionError(f"projection shapes differ: {A_i.shape} vs {A_j.shape}")
    if A_i is A_j or A_i == A_j:
        logger.warning('cross_projection_gram called on identical projections (same seed?)')
    return A_i.to_dense() @ A_j.to_dense().T


@dataclass
class OrthogonalityReport:
    n: int
    r: int
    p: int
    epsilon: float
    pairs: int
    entry_mean: float
    entry_variance: float
    theoretical_variance: float
    tail_estimate: float
    chebyshev_bound: float
    spectral_norms: List[float] = field(default_factory=list, repr=False)

    @property
    def samples(self) -> int:
        return self.pairs * self.r * self.r

    @property
    def mean_tolerance(self) -> float:
        return 4.0 * math.sqrt(self.theoretical_variance / self.samples)

    @property
    def informative(self) -> bool:
        return self.chebyshev_bound < 1.0

    @property
    def variance_relative_error(self) -> float:
        return abs(self.entry_variance - self.theoretical_variance) / self.theoretical_variance

    @property
    def holds(self) -> bool:
        mean_ok = abs(self.entry_mean) <= self.mean_tolerance
        variance_ok = self.variance_relative_error <= VARIANCE_TOLERANCE
        tail_ok = not self.informative or self.tail_estimate <= self.chebyshev_bound
        return mean_ok and variance_ok and tail_ok

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.update(
            samples=self.samples,
            mean_tolerance=self.mean_tolerance,
            informative=self.informative,
            variance_relative_error=self.variance_relative_error,
            holds=self.holds,
        )
        return data


def verify_orthogonality(
    spec: ProjectionSpec,
    eps: float,
    pairs: int,
    seed: Optional[int] = None,
    threads: int = 1,
) -> OrthogonalityReport:
    """Monte Carlo check of mean orthogonality and the Chebyshev tail bound.

    Pair ``t`` draws two independent projections from the stream keyed by
    ``(seed, t)``; statistics are reduced in pair order.
    """
    bound = chebyshev_tail_bound(eps, spec.n, spec.r, spec.p)
    if pairs < 50:
        raise InvalidParameterError(f"pairs must be at least 50, got {pairs}")
    stream = SeededStream(spec.seed if seed is None else seed, ORTHOGONALITY_STREAM)

    def pair(index: int) -> Tuple[np.ndarray, float]:
        rng = stream.generator(index)
        A_i = draw_sparse_projection(spec.n, spec.r, spec.p, rng)
        A_j = draw_sparse_projection(spec.n, spec.r, spec.p, rng)
        gram = cross_projection_gram(A_i, A_j)
        return gram, spectral_norm(gram)

    results = _run_parallel(pair, range(pairs), threads)
    entries = np.concatenate([gram.ravel() for gram, _ in results])
    norms = [norm for _, norm in results]
    tail = float(np.mean(np.asarray(norms) >= eps * spec.r))

    report = OrthogonalityReport(
        n=spec.n, r=spec.r, p=spec.p, epsilon=eps, pairs=pairs,
        entry_mean=float(entries.mean()),
        entry_variance=float(entries.var(ddof=1)),
        theoretical_variance=spec.p ** 2 / (spec.n * spec.r ** 4),
        tail_estimate=tail,
        chebyshev_bound=bound,
        spectral_norms=norms,
    )
    if not report.informative:
        logger.warning("Chebyshev bound %.4f is vacuous for n=%d r=%d p=%d eps=%g",
                       bound, spec.n, spec.r, spec.p, eps)
    return report
