"""Post-training diagnostics: projection energy profiles and paired sign tests."""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .adapters import AdapterConfig, AdapterVariant, BaseAdapter, build_adapter
from .errors import DimensionError, InvalidParameterError
from .tasks import make_synthetic_task
from .training import gradient_correlation_matrix

logger = logging.getLogger(__name__)


@dataclass
class EnergyProfile:
    curve: np.ndarray
    degenerate: bool = False

    def at_fraction(self, fraction: float) -> float:
        return energy_at_fraction(self.curve, fraction)


def energy_curve(scores) -> EnergyProfile:
    """Normalized cumulative mean ``|score|`` per dimension, largest first."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DimensionError(f"scores must be 2-D, got shape {scores.shape}")
    energy = np.sort(np.abs(scores).mean(axis=0))[::-1]
    total = energy.sum()
    r = energy.shape[0]
    if total == 0.0:
        logger.warning('All projection scores are zero; energy profile is degenerate')
        return EnergyProfile(curve=np.arange(1, r + 1) / r, degenerate=True)
    curve = np.cumsum(energy) / total
    curve[-1] = 1.0
    return EnergyProfile(curve=curve)


def activation_energy_profile(adapter: BaseAdapter, data) -> EnergyProfile:
    """Energy profile of the adapter's pre-gate projection scores on ``data``."""
    return energy_curve(adapter.scores(data))


def energy_at_fraction(curve, fraction: float = 0.25) -> float:
    """Cumulative energy held by the top ``fraction`` of dimensions."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidParameterError(f"fraction must lie in (0, 1], got {fraction}")
    curve = np.asarray(curve)
    index = max(1, math.ceil(fraction * curve.shape[0])) - 1
    return float(curve[index])


def sign_test(better: Sequence[float], worse: Sequence[float]) -> int:
    """Count paired seeds where ``better`` is strictly below ``worse``."""
    if len(better) != len(worse):
        raise DimensionError(f"paired samples differ in length: {len(better)} vs {len(worse)}")
    return int(sum(1 for b, w in zip(better, worse) if b < w))


@dataclass
class CorrelationComparison:
    seed: int
    flylora: float
    lora_fa: float

    @property
    def decorrelated(self) -> bool:
        return self.flylora < self.lora_fa


def compare_gradient_correlation(
    n: int = 256,
    m: int = 32,
    r: int = 16,
    k: int = 4,
    samples: int = 4096,
    seed: int = 0,
    columns: int = 10,
    input_correlation: float = 0.5,
    mode: str = 'magnitude',
) -> CorrelationComparison:
    """Mean |off-diagonal| column-gradient correlation of FlyLoRA vs LoRA-FA.

    Both adapters start from the same projection draw with ``B = 0`` and see
    the same batch, so the only difference is the top-k mask.

    The magnitude rule is the default here because it keeps the ranks with the
    largest ``|h_i|``, which are the columns carrying most of the gradient
    ``h_i u``. The signed rule can skip strongly negative activations whose
    gradients are just as large. Pass ``mode="signed"`` to
    measure the training-time routing instead.
    """
    task = make_synthetic_task('linear-teacher', n, m, samples, 0.0, seed, input_correlation=input_correlation)
    results = {}
    for variant, active in ((AdapterVariant.FLYLORA, k), (AdapterVariant.LORA_FA, r)):
        config = AdapterConfig(m=m, n=n, r=r, k=active, variant=variant, mode=mode)
        adapter = build_adapter(config, seed, W0=task.base, key=task.name)
        corr = gradient_correlation_matrix(adapter, task.X_train, task.Y_train, columns=columns, seed=seed)
        results[variant] = corr.mean_abs_offdiag
    comparison = CorrelationComparison(seed, results[AdapterVariant.FLYLORA], results[AdapterVariant.LORA_FA])
    logger.info("Gradient correlation seed %d: flylora %.4f vs lora_fa %.4f", seed,
                comparison.flylora, comparison.lora_fa)
    return comparison
