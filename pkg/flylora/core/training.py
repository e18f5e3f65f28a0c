"""Manual reverse-mode training, gradient checks and gradient statistics."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .adapters import Adapter, AdapterConfig, AdapterVariant, BaseAdapter, FlyAdapter, build_adapter
from .errors import DimensionError, InvalidParameterError, TrainingFailureError
from .linalg import SeededStream, as_vector, stable_key
from .routing import SelectionMode
from .tasks import ToyTask

logger = logging.getLogger(__name__)

COVARIANCE_STREAM = 211
MASK_STREAM = 212
SHUFFLE_STREAM = 17
GRADCHECK_STREAM = 229


# ---------------------------------------------------------------- losses

def mse_loss(outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean over the batch of ``0.5 ||f - y||^2`` and its gradient w.r.t. ``f``."""
    diff = outputs - targets
    batch = outputs.shape[0]
    return 0.5 * float(np.sum(diff * diff)) / batch, diff / batch


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    batch = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(batch)
    loss = -float(log_probs[rows, labels].sum()) / batch
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return loss, grad / batch


def task_loss(task: ToyTask, outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    if task.is_classification:
        return cross_entropy_loss(outputs, targets)
    return mse_loss(outputs, targets)


@dataclass
class Evaluation:
    loss: float
    mse: Optional[float] = None
    accuracy: Optional[float] = None


def evaluate_outputs(task: ToyTask, outputs: np.ndarray, targets: np.ndarray) -> Evaluation:
    loss, _ = task_loss(task, outputs, targets)
    if task.is_classification:
        return Evaluation(loss=loss, accuracy=float(np.mean(np.argmax(outputs, axis=1) == targets)))
    return Evaluation(loss=loss, mse=float(np.mean((outputs - targets) ** 2)))


def evaluate_adapter(adapter: BaseAdapter, task: ToyTask, split: str = 'test') -> Evaluation:
    X, Y = (task.X_test, task.Y_test) if split == 'test' else (task.X_train, task.Y_train)
    return evaluate_outputs(task, adapter.forward_batch(X).outputs, Y)


def evaluate_weight(weight: np.ndarray, task: ToyTask, split: str = 'test') -> Evaluation:
    """Evaluate a plain dense map (e.g. ``W0 + merged update``) on a task."""
    X, Y = (task.X_test, task.Y_test) if split == 'test' else (task.X_train, task.Y_train)
    return evaluate_outputs(task, X @ np.asarray(weight).T, Y)


# ---------------------------------------------------------------- training

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_loss: float
    histogram: List[int] = field(default_factory=list)


@dataclass
class TrainingTrace:
    variant: str
    task: str
    seed: int
    records: List[EpochRecord] = field(default_factory=list)

    @property
    def train_losses(self) -> List[float]:
        return [record.train_loss for record in self.records]

    @property
    def eval_losses(self) -> List[float]:
        return [record.eval_loss for record in self.records]

    @property
    def initial_loss(self) -> float:
        return self.records[0].train_loss

    @property
    def final_loss(self) -> float:
        return self.records[-1].train_loss

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_finite(loss: float, trace: TrainingTrace, where: str) -> None:
    if not np.isfinite(loss):
        raise TrainingFailureError(
            f"non-finite loss during {where} ({trace.variant} on {trace.task}, seed {trace.seed})",
            trace.records,
        )


def train_adapter(
    adapter: Adapter,
    task: ToyTask,
    epochs: int,
    lr: float,
    seed: int,
    batch_size: int = 32,
    momentum: float = 0.0,
    max_steps: Optional[int] = None,
    input_lr_scale: Optional[float] = None,
) -> TrainingTrace:
    """Mini-batch SGD on the task loss; only trainable arrays and balance state mutate.

    Arrays that multiply the raw input (trainable ``A``, router ``W_g``) step
    with ``lr * input_lr_scale``, the scale defaulting to ``1 / n``. Epoch 0
    of the trace is the untrained adapter.

    Args:
        adapter: adapter to train in place
        task: the toy task
        epochs: passes over the training split
        lr: learning rate, non-negative
        seed: shuffling seed
        batch_size: mini-batch size
        momentum: heavy-ball momentum, 0 for plain SGD
        max_steps: stop after this many optimizer steps
        input_lr_scale: learning-rate factor for input-side arrays

    Returns:
        TrainingTrace with one record per epoch

    Raises:
        TrainingFailureError: the loss became NaN or infinite
    """
    if lr < 0.0:
        raise InvalidParameterError(f"lr must be non-negative, got {lr}")
    if epochs < 0 or batch_size < 1:
        raise InvalidParameterError(f"need epochs >= 0 and batch_size >= 1, got {epochs}, {batch_size}")
    if not 0.0 <= momentum < 1.0:
        raise InvalidParameterError(f"momentum must lie in [0, 1), got {momentum}")
    if (task.m, task.n) != (adapter.config.m, adapter.config.n):
        raise DimensionError(f"task ({task.m}x{task.n}) does not fit adapter "
                             f"({adapter.config.m}x{adapter.config.n})")

    trace = TrainingTrace(variant=adapter.variant.value, task=task.name, seed=seed)
    params = adapter.parameters()
    input_params = adapter.input_parameters()
    input_scale = 1.0 / task.n if input_lr_scale is None else input_lr_scale
    step_sizes = {name: lr * input_scale if name in input_params else lr for name in params}
    velocity = {name: np.zeros_like(value) for name, value in params.items()}
    histogram = np.zeros(adapter.config.r, dtype=np.int64)

    def record(epoch: int, train_loss: float) -> None:
        eval_loss = evaluate_adapter(adapter, task).loss
        trace.records.append(EpochRecord(epoch, float(train_loss), float(eval_loss), histogram.tolist()))
        _check_finite(eval_loss, trace, f"evaluation after epoch {epoch}")

    initial = evaluate_adapter(adapter, task, split='train').loss
    _check_finite(initial, trace, 'initial evaluation')
    record(0, initial)

    shuffle = SeededStream(seed, SHUFFLE_STREAM)
    N = task.X_train.shape[0]
    steps = 0
    for epoch in range(1, epochs + 1):
        order = shuffle.generator(stable_key(task.name), epoch).permutation(N)
        total = 0.0
        seen = 0
        histogram[:] = 0
        for start in range(0, N, batch_size):
            idx = order[start:start + batch_size]
            cache = adapter.forward_batch(task.X_train[idx], train=True)
            if cache.mask is not None and cache.mask.shape[1] == adapter.config.r:
                histogram += cache.mask.sum(axis=0).astype(np.int64)
            loss, upstream = task_loss(task, cache.outputs, task.Y_train[idx])
            _check_finite(loss, trace, f"epoch {epoch}")
            grads = adapter.backward_batch(cache, upstream)
            for name, value in params.items():
                if momentum > 0.0:
                    velocity[name] = momentum * velocity[name] + grads[name]
                    value -= step_sizes[name] * velocity[name]
                else:
                    value -= step_sizes[name] * grads[name]
            adapter.end_step()
            total += loss * len(idx)
            seen += len(idx)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        record(epoch, total / seen)
        logger.debug("%s on %s epoch %d: train %.6g eval %.6g", trace.variant, task.name, epoch,
                     trace.records[-1].train_loss, trace.records[-1].eval_loss)
        if max_steps is not None and steps >= max_steps:
            break
    return trace


# ---------------------------------------------------------------- gradient checks

def finite_diff_check(
    adapter: BaseAdapter,
    x,
    target,
    step: float = 1e-5,
    parameter: str = 'B',
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The loss is ``0.5 ||f(x) - target||^2`` and the routing decision of the
    unperturbed forward is held fixed across perturbations.
    """
    if step <= 0.0:
        raise InvalidParameterError(f"step must be positive, got {step}")
    X = as_vector(x, adapter.config.n, 'x')[None, :]
    target = np.asarray(target, dtype=np.float64)
    params = adapter.parameters()
    if parameter not in params:
        raise InvalidParameterError(f"adapter has no trainable '{parameter}'")

    cache = adapter.forward_batch(X)
    mask = cache.mask
    residual = cache.outputs[0] - target
    analytic = adapter.backward_batch(cache, residual[None, :])[parameter]

    value = params[parameter]
    numeric = np.zeros_like(value)
    for idx in np.ndindex(value.shape):
        original = value[idx]
        value[idx] = original + step
        plus = adapter.forward_batch(X, mask=mask).outputs[0] - target
        value[idx] = original - step
        minus = adapter.forward_batch(X, mask=mask).outputs[0] - target
        value[idx] = original
        # 0.5 (|p|^2 - |m|^2) = 0.5 (p - m) . (p + m)
        numeric[idx] = 0.5 * float(np.dot(plus - minus, plus + minus)) / (2.0 * step)

    error = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)
    return float(error.max()) if error.size else 0.0


# ---------------------------------------------------------------- covariance

class CovarianceMode(str, Enum):
    DENSE = 'dense'
    MASKED = 'topk-masked'


@dataclass
class GradCovEstimate:
    sigma: np.ndarray = field(repr=False)
    samples: int
    mode: str
    mean_offdiag: float
    mean_abs_offdiag: float
    mean_abs_diag: float

    @property
    def ratio(self) -> float:
        return self.mean_abs_offdiag / self.mean_abs_diag if self.mean_abs_diag else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'samples': self.samples,
            'mode': self.mode,
            'mean_offdiag': self.mean_offdiag,
            'mean_abs_offdiag': self.mean_abs_offdiag,
            'mean_abs_diag': self.mean_abs_diag,
            'ratio': self.ratio,
        }


def coactivation_factor(r: int, k: int) -> float:
    """Probability that two fixed columns are both in a uniform k-of-r draw."""
    if r < 2:
        return 1.0
    return k * (k - 1) / (r * (r - 1))


def _synthetic_chunk(r: int, k: int, m: int, size: int, correlation: float, seed: int,
                     chunk: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = SeededStream(seed, COVARIANCE_STREAM).generator(chunk)
    shared = rng.standard_normal((size, 1, m))
    own = rng.standard_normal((size, r, m))
    grads = np.sqrt(correlation) * shared + np.sqrt(1.0 - correlation) * own
    mask_rng = SeededStream(seed, MASK_STREAM).generator(chunk)
    ranks = np.argsort(mask_rng.random((size, r)), axis=1)
    masks = (ranks < k).astype(np.float64)
    return grads, masks


def _summarize(sigma: np.ndarray, samples: int, mode: str) -> GradCovEstimate:
    r = sigma.shape[0]
    off = ~np.eye(r, dtype=bool)
    return GradCovEstimate(
        sigma=sigma,
        samples=samples,
        mode=mode,
        mean_offdiag=float(sigma[off].mean()) if r > 1 else 0.0,
        mean_abs_offdiag=float(np.abs(sigma[off]).mean()) if r > 1 else 0.0,
        mean_abs_diag=float(np.abs(np.diag(sigma)).mean()),
    )


def _accumulate_covariance(r, k, samples, seed, m, correlation, chunk_size, threads):
    if not 1 <= k <= r:
        raise InvalidParameterError(f"k must satisfy 1 <= k <= r, got k={k}, r={r}")
    if samples < 10_000:
        raise InvalidParameterError(f"samples must be at least 10000, got {samples}")
    if not 0.0 <= correlation <= 1.0:
        raise InvalidParameterError(f"correlation must lie in [0, 1], got {correlation}")

    sizes = [min(chunk_size, samples - start) for start in range(0, samples, chunk_size)]

    def work(item):
        index, size = item
        grads, masks = _synthetic_chunk(r, k, m, size, correlation, seed, index)
        dense = np.einsum('sim,sjm->ij', grads, grads)
        masked_grads = grads * masks[:, :, None]
        masked = np.einsum('sim,sjm->ij', masked_grads, masked_grads)
        return dense, masked

    items = list(enumerate(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, items))
    else:
        parts = [work(item) for item in items]

    dense = np.zeros((r, r))
    masked = np.zeros((r, r))
    for d_part, m_part in parts:
        dense += d_part
        masked += m_part
    dense /= samples
    masked /= samples
    # symmetric by construction; average out accumulation asymmetry
    return 0.5 * (dense + dense.T), 0.5 * (masked + masked.T)


def estimate_grad_covariance(
    r: int,
    k: int,
    samples: int,
    mode: Union[str, CovarianceMode] = CovarianceMode.MASKED,
    seed: int = 0,
    m: int = 16,
    correlation: float = 0.5,
    chunk_size: int = 4096,
    threads: int = 1,
) -> GradCovEstimate:
    """Covariance of synthetic column gradients with and without uniform k-of-r masking.

    Column gradients are ``sqrt(c) s + sqrt(1 - c) e_i`` in ``R^m`` with a
    shared factor ``s``; means are zero so the covariance is ``E[g_i^T g_j]``.
    """
    mode = CovarianceMode(mode)
    dense, masked = _accumulate_covariance(r, k, samples, seed, m, correlation, chunk_size, threads)
    sigma = masked if mode is CovarianceMode.MASKED else dense
    return _summarize(sigma, samples, mode.value)


@dataclass
class CovarianceAttenuation:
    r: int
    k: int
    dense: GradCovEstimate
    masked: GradCovEstimate
    expected: float

    @property
    def attenuation(self) -> float:
        if self.dense.mean_offdiag == 0.0:
            return 0.0
        return self.masked.mean_offdiag / self.dense.mean_offdiag

    @property
    def relative_error(self) -> float:
        if self.expected == 0.0:
            return abs(self.attenuation)
        return abs(self.attenuation - self.expected) / self.expected

    def to_dict(self) -> Dict[str, Any]:
        return {
            'r': self.r,
            'k': self.k,
            'attenuation': self.attenuation,
            'expected': self.expected,
            'relative_error': self.relative_error,
            'dense': self.dense.to_dict(),
            'masked': self.masked.to_dict(),
        }


def covariance_attenuation(
    r: int,
    k: int,
    samples: int = 100_000,
    seed: int = 0,
    m: int = 16,
    correlation: float = 0.5,
    threads: int = 1,
) -> CovarianceAttenuation:
    """Masked over dense off-diagonal covariance on the same synthetic gradients."""
    dense, masked = _accumulate_covariance(r, k, samples, seed, m, correlation, 4096, threads)
    result = CovarianceAttenuation(
        r=r, k=k,
        dense=_summarize(dense, samples, CovarianceMode.DENSE.value),
        masked=_summarize(masked, samples, CovarianceMode.MASKED.value),
        expected=coactivation_factor(r, k),
    )
    logger.info("Covariance attenuation r=%d k=%d: %.5f (expected %.5f)", r, k,
                result.attenuation, result.expected)
    return result


# ---------------------------------------------------------------- correlation

@dataclass
class GradientCorrelation:
    matrix: np.ndarray
    columns: List[int]
    zero_variance: List[int]

    @property
    def mean_abs_offdiag(self) -> float:
        size = self.matrix.shape[0]
        if size < 2:
            return 0.0
        off = ~np.eye(size, dtype=bool)
        return float(np.abs(self.matrix[off]).mean())


def gradient_correlation_matrix(
    adapter: BaseAdapter,
    X,
    targets,
    columns: int = 10,
    seed: int = 0,
    mode: Union[str, SelectionMode, None] = None,
) -> GradientCorrelation:
    """Pearson correlations between per-column ``B`` gradients over a batch.

    The gradient of column ``i`` for sample ``b`` is ``(alpha/r) h_bi u_b`` with
    ``h`` the gated rank activations and ``u`` the squared-error residual; the
    vectors compared are these gradients stacked over the batch.

    ``mode`` overrides the top-k selection rule of a FlyLoRA adapter for this
    measurement; other variants have no rank-wise selection and ignore it.
    """
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    r = adapter.config.r
    if not 1 <= columns <= r:
        raise InvalidParameterError(f"column subset must lie in [1, {r}], got {columns}")

    chosen = np.sort(SeededStream(seed, 223).generator().choice(r, size=columns, replace=False))
    if mode is not None and isinstance(adapter, FlyAdapter):
        cache = adapter.forward_batch(X, mask=adapter.routing_mask(X, mode))
        features, outputs = cache.hidden * cache.mask, cache.outputs
    else:
        features, outputs = adapter.features(X), adapter.forward_batch(X).outputs
    H = features[:, chosen] * adapter.scale
    U = outputs - targets
    count = U.size
    weights = np.einsum('bm,bm->b', U, U)
    second = (H * weights[:, None]).T @ H / count
    means = (H * U.sum(axis=1)[:, None]).sum(axis=0) / count
    cov = second - np.outer(means, means)
    var = np.clip(np.diag(cov), 0.0, None)
    degenerate = var <= 1e-30 * max(float(var.max()), 1e-300)

    scale = np.sqrt(np.where(degenerate, 1.0, var))
    corr = cov / np.outer(scale, scale)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    diag = np.where(degenerate, 0.0, 1.0)
    corr[np.diag_indices_from(corr)] = diag
    corr = np.clip(corr, -1.0, 1.0)

    flagged = [int(c) for c, bad in zip(chosen, degenerate) if bad]
    if flagged:
        logger.warning("Zero-variance gradient columns reported as uncorrelated: %s", flagged)
    return GradientCorrelation(matrix=corr, columns=[int(c) for c in chosen], zero_variance=flagged)


# ---------------------------------------------------------------- gradient check

def gradcheck_configs(m: int = 16, n: int = 32, r: int = 8, k: int = 2) -> Dict[str, AdapterConfig]:
    """One config per variant; Split-LoRA uses rank-``k`` experts when ``k`` divides ``r``."""
    experts = r // k if r % k == 0 else r
    return {
        variant.value: AdapterConfig(
            m=m, n=n, r=r,
            k=k if variant in (AdapterVariant.FLYLORA, AdapterVariant.SPLIT_LORA) else r,
            variant=variant,
            experts=experts if variant is AdapterVariant.SPLIT_LORA else 1,
        )
        for variant in AdapterVariant
    }


def gradcheck_instance(config: AdapterConfig, seed: int) -> Tuple[BaseAdapter, np.ndarray, np.ndarray]:
    """Random adapter with non-zero ``B`` plus an input and target for :func:`finite_diff_check`."""
    rng = SeededStream(seed, GRADCHECK_STREAM).generator()
    W0 = rng.normal(0.0, 1.0 / np.sqrt(config.n), size=(config.m, config.n))
    adapter = build_adapter(config, seed, W0=W0)
    adapter.B[...] = rng.standard_normal(adapter.B.shape)
    return adapter, rng.standard_normal(config.n), rng.standard_normal(config.m)


def run_gradcheck(
    configs: Dict[str, AdapterConfig],
    instances: int = 20,
    step: float = 1e-5,
    seed: int = 0,
) -> Dict[str, float]:
    """Worst ``B``-gradient relative error per config over random instances."""
    if instances < 1:
        raise InvalidParameterError(f"instances must be positive, got {instances}")
    worst = {}
    for name, config in configs.items():
        errors = [
            finite_diff_check(adapter, x, target, step=step, parameter='B')
            for adapter, x, target in (
                gradcheck_instance(config, stable_key(seed, name, i)) for i in range(instances)
            )
        ]
        worst[name] = max(errors)
        logger.info("Gradient check %s: max relative error %.3g over %d instances", name, worst[name], instances)
    return worst
