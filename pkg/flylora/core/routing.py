"""Top-k rank selection with loss-free load balancing.

Selection runs on the projection scores plus a balancing bias. The bias only
changes *which* ranks are active; it never enters an adapter's output. After
each optimizer step the bias moves by ``u * sign(expected - actual)`` per rank
and the window counters reset.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import DimensionError, InvalidParameterError
from .linalg import SeededStream, as_vector

logger = logging.getLogger(__name__)

DEFAULT_BALANCE_RATE = 1e-3


class SelectionMode(str, Enum):
    SIGNED = 'signed'
    MAGNITUDE = 'magnitude'

    @classmethod
    def parse(cls, value: Union[str, 'SelectionMode']) -> 'SelectionMode':
        try:
            return cls(value)
        except ValueError as e:
            raise InvalidParameterError(f"unknown selection mode '{value}'") from e


def _check_k(k: int, r: int) -> None:
    if not 1 <= k <= r:
        raise InvalidParameterError(f"k must satisfy 1 <= k <= r, got k={k}, r={r}")


def selection_criterion(scores: np.ndarray, bias: np.ndarray, mode: SelectionMode) -> np.ndarray:
    if mode is SelectionMode.MAGNITUDE:
        return np.abs(scores) + bias
    return scores + bias


@dataclass(frozen=True)
class RoutingDecision:
    """Ordered top-k indices plus the pre-bias scores that produced them."""

    selected: Tuple[int, ...]
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64, copy=True)
        scores.setflags(write=False)
        object.__setattr__(self, 'scores', scores)
        object.__setattr__(self, 'selected', tuple(int(i) for i in self.selected))

    @property
    def k(self) -> int:
        return len(self.selected)

    @property
    def r(self) -> int:
        return self.scores.shape[0]

    @property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.r, dtype=np.float64)
        mask[list(self.selected)] = 1.0
        return mask


def select_topk(scores, d, k: int, mode: Union[str, SelectionMode] = SelectionMode.SIGNED) -> RoutingDecision:
    """Pick the ``k`` ranks with the largest criterion, ties going to the lowest index.

    Signed mode ranks ``scores + d``; magnitude mode ranks ``|scores| + d``.
    """
    mode = SelectionMode.parse(mode)
    scores = as_vector(scores, name='scores')
    d = as_vector(d, length=scores.shape[0], name='bias')
    _check_k(k, scores.shape[0])
    criterion = selection_criterion(scores, d, mode)
    order = np.argsort(-criterion, kind='stable')[:k]
    return RoutingDecision(selected=tuple(order), scores=scores)


def select_topk_batch(
    scores: np.ndarray,
    d: np.ndarray,
    k: int,
    mode: Union[str, SelectionMode] = SelectionMode.SIGNED,
) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`select_topk` over a ``batch x r`` score matrix.

    Returns:
        (indices, mask): ``batch x k`` ordered indices and the ``batch x r`` 0/1 mask
    """
    mode = SelectionMode.parse(mode)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DimensionError(f"batch scores must be 2-D, got shape {scores.shape}")
    d = as_vector(d, length=scores.shape[1], name='bias')
    _check_k(k, scores.shape[1])
    criterion = selection_criterion(scores, d, mode)
    indices = np.argsort(-criterion, axis=1, kind='stable')[:, :k]
    mask = np.zeros_like(scores)
    np.put_along_axis(mask, indices, 1.0, axis=1)
    return indices, mask


@dataclass
class BalanceState:
    """Balancing bias and the assignment counters of the current window.

    Single writer: the training loop that owns the adapter.
    A rate of 0 disables balancing while keeping the accounting.
    """

    r: int
    k: int
    rate: float = DEFAULT_BALANCE_RATE
    bias: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None
    expected: Optional[np.ndarray] = None
    tokens: int = 0

    def __post_init__(self):
        _check_k(self.k, self.r)
        if self.rate < 0.0:
            raise InvalidParameterError(f"balance rate must be non-negative, got {self.rate}")
        self.bias = np.zeros(self.r) if self.bias is None else as_vector(self.bias, self.r, 'bias').copy()
        self.counts = (
            np.zeros(self.r, dtype=np.int64) if self.counts is None
            else np.asarray(self.counts, dtype=np.int64).copy()
        )
        if self.counts.shape != (self.r,) or np.any(self.counts < 0):
            raise InvalidParameterError('counts must be a non-negative vector of length r')
        self.expected = (
            np.zeros(self.r) if self.expected is None
            else as_vector(self.expected, self.r, 'expected').copy()
        )

    @property
    def enabled(self) -> bool:
        return self.rate > 0.0

    def record(self, decision: RoutingDecision) -> 'BalanceState':
        if decision.r != self.r:
            raise DimensionError(f"decision covers {decision.r} ranks, state tracks {self.r}")
        self.counts[list(decision.selected)] += 1
        self._advance(1)
        return self

    def record_mask(self, mask: np.ndarray) -> 'BalanceState':
        """Account for a whole batch of decisions given as a ``batch x r`` 0/1 mask."""
        mask = np.asarray(mask)
        if mask.ndim != 2 or mask.shape[1] != self.r:
            raise DimensionError(f"mask must have shape (*, {self.r}), got {mask.shape}")
        self.counts += mask.sum(axis=0).astype(np.int64)
        self._advance(mask.shape[0])
        return self

    def _advance(self, tokens: int) -> None:
        self.tokens += tokens
        self.expected = np.full(self.r, self.k / self.r * self.tokens)

    def update(self) -> 'BalanceState':
        """Move every bias component by ``u * sign(expected - counts)``, then reset the window."""
        self.bias = self.bias + self.rate * np.sign(self.expected - self.counts)
        self.reset_window()
        return self

    def reset_window(self) -> None:
        self.counts = np.zeros(self.r, dtype=np.int64)
        self.expected = np.zeros(self.r)
        self.tokens = 0

    def snapshot(self) -> dict:
        return {
            'r': self.r,
            'k': self.k,
            'rate': self.rate,
            'bias': [float(v) for v in self.bias],
        }


def update_balance_bias(state: BalanceState) -> BalanceState:
    return state.update()


def record_assignments(state: BalanceState, decision: RoutingDecision) -> BalanceState:
    return state.record(decision)


def coefficient_of_variation(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    mean = counts.mean()
    if mean == 0.0:
        return 0.0
    return float(counts.std() / mean)


@dataclass
class BalanceSimulation:
    counts: np.ndarray
    bias_trace: List[np.ndarray]
    cv: float


def simulate_balanced_routing(
    r: int,
    k: int,
    windows: int = 200,
    tokens_per_window: int = 128,
    rate: float = DEFAULT_BALANCE_RATE,
    skew: float = 0.15,
    seed: int = 0,
    mode: Union[str, SelectionMode] = SelectionMode.SIGNED,
    score_offsets: Optional[np.ndarray] = None,
) -> BalanceSimulation:
    """Route a skewed synthetic score stream and report cumulative assignment spread.

    Scores are standard normal plus a fixed per-rank offset, ``skew * i / (r - 1)``
    unless ``score_offsets`` is given. The bias is updated once per window.
    """
    if score_offsets is None:
        score_offsets = skew * np.arange(r) / max(r - 1, 1)
    offsets = as_vector(score_offsets, r, 'score_offsets')
    state = BalanceState(r=r, k=k, rate=rate)
    stream = SeededStream(seed, 505)
    totals = np.zeros(r, dtype=np.int64)
    trace = []
    for window in range(windows):
        scores = stream.generator(window).standard_normal((tokens_per_window, r)) + offsets
        _, mask = select_topk_batch(scores, state.bias, k, mode)
        state.record_mask(mask)
        totals += state.counts
        state.update()
        trace.append(state.bias.copy())
    cv = coefficient_of_variation(totals)
    logger.debug("Balance simulation r=%d k=%d u=%g: cv=%.4f", r, k, rate, cv)
    return BalanceSimulation(counts=totals, bias_trace=trace, cv=cv)
