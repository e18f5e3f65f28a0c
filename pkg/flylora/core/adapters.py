"""Adapter variants wrapping a single frozen linear map ``W0`` (``m x n``).

* LoRA: ``W0 x + (alpha/r) B A x`` with both ``A`` and ``B`` trainable.
* LoRA-FA: same forward, ``A`` frozen.
* Split-LoRA: ``N`` experts of rank ``r/N`` behind a trainable router ``W_g``
  with sigmoid gates on the top experts.
* FlyLoRA: frozen row-sparse ``A`` doubling as an implicit router; only the
  top-k ranks of ``A x`` (plus balancing bias) contribute, each with gate 1.

Batched passes (``forward_batch`` / ``backward_batch``) work on row-stacked
inputs and are what the training loop uses. The single-vector functions
mirror the textbook formulas and serve as the reference behaviour.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np

from .errors import ContractViolationError, DimensionError, InvalidParameterError
from .linalg import RowSparseMatrix, SeededStream, as_dense, as_vector, frozen_copy, spmv, stable_key
from .projection import ProjectionSpec, make_sparse_projection
from .routing import (
    DEFAULT_BALANCE_RATE,
    BalanceState,
    RoutingDecision,
    SelectionMode,
    select_topk,
    select_topk_batch,
)

logger = logging.getLogger(__name__)

ROUTER_STREAM = 7


class AdapterVariant(str, Enum):
    LORA = 'lora'
    LORA_FA = 'lora_fa'
    SPLIT_LORA = 'split_lora'
    FLYLORA = 'flylora'

    @classmethod
    def parse(cls, value: Union[str, 'AdapterVariant']) -> 'AdapterVariant':
        try:
            return cls(value)
        except ValueError as e:
            raise InvalidParameterError(f"unknown adapter variant '{value}'") from e


@dataclass(frozen=True)
class AdapterConfig:
    """Shape and routing hyper-parameters shared by every variant.

    ``k`` is the activated rank: FlyLoRA keeps ``k`` ranks, Split-LoRA keeps
    ``k / (r / experts)`` whole experts. ``alpha`` defaults to ``2r``.
    """

    m: int
    n: int
    r: int
    k: Optional[int] = None
    alpha: Optional[float] = None
    rho: float = 0.25
    variant: AdapterVariant = AdapterVariant.FLYLORA
    mode: SelectionMode = SelectionMode.SIGNED
    experts: int = 1
    balance_rate: float = DEFAULT_BALANCE_RATE
    trainable_a: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'variant', AdapterVariant.parse(self.variant))
        object.__setattr__(self, 'mode', SelectionMode.parse(self.mode))
        if self.k is None:
            object.__setattr__(self, 'k', self.r)
        if self.alpha is None:
            object.__setattr__(self, 'alpha', 2.0 * self.r)

        if self.m < 1 or self.n < 2:
            raise DimensionError(f"adapter needs m >= 1 and n >= 2, got m={self.m}, n={self.n}")
        if not 1 <= self.k <= self.r <= min(self.m, self.n):
            raise InvalidParameterError(
                f"need 1 <= k <= r <= min(m, n), got k={self.k}, r={self.r}, m={self.m}, n={self.n}"
            )
        if self.alpha <= 0:
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.rho < 1.0:
            raise InvalidParameterError(f"rho must lie in (0, 1), got {self.rho}")
        if self.balance_rate < 0.0:
            raise InvalidParameterError(f"balance_rate must be non-negative, got {self.balance_rate}")
        if self.variant is AdapterVariant.SPLIT_LORA:
            if self.experts < 1 or self.r % self.experts:
                raise InvalidParameterError(f"r={self.r} must split evenly over {self.experts} experts")
            if self.k % self.expert_rank:
                raise InvalidParameterError(
                    f"activated rank k={self.k} must be a multiple of the expert rank {self.expert_rank}"
                )

    @property
    def scale(self) -> float:
        return self.alpha / self.r

    @property
    def p(self) -> int:
        return ProjectionSpec.from_ratio(self.n, self.r, self.rho).p

    @property
    def expert_rank(self) -> int:
        return self.r // self.experts

    @property
    def active_experts(self) -> int:
        return self.k // self.expert_rank


@dataclass
class ForwardCache:
    """Activations kept from a batched forward pass for the matching backward."""

    inputs: np.ndarray
    outputs: np.ndarray
    hidden: np.ndarray
    mask: Optional[np.ndarray] = None
    extras: Dict[str, np.ndarray] = field(default_factory=dict)


def _check_batch(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n:
        raise DimensionError(f"batch must have shape (*, {n}), got {X.shape}")
    return X


def _base_matrix(W0, m: int, n: int) -> np.ndarray:
    if W0 is None:
        return frozen_copy(np.zeros((m, n)))
    W0 = as_dense(W0, 'W0')
    if W0.shape != (m, n):
        raise DimensionError(f"W0 has shape {W0.shape}, expected {(m, n)}")
    return frozen_copy(W0)


class BaseAdapter(ABC):
    """Common surface of every adapter variant."""

    def __init__(self, config: AdapterConfig, W0=None):
        self.config = config
        self.W0 = _base_matrix(W0, config.m, config.n)

    @property
    def scale(self) -> float:
        return self.config.scale

    @property
    def variant(self) -> AdapterVariant:
        return self.config.variant

    @abstractmethod
    def parameters(self) -> Dict[str, np.ndarray]:
        """Trainable arrays by name; the optimizer updates them in place."""

    def input_parameters(self) -> set:
        """Names of trainable arrays that multiply the raw input ``x``."""
        return set()

    @abstractmethod
    def forward(self, x) -> np.ndarray:
        pass

    @abstractmethod
    def forward_batch(self, X, train: bool = False, mask: Optional[np.ndarray] = None) -> ForwardCache:
        pass

    @abstractmethod
    def backward_batch(self, cache: ForwardCache, upstream: np.ndarray) -> Dict[str, np.ndarray]:
        """Gradients of ``sum_b upstream_b . f(x_b)`` with the cached routing held fixed."""

    @abstractmethod
    def delta_weight(self) -> np.ndarray:
        """Effective dense update ``m x n`` with the ``alpha/r`` scaling folded in."""

    @abstractmethod
    def features(self, X) -> np.ndarray:
        """Per-rank activations that reach ``B`` (``batch x r``), after gating."""

    def scores(self, X) -> np.ndarray:
        """Pre-gate projection activations (``batch x r``)."""
        return self.forward_batch(X).hidden

    def end_step(self) -> None:
        """Hook called once per optimizer step."""

    def frozen_arrays(self) -> Dict[str, np.ndarray]:
        return {'W0': self.W0}

    def __repr__(self) -> str:
        c = self.config
        return f"{self.__class__.__name__}(variant='{c.variant.value}', m={c.m}, n={c.n}, r={c.r}, k={c.k})"


class LoRAAdapter(BaseAdapter):
    """Dense LoRA (trainable ``A``) or LoRA-FA (frozen ``A``)."""

    def __init__(self, config: AdapterConfig, A, B=None, W0=None):
        super().__init__(config, W0)
        if config.variant not in (AdapterVariant.LORA, AdapterVariant.LORA_FA):
            raise InvalidParameterError(f"LoRAAdapter cannot host variant '{config.variant.value}'")
        A = as_dense(A.to_dense() if isinstance(A, RowSparseMatrix) else A, 'A')
        if A.shape != (config.r, config.n):
            raise DimensionError(f"A has shape {A.shape}, expected {(config.r, config.n)}")
        self.A = np.array(A, dtype=np.float64, copy=True) if self.trains_a else frozen_copy(A)
        self.B = np.zeros((config.m, config.r)) if B is None else np.array(as_dense(B, 'B'), copy=True)
        if self.B.shape != (config.m, config.r):
            raise DimensionError(f"B has shape {self.B.shape}, expected {(config.m, config.r)}")

    @property
    def trains_a(self) -> bool:
        return self.config.variant is AdapterVariant.LORA

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {'B': self.B}
        if self.trains_a:
            params['A'] = self.A
        return params

    def input_parameters(self) -> set:
        return {'A'} if self.trains_a else set()

    def frozen_arrays(self) -> Dict[str, np.ndarray]:
        frozen = super().frozen_arrays()
        if not self.trains_a:
            frozen['A'] = self.A
        return frozen

    def forward(self, x) -> np.ndarray:
        return lora_forward(self.W0, self.B, self.A, self.config.alpha, self.config.r, x)

    def forward_batch(self, X, train: bool = False, mask: Optional[np.ndarray] = None) -> ForwardCache:
        X = _check_batch(X, self.config.n)
        H = X @ self.A.T
        Y = X @ self.W0.T + self.scale * (H @ self.B.T)
        return ForwardCache(inputs=X, outputs=Y, hidden=H)

    def backward_batch(self, cache: ForwardCache, upstream: np.ndarray) -> Dict[str, np.ndarray]:
        grads = {'B': self.scale * (upstream.T @ cache.hidden)}
        if self.trains_a:
            grads['A'] = (self.scale * (upstream @ self.B)).T @ cache.inputs
        return grads

    def delta_weight(self) -> np.ndarray:
        return self.scale * (self.B @ self.A)

    def features(self, X) -> np.ndarray:
        return _check_batch(X, self.config.n) @ self.A.T


class FlyAdapter(BaseAdapter):
    """Frozen sparse projection as implicit router over rank-1 experts ``b_i a_i``.

    With ``trainable_a`` the projection is replaced by a dense trainable copy
    of the sparse draw and routing follows the current ``A``.
    """

    def __init__(
        self,
        config: AdapterConfig,
        A: RowSparseMatrix,
        B=None,
        W0=None,
        balance: Optional[BalanceState] = None,
        A_dense=None,
    ):
        super().__init__(config, W0)
        if config.variant is not AdapterVariant.FLYLORA:
            raise InvalidParameterError(f"FlyAdapter cannot host variant '{config.variant.value}'")
        if not isinstance(A, RowSparseMatrix):
            raise InvalidParameterError('FlyAdapter needs a RowSparseMatrix projection')
        if A.shape != (config.r, config.n):
            raise DimensionError(f"A has shape {A.shape}, expected {(config.r, config.n)}")
        self.A = A
        self.A_train: Optional[np.ndarray] = None
        if config.trainable_a:
            source = A.to_dense() if A_dense is None else as_dense(A_dense, 'A_dense')
            self.A_train = np.array(source, dtype=np.float64, copy=True)
        self.B = np.zeros((config.m, config.r)) if B is None else np.array(as_dense(B, 'B'), copy=True)
        if self.B.shape != (config.m, config.r):
            raise DimensionError(f"B has shape {self.B.shape}, expected {(config.m, config.r)}")
        self.balance = balance or BalanceState(r=config.r, k=config.k, rate=config.balance_rate)

    @property
    def bias(self) -> np.ndarray:
        return self.balance.bias

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {'B': self.B}
        if self.A_train is not None:
            params['A'] = self.A_train
        return params

    def input_parameters(self) -> set:
        return {'A'} if self.A_train is not None else set()

    def frozen_arrays(self) -> Dict[str, np.ndarray]:
        frozen = super().frozen_arrays()
        if self.A_train is None:
            frozen['A'] = self.A.to_dense()
        return frozen

    def project(self, x) -> np.ndarray:
        if self.A_train is not None:
            return self.A_train @ as_vector(x, self.config.n, 'x')
        return spmv(self.A, x)

    def project_batch(self, X) -> np.ndarray:
        if self.A_train is not None:
            return X @ self.A_train.T
        return self.A.apply(X)

    def routing_mask(self, X, mode: Union[str, SelectionMode, None] = None) -> np.ndarray:
        """Top-k mask of ``X`` under ``mode``, the configured rule when ``None``."""
        H = self.project_batch(_check_batch(X, self.config.n))
        mode = self.config.mode if mode is None else SelectionMode.parse(mode)
        _, mask = select_topk_batch(H, self.balance.bias, self.config.k, mode)
        return mask

    def forward(self, x) -> np.ndarray:
        return flylora_forward(self, x)[0]

    def forward_batch(self, X, train: bool = False, mask: Optional[np.ndarray] = None) -> ForwardCache:
        X = _check_batch(X, self.config.n)
        H = self.project_batch(X)
        if mask is None:
            _, mask = select_topk_batch(H, self.balance.bias, self.config.k, self.config.mode)
        elif mask.shape != H.shape:
            raise ContractViolationError(f"routing mask has shape {mask.shape}, expected {H.shape}")
        if train:
            self.balance.record_mask(mask)
        Y = X @ self.W0.T + self.scale * ((H * mask) @ self.B.T)
        return ForwardCache(inputs=X, outputs=Y, hidden=H, mask=mask)

    def backward_batch(self, cache: ForwardCache, upstream: np.ndarray) -> Dict[str, np.ndarray]:
        grads = {'B': self.scale * (upstream.T @ (cache.hidden * cache.mask))}
        if self.A_train is not None:
            grads['A'] = (self.scale * (upstream @ self.B) * cache.mask).T @ cache.inputs
        return grads

    def end_step(self) -> None:
        if self.balance.enabled:
            self.balance.update()
        else:
            self.balance.reset_window()

    def delta_weight(self) -> np.ndarray:
        A = self.A_train if self.A_train is not None else self.A.to_dense()
        return self.scale * (self.B @ A)

    def features(self, X) -> np.ndarray:
        cache = self.forward_batch(X)
        return cache.hidden * cache.mask


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class SplitAdapter(BaseAdapter):
    """``N`` trainable experts ``(A_e, B_e)`` of rank ``r/N`` behind a sigmoid top-k router."""

    def __init__(self, config: AdapterConfig, A_experts, B_experts=None, W_g=None, W0=None):
        super().__init__(config, W0)
        if config.variant is not AdapterVariant.SPLIT_LORA:
            raise InvalidParameterError(f"SplitAdapter cannot host variant '{config.variant.value}'")
        N, re = config.experts, config.expert_rank
        self.A = np.array(A_experts, dtype=np.float64, copy=True)
        if self.A.shape != (N, re, config.n):
            raise DimensionError(f"expert A stack has shape {self.A.shape}, expected {(N, re, config.n)}")
        self.B = np.zeros((N, config.m, re)) if B_experts is None else np.array(B_experts, dtype=np.float64, copy=True)
        if self.B.shape != (N, config.m, re):
            raise DimensionError(f"expert B stack has shape {self.B.shape}, expected {(N, config.m, re)}")
        self.W_g = np.zeros((N, config.n)) if W_g is None else np.array(as_dense(W_g, 'W_g'), copy=True)
        if self.W_g.shape != (N, config.n):
            raise DimensionError(f"router has shape {self.W_g.shape}, expected {(N, config.n)}")

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'B': self.B, 'A': self.A, 'W_g': self.W_g}

    def input_parameters(self) -> set:
        return {'A', 'W_g'}

    def forward(self, x) -> np.ndarray:
        return split_lora_forward(self, x)

    def forward_batch(self, X, train: bool = False, mask: Optional[np.ndarray] = None) -> ForwardCache:
        X = _check_batch(X, self.config.n)
        logits = X @ self.W_g.T
        if mask is None:
            _, mask = select_topk_batch(logits, np.zeros(self.config.experts), self.config.active_experts)
        gates = _sigmoid(logits)
        H = np.einsum('ern,bn->ber', self.A, X)
        E = np.einsum('emr,ber->bem', self.B, H)
        Y = X @ self.W0.T + self.scale * np.einsum('be,bem->bm', gates * mask, E)
        return ForwardCache(
            inputs=X, outputs=Y, hidden=H.reshape(X.shape[0], -1), mask=mask,
            extras={'gates': gates, 'expert_hidden': H, 'expert_out': E},
        )

    def backward_batch(self, cache: ForwardCache, upstream: np.ndarray) -> Dict[str, np.ndarray]:
        s = self.scale
        X, mask = cache.inputs, cache.mask
        gates, H, E = cache.extras['gates'], cache.extras['expert_hidden'], cache.extras['expert_out']
        active = gates * mask
        grad_B = s * np.einsum('be,bm,ber->emr', active, upstream, H)
        grad_H = s * np.einsum('be,emr,bm->ber', active, self.B, upstream)
        grad_A = np.einsum('ber,bn->ern', grad_H, X)
        grad_gate = s * np.einsum('bm,bem->be', upstream, E)
        grad_logits = grad_gate * gates * (1.0 - gates) * mask
        grad_W_g = grad_logits.T @ X
        return {'B': grad_B, 'A': grad_A, 'W_g': grad_W_g}

    def delta_weight(self) -> np.ndarray:
        # Gates are input dependent; the static update counts every expert with gate 1.
        return self.scale * np.einsum('emr,ern->mn', self.B, self.A)

    def features(self, X) -> np.ndarray:
        cache = self.forward_batch(X)
        gated = cache.extras['expert_hidden'] * (cache.extras['gates'] * cache.mask)[:, :, None]
        return gated.reshape(cache.inputs.shape[0], -1)

    def stacked_A(self) -> np.ndarray:
        return self.A.reshape(self.config.r, self.config.n)

    def stacked_B(self) -> np.ndarray:
        return self.B.transpose(1, 0, 2).reshape(self.config.m, self.config.r)


Adapter = Union[LoRAAdapter, FlyAdapter, SplitAdapter]


def lora_forward(W0, B, A, alpha: float, r: int, x) -> np.ndarray:
    """``W0 x + (alpha / r) B A x``; ``A`` may be dense or row-sparse."""
    W0 = as_dense(W0, 'W0')
    B = as_dense(B, 'B')
    m, n = W0.shape
    x = as_vector(x, n, 'x')
    if B.shape != (m, r):
        raise DimensionError(f"B has shape {B.shape}, expected {(m, r)}")
    if isinstance(A, RowSparseMatrix):
        if A.shape != (r, n):
            raise DimensionError(f"A has shape {A.shape}, expected {(r, n)}")
        h = spmv(A, x)
    else:
        A = as_dense(A, 'A')
        if A.shape != (r, n):
            raise DimensionError(f"A has shape {A.shape}, expected {(r, n)}")
        h = A @ x
    return W0 @ x + (alpha / r) * (B @ h)


def rankwise_moe_forward(B, A, gates, alpha: float, r: int, x, W0=None) -> np.ndarray:
    """``W0 x + (alpha / r) sum_i gates_i b_i a_i x``; all-ones gates give dense LoRA."""
    B = as_dense(B, 'B')
    A = as_dense(A.to_dense() if isinstance(A, RowSparseMatrix) else A, 'A')
    if A.shape[0] != r or B.shape[1] != r:
        raise DimensionError(f"A {A.shape} and B {B.shape} must both carry r={r} ranks")
    gates = as_vector(gates, r, 'gates')
    x = as_vector(x, A.shape[1], 'x')
    base = np.zeros(B.shape[0]) if W0 is None else as_dense(W0, 'W0') @ x
    return base + (alpha / r) * (B @ (gates * (A @ x)))


def split_lora_forward(adapter: SplitAdapter, x, k: Optional[int] = None) -> np.ndarray:
    """Explicit-router forward; ``k`` counts experts and defaults to the configured budget."""
    config = adapter.config
    k = config.active_experts if k is None else k
    if not 1 <= k <= config.experts:
        raise InvalidParameterError(f"k must satisfy 1 <= k <= N={config.experts}, got {k}")
    x = as_vector(x, config.n, 'x')
    logits = adapter.W_g @ x
    decision = select_topk(logits, np.zeros(config.experts), k)
    out = adapter.W0 @ x
    for e in sorted(decision.selected):
        out = out + adapter.scale * _sigmoid(logits[e]) * (adapter.B[e] @ (adapter.A[e] @ x))
    return out


def flylora_forward(adapter: FlyAdapter, x, train: bool = False):
    """Implicit-router forward.

    Returns:
        (output, decision): only the ``k`` selected rank-1 terms are accumulated,
        in ascending index order, each with gate 1. The bias steers selection
        but never the output value.
    """
    x = as_vector(x, adapter.config.n, 'x')
    scores = adapter.project(x)
    decision = select_topk(scores, adapter.balance.bias, adapter.config.k, adapter.config.mode)
    if train:
        adapter.balance.record(decision)
    selected = sorted(decision.selected)
    out = adapter.W0 @ x + adapter.scale * (adapter.B[:, selected] @ scores[selected])
    return out, decision


def backward_B(adapter: FlyAdapter, x, upstream, decision: RoutingDecision) -> np.ndarray:
    """Masked gradient ``dL/dB = (dL/dB_dense) Lambda`` for one sample.

    Column ``i`` is ``(alpha/r) (a_i x) upstream`` when ``i`` was selected and
    exactly zero otherwise. ``decision`` must come from the matching forward.
    """
    config = adapter.config
    x = as_vector(x, config.n, 'x')
    upstream = as_vector(upstream, config.m, 'upstream')
    if decision.r != config.r or decision.k != config.k:
        raise ContractViolationError(
            f"decision has r={decision.r}, k={decision.k}; adapter expects r={config.r}, k={config.k}"
        )
    scores = adapter.project(x)
    if not np.array_equal(scores, decision.scores):
        raise ContractViolationError('decision scores do not match this adapter and input')
    return adapter.scale * np.outer(upstream, scores * decision.mask)


def build_adapter(config: AdapterConfig, seed: int, W0=None, key: Optional[object] = None) -> Adapter:
    """Initialize an adapter of ``config.variant`` with ``B = 0``.

    Every variant starts from the same sparse draw for a given ``(seed, key)``:
    FlyLoRA keeps it sparse, LoRA and LoRA-FA densify it, and Split-LoRA cuts
    its rows into expert blocks. The Split-LoRA router is ``N(0, 1/n)``.
    """
    draw_seed = stable_key('projection', seed, key) if key is not None else seed
    A = make_sparse_projection(ProjectionSpec.from_ratio(config.n, config.r, config.rho, draw_seed))
    if config.variant is AdapterVariant.FLYLORA:
        return FlyAdapter(config, A, W0=W0)
    if config.variant is AdapterVariant.SPLIT_LORA:
        experts = A.to_dense().reshape(config.experts, config.expert_rank, config.n)
        rng = SeededStream(draw_seed, ROUTER_STREAM).generator()
        W_g = rng.normal(0.0, 1.0 / np.sqrt(config.n), size=(config.experts, config.n))
        return SplitAdapter(config, experts, W_g=W_g, W0=W0)
    return LoRAAdapter(config, A, W0=W0)


def count_activated_params(
    config: AdapterConfig,
    variant: Optional[Union[str, AdapterVariant]] = None,
    experts: Optional[int] = None,
    d_hidden: Optional[int] = None,
) -> int:
    """Activated trainable parameters of one square ``d x d`` layer.

    LoRA ``2dr``; LoRA-FA ``dr``; Split-LoRA ``2dk + dN``; FlyLoRA ``dk``.
    """
    variant = config.variant if variant is None else AdapterVariant.parse(variant)
    d = config.n if d_hidden is None else d_hidden
    N = config.experts if experts is None else experts
    if d < 1 or N < 1:
        raise InvalidParameterError(f"d and N must be positive, got d={d}, N={N}")
    if variant is AdapterVariant.LORA:
        return 2 * d * config.r
    if variant is AdapterVariant.LORA_FA:
        return d * config.r
    if variant is AdapterVariant.SPLIT_LORA:
        return 2 * d * config.k + d * N
    if variant is AdapterVariant.FLYLORA:
        return d * config.k
    raise InvalidParameterError(f"unknown adapter variant '{variant}'")


@dataclass(frozen=True)
class MemoryFootprint:
    """Bytes per square layer under 16-bit mixed precision."""

    params: int
    weight: int
    gradient: int
    optimizer: int
    activation: int

    @property
    def total(self) -> int:
        return self.weight + self.gradient + self.optimizer + self.activation


def memory_footprint(
    variant: Union[str, AdapterVariant],
    d: int,
    r: int,
    k: int,
    experts: int = 1,
    batch: int = 1,
    seq: int = 1,
) -> MemoryFootprint:
    """Theoretical memory model; LoRA-FA is accounted as LoRA with only ``B`` trainable."""
    variant = AdapterVariant.parse(variant)
    b, s, N = batch, seq, experts
    if variant is AdapterVariant.LORA:
        return MemoryFootprint(2 * d * r, 2 * (d * d + 2 * d * r), 4 * d * r, 24 * d * r, 2 * b * s * d + 2 * b * s * r)
    if variant is AdapterVariant.LORA_FA:
        return MemoryFootprint(d * r, 2 * (d * d + 2 * d * r), 2 * d * r, 12 * d * r, 2 * b * s * r)
    if variant is AdapterVariant.SPLIT_LORA:
        return MemoryFootprint(
            2 * d * k + d * N,
            2 * (d * d + 2 * d * r + d * N),
            4 * d * k + 2 * d * N,
            24 * d * k + 12 * d * N,
            2 * b * s * d + 2 * b * s * k + 2 * b * s * N,
        )
    return MemoryFootprint(d * k, 2 * (d * d + 2 * d * r), 2 * d * k, 12 * d * k, 2 * b * s * k)
