"""Adam with bias correction, plus the global-norm gradient clip."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, DimensionError


@dataclass
class AdamState:
    """First/second moment estimates and the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, values: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(x) for x in values],
                   v=[np.zeros_like(x) for x in values])


def adam_step(values: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new values and advanced state.

    m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
    x ← x − lr · m̂ / (√v̂ + ε)  with m̂ = m/(1−β1ᵗ), v̂ = v/(1−β2ᵗ)
    """
    if len(values) != len(grads) or len(values) != len(state.m):
        raise DimensionError(f"adam_step: {len(values)} params, {len(grads)} grads, "
                             f"{len(state.m)} state slots")
    for x, g, m in zip(values, grads, state.m):
        if x.shape != g.shape or x.shape != m.shape:
            raise DimensionError(f"adam_step: shape mismatch {x.shape} vs grad {g.shape} "
                                 f"vs state {m.shape}")
    t = state.t + 1
    new_values, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for x, g, m, v in zip(values, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_values.append(x - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_values, AdamState(m=new_m, v=new_v, t=t)


@dataclass
class Adam:
    """Stateful wrapper applying adam_step to named parameter tensors in place.

    Parameters update in sorted-name order, so reductions and updates happen
    in a fixed order regardless of how the dict was assembled.
    """

    params: dict[str, Tensor]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _names: list[str] = field(init=False)
    _state: AdamState = field(init=False)

    def __post_init__(self):
        self._names = sorted(self.params)
        self._state = AdamState.fresh([self.params[n].values for n in self._names])

    def step(self) -> None:
        tensors = [self.params[n] for n in self._names]
        for name, p in zip(self._names, tensors):
            if p.grad is None:
                raise ContractError(f"parameter {name} has no gradient; run backward first")
        new_values, self._state = adam_step(
            [p.values for p in tensors], [p.grad for p in tensors], self._state,
            self.lr, self.beta1, self.beta2, self.eps)
        for p, x in zip(tensors, new_values):
            p.values[...] = x

    def zero_grad(self) -> None:
        for name in self._names:
            self.params[name].grad = None


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    names = sorted(params)
    for name in names:
        g = params[name].grad
        if g is not None:
            total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for name in names:
            g = params[name].grad
            if g is not None:
                params[name].grad = g * g.dtype.type(factor)
    return norm
