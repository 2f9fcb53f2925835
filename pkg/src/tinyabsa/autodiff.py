"""Dense tensors with tape-based reverse-mode automatic differentiation.

Values live in contiguous row-major numpy buffers, float32 by default with
float64 selectable for verification runs. Ops executed under an active Tape
record a backward rule; ``backward`` replays the tape in reverse and
accumulates gradients additively on fan-out, so each recorded op is visited
exactly once.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    LabelError,
    NonFiniteError,
)

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_default_dtype = np.dtype(np.float32)
_finite_checks = True


def set_default_dtype(dtype) -> None:
    """Select the element type newly constructed tensors use."""
    global _default_dtype
    dt = np.dtype(dtype)
    if dt not in _FLOAT_DTYPES:
        raise ConfigurationError(f"unsupported tensor dtype {dt}; use float32 or float64")
    _default_dtype = dt


def get_default_dtype() -> np.dtype:
    return _default_dtype


@contextmanager
def default_dtype(dtype):
    """Temporarily switch the default element type (verification runs)."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def set_finite_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf guard on numerically heavy forward ops."""
    global _finite_checks
    _finite_checks = bool(enabled)


def _ensure_finite(values: np.ndarray, op: str) -> None:
    if _finite_checks and not np.isfinite(values).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """Dense row-major array with an optional gradient buffer.

    A Tensor is simultaneously a value holder and a node in the computation
    graph: ops that run under an active Tape record how to push gradients
    back to their inputs. ``grad`` is filled by ``backward`` for tensors
    created with ``requires_grad=True``.
    """

    __slots__ = ("values", "grad", "requires_grad", "node_id")
    _ids = itertools.count()

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values)
        target = np.dtype(dtype) if dtype is not None else _default_dtype
        if target not in _FLOAT_DTYPES:
            raise ConfigurationError(f"unsupported tensor dtype {target}")
        self.values = np.ascontiguousarray(arr, dtype=target)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(Tensor._ids)

    @classmethod
    def _wrap(cls, values: np.ndarray) -> "Tensor":
        # Internal: adopt an op result without casting or copying.
        t = cls.__new__(cls)
        t.values = values
        t.grad = None
        t.requires_grad = False
        t.node_id = next(cls._ids)
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def item(self) -> float:
        return float(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", param" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def param(values, dtype=None) -> Tensor:
    """Create a trainable leaf tensor (``backward`` fills its grad)."""
    return Tensor(values, requires_grad=True, dtype=dtype)


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02, cutoff: float = 2.0) -> np.ndarray:
    """Normal samples with |z| > cutoff redrawn, scaled by std."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > cutoff
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > cutoff
    return (out * std).astype(_default_dtype)


# ---------------------------------------------------------------------------
# Tape


_tape_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tape_state, "stack", None)
    if stack is None:
        stack = _tape_state.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered recording of ops for one thread.

    Topological order holds by construction: an op is appended only after
    its inputs exist. Use as a context manager around the forward pass.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        if popped is not self:
            raise ContractError("tape context exited out of order")

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self._ops.append((out, inputs, backward_fn))
        self._produced.add(out.node_id)

    def __len__(self) -> int:
        return len(self._ops)


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every trainable leaf reachable from ``loss``.

    Gradients of fan-out nodes accumulate additively; each recorded op's
    backward rule runs at most once. Leaf grads are overwritten, not
    accumulated across calls.
    """
    if loss.values.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    adjoints: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.values)}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad and loss.node_id not in tape._produced:
        leaves[loss.node_id] = loss
    for out, inputs, backward_fn in reversed(tape._ops):
        g = adjoints.pop(out.node_id, None)
        if g is None:
            continue  # dead branch: output never reached the loss
        needs = tuple(t.requires_grad or t.node_id in tape._produced for t in inputs)
        grads = backward_fn(g, needs)
        for t, gt, need in zip(inputs, grads, needs):
            if not need or gt is None:
                continue
            held = adjoints.get(t.node_id)
            adjoints[t.node_id] = gt if held is None else held + gt
            if t.requires_grad and t.node_id not in tape._produced:
                leaves[t.node_id] = t
    for node_id, t in leaves.items():
        g = adjoints.get(node_id)
        if g is not None:
            t.grad = np.ascontiguousarray(g, dtype=t.values.dtype)


def _register(values: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor._wrap(values)
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squeezed:
        g = g.sum(axis=squeezed, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise and structural ops


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")

    def backward_fn(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None,
        )

    return _register(a.values + b.values, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")

    def backward_fn(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(-g, b.shape) if needs[1] else None,
        )

    return _register(a.values - b.values, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")

    def backward_fn(g, needs):
        return (
            _unbroadcast(g * b.values, a.shape) if needs[0] else None,
            _unbroadcast(g * a.values, b.shape) if needs[1] else None,
        )

    return _register(a.values * b.values, (a, b), backward_fn)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward_fn(g, needs):
        return (g * c if needs[0] else None,)

    return _register(x.values * c, (x,), backward_fn)


def add_const(x: Tensor, c) -> Tensor:
    """Add a non-differentiable constant (scalar or broadcastable array)."""
    carr = np.asarray(c, dtype=x.dtype)

    def backward_fn(g, needs):
        return (_unbroadcast(g, x.shape) if needs[0] else None,)

    return _register(x.values + carr, (x,), backward_fn)


def mul_const(x: Tensor, c) -> Tensor:
    """Multiply by a non-differentiable constant array (masking)."""
    carr = np.asarray(c, dtype=x.dtype)

    def backward_fn(g, needs):
        return (_unbroadcast(g * carr, x.shape) if needs[0] else None,)

    return _register(x.values * carr, (x,), backward_fn)


def transpose(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        return (np.transpose(g, inverse),)

    return _register(np.transpose(x.values, axes), (x,), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    original = x.shape

    def backward_fn(g, needs):
        return (g.reshape(original) if needs[0] else None,)

    return _register(x.values.reshape(shape), (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        return (np.full(x.shape, float(g), dtype=x.dtype),)

    return _register(np.asarray(x.values.sum(), dtype=x.dtype), (x,), backward_fn)


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked leading dimensions broadcast numpy-style.

    For 2-D operands this is the plain m×k by k×n product with backward
    da = dc·bᵀ and db = aᵀ·dc.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-D or stacked operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: leading dimensions disagree for {a.shape} @ {b.shape}") from None
    values = a.values @ b.values
    _ensure_finite(values, "matmul")

    def backward_fn(g, needs):
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(g @ np.swapaxes(b.values, -1, -2), a.shape)
        if needs[1]:
            gb = _unbroadcast(np.swapaxes(a.values, -1, -2) @ g, b.shape)
        return ga, gb

    return _register(values, (a, b), backward_fn)


# ---------------------------------------------------------------------------
# Nonlinearities and losses


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        return (g * (x.values > 0),)

    return _register(np.maximum(x.values, 0), (x,), backward_fn)


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis, computed with max subtraction."""
    m = x.values.max(axis=-1, keepdims=True)
    e = np.exp(x.values - m)
    values = e / e.sum(axis=-1, keepdims=True)
    _ensure_finite(values, "softmax")

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        dot = (g * values).sum(axis=-1, keepdims=True)
        return (values * (g - dot),)

    return _register(values, (x,), backward_fn)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of an n×c matrix."""
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows needs an n×c matrix, got shape {x.shape}")
    if x.shape[1] < 1:
        raise DimensionError("softmax_rows needs at least one column")
    return softmax(x)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer class labels.

    ``labels`` is a length-n sequence of class indices into the columns of
    ``logits``; an out-of-range index raises LabelError naming its position.
    """
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy needs n×c logits, got shape {logits.shape}")
    y = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if y.shape != (n,):
        raise DimensionError(f"cross_entropy: {n} logit rows but labels shaped {y.shape}")
    bad = np.nonzero((y < 0) | (y >= c))[0]
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"label {int(y[i])} at index {i} outside [0, {c})")
    m = logits.values.max(axis=-1, keepdims=True)
    z = logits.values - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    loss = np.asarray(-logp[np.arange(n), y].mean(), dtype=logits.dtype)
    _ensure_finite(loss, "cross_entropy")

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        p = np.exp(logp)
        p[np.arange(n), y] -= 1.0
        return (p * (float(g) / n),)

    return _register(loss, (logits,), backward_fn)


# ---------------------------------------------------------------------------
# Convolution, dropout, normalization


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded 1-D convolution over time.

    ``x`` is (T, C_in) or batched (B, T, C_in); ``kernels`` is
    (k, C_in, C_out) with odd k; positions outside [0, T) read zero, so the
    output keeps length T.
    """
    if kernels.ndim != 3:
        raise DimensionError(f"conv1d kernels must be (k, C_in, C_out), got {kernels.shape}")
    k, c_in, c_out = kernels.shape
    if k % 2 == 0:
        raise ConfigurationError(f"conv1d kernel width must be odd, got {k}")
    if x.ndim not in (2, 3):
        raise DimensionError(f"conv1d input must be (T, C_in) or (B, T, C_in), got {x.shape}")
    if x.shape[-1] != c_in:
        raise DimensionError(f"conv1d: input channels {x.shape} do not match kernels {kernels.shape}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv1d bias must be ({c_out},), got {bias.shape}")

    batched = x.ndim == 3
    xb = x.values if batched else x.values[None]
    b_sz, t, _ = xb.shape
    half = k // 2
    padded = np.zeros((b_sz, t + 2 * half, c_in), dtype=x.dtype)
    padded[:, half:half + t] = xb
    out = np.broadcast_to(bias.values, (b_sz, t, c_out)).copy()
    for d in range(k):
        out += padded[:, d:d + t] @ kernels.values[d]
    _ensure_finite(out, "conv1d")
    values = out if batched else out[0]

    def backward_fn(g, needs):
        gb = g if batched else g[None]
        gx = gk = gbias = None
        if needs[0]:
            gpad = np.zeros_like(padded)
            for d in range(k):
                gpad[:, d:d + t] += gb @ kernels.values[d].T
            gx = gpad[:, half:half + t]
            if not batched:
                gx = gx[0]
        if needs[1]:
            flat_g = gb.reshape(-1, c_out)
            gk = np.empty_like(kernels.values)
            for d in range(k):
                gk[d] = padded[:, d:d + t].reshape(-1, c_in).T @ flat_g
        if needs[2]:
            gbias = gb.sum(axis=(0, 1))
        return gx, gk, gbias

    return _register(values, (x, kernels, bias), backward_fn)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1−p); eval mode is identity."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs a seeded rng")
    keep = rng.random(x.shape) >= p
    factor = 1.0 / (1.0 - p)

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        return (g * keep * factor,)

    return _register(x.values * keep * factor, (x,), backward_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm affine must be ({d},), got {gain.shape} and {bias.shape}")
    mean = x.values.mean(axis=-1, keepdims=True)
    centered = x.values - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    values = normed * gain.values + bias.values
    _ensure_finite(values, "layer_norm")

    def backward_fn(g, needs):
        gx = ggain = gbias = None
        if needs[0]:
            gn = g * gain.values
            gx = inv_std / d * (d * gn - gn.sum(axis=-1, keepdims=True)
                                - normed * (gn * normed).sum(axis=-1, keepdims=True))
        if needs[1]:
            ggain = (g * normed).reshape(-1, d).sum(axis=0)
        if needs[2]:
            gbias = g.reshape(-1, d).sum(axis=0)
        return gx, ggain, gbias

    return _register(values, (x, gain, bias), backward_fn)


# ---------------------------------------------------------------------------
# Lookup and pooling


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by integer id array; backward scatter-adds."""
    idx = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(f"embedding ids outside table of {table.shape[0]} rows")

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        gt = np.zeros_like(table.values)
        np.add.at(gt, idx, g)
        return (gt,)

    return _register(table.values[idx], (table,), backward_fn)


def take_position(x: Tensor, pos: int) -> Tensor:
    """Select one time position from (B, L, D) hidden states."""
    if x.ndim != 3:
        raise DimensionError(f"take_position needs (B, L, D), got {x.shape}")
    if not 0 <= pos < x.shape[1]:
        raise ContractError(f"position {pos} outside sequence of length {x.shape[1]}")

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        gx = np.zeros_like(x.values)
        gx[:, pos, :] = g
        return (gx,)

    return _register(x.values[:, pos, :].copy(), (x,), backward_fn)


def masked_max_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Max over time of (B, T, C), ignoring positions where mask is 0."""
    m = np.asarray(mask, dtype=bool)
    if x.ndim != 3 or m.shape != x.shape[:2]:
        raise DimensionError(f"masked_max_pool: input {x.shape} vs mask {m.shape}")
    if (~m.any(axis=1)).any():
        row = int(np.nonzero(~m.any(axis=1))[0][0])
        raise ContractError(f"masked_max_pool: every position masked in batch row {row}")
    screened = np.where(m[:, :, None], x.values, -np.inf)
    idx = screened.argmax(axis=1)
    values = np.take_along_axis(screened, idx[:, None, :], axis=1)[:, 0, :]

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        gx = np.zeros_like(x.values)
        np.put_along_axis(gx, idx[:, None, :], g[:, None, :], axis=1)
        return (gx,)

    return _register(values, (x,), backward_fn)


def masked_mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over the positions where mask is 1; raises on an empty mask."""
    m = np.asarray(mask, dtype=x.dtype)
    if x.ndim != 3 or m.shape != x.shape[:2]:
        raise DimensionError(f"masked_mean_pool: input {x.shape} vs mask {m.shape}")
    counts = m.sum(axis=1)
    if (counts == 0).any():
        row = int(np.nonzero(counts == 0)[0][0])
        raise ContractError(f"masked_mean_pool: empty mask in batch row {row}")
    values = (x.values * m[:, :, None]).sum(axis=1) / counts[:, None]

    def backward_fn(g, needs):
        if not needs[0]:
            return (None,)
        return (m[:, :, None] * (g / counts[:, None])[:, None, :],)

    return _register(values, (x,), backward_fn)
