"""Central finite-difference verification of backward() gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, backward
from .errors import ContractError

DEFAULT_STEP = {np.dtype(np.float32): 1e-3, np.dtype(np.float64): 1e-6}
DEFAULT_TOL = {np.dtype(np.float32): 1e-3, np.dtype(np.float64): 1e-5}


def max_relative_error(loss_fn, params: list[Tensor], rng: np.random.Generator,
                       n_coords: int = 50, h: float | None = None,
                       rel_tol: float | None = None) -> float:
    """Max guarded relative error between analytic and central-difference grads.

    ``loss_fn`` is a zero-argument callable that runs the forward pass on the
    current values of ``params`` and returns a scalar loss Tensor. For each of
    ``n_coords`` coordinates sampled uniformly over all parameter entries, the
    analytic gradient from one backward() pass is compared against
    (L(x+h) − L(x−h)) / (2h) evaluated with the actual representable step.

    The error is |fd − an| / max(|fd|, |an|, floor). The floor is the
    round-off noise bound of the difference quotient, 4·eps·max(|L|, 1)/h,
    divided by ``rel_tol``: coordinates whose gradient sits below what central
    differences can resolve at this step are compared absolutely instead.
    """
    if not params:
        raise ContractError("gradient check needs at least one parameter")
    dtype = params[0].dtype
    if h is None:
        h = DEFAULT_STEP[dtype]
    if rel_tol is None:
        rel_tol = DEFAULT_TOL[dtype]
    for p in params:
        if not p.requires_grad:
            raise ContractError("gradient check parameters must have requires_grad set")
        p.grad = None

    with Tape() as tape:
        loss = loss_fn()
        backward(loss, tape)
    analytic = []
    for p in params:
        if p.grad is None:
            raise ContractError("backward left a checked parameter without a gradient")
        analytic.append(p.grad.reshape(-1).copy())

    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    bounds = np.cumsum(sizes)
    eps = float(np.finfo(dtype).eps)

    worst = 0.0
    for flat_index in rng.integers(0, total, size=n_coords):
        which = int(np.searchsorted(bounds, flat_index, side="right"))
        coord = int(flat_index - (bounds[which - 1] if which else 0))
        p = params[which]
        flat = p.values.reshape(-1)
        x0 = float(flat[coord])

        flat[coord] = dtype.type(x0 + h)
        x_plus = float(flat[coord])
        loss_plus = float(loss_fn().values)
        flat[coord] = dtype.type(x0 - h)
        x_minus = float(flat[coord])
        loss_minus = float(loss_fn().values)
        flat[coord] = x0

        fd = (loss_plus - loss_minus) / (x_plus - x_minus)
        an = float(analytic[which][coord])
        # 4 ulps of slack: reductions round once per accumulated term
        noise = 4.0 * eps * max(abs(loss_plus), abs(loss_minus), 1.0) / h
        floor = noise / rel_tol
        err = abs(fd - an) / max(abs(fd), abs(an), floor)
        worst = max(worst, err)
    return worst


def assert_gradients_match(loss_fn, params, rng, n_coords: int = 50,
                           h: float | None = None, rel_tol: float | None = None) -> float:
    """Run max_relative_error and fail loudly when it exceeds rel_tol."""
    dtype = params[0].dtype
    tol = rel_tol if rel_tol is not None else DEFAULT_TOL[dtype]
    err = max_relative_error(loss_fn, params, rng, n_coords=n_coords, h=h, rel_tol=tol)
    if err >= tol:
        raise AssertionError(f"gradient mismatch: max relative error {err:.3e} >= {tol:.0e} ({dtype})")
    return err
