"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_checked: int
    tol: float
    worst: Optional[tuple] = None  # (input index, flat element index)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is zero from dividing roundoff
    by zero; above it the measure is purely relative.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(f: Callable[[], Tensor], x: Tensor, step: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. the entries of ``x`` (in place)."""
    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    grad = np.zeros(flat.size)
    idx = range(flat.size) if indices is None else indices
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = f().item()
            flat[i] = orig - step
            down = f().item()
            flat[i] = orig
            grad[i] = (up - down) / (2.0 * step)
    return grad.reshape(x.shape)


def grad_check(
    f: Callable[..., Tensor],
    inputs: Union[Tensor, Sequence[Tensor]],
    step: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare backprop gradients of ``f(*inputs)`` against central differences.

    ``inputs`` are perturbed in place and restored; every one of them is
    treated as a differentiable leaf.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    if step <= 0:
        raise ValueError("step must be positive")
    for t in inputs:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    loss = f(*inputs)
    loss.backward()
    analytic = [t.grad.copy() for t in inputs]

    worst_rel, worst_abs, worst_at, n = 0.0, 0.0, None, 0
    for k, (t, a) in enumerate(zip(inputs, analytic)):
        num = numerical_gradient(lambda: f(*inputs), t, step)
        rel = relative_error(a, num, floor).reshape(-1)
        absd = np.abs(a - num).reshape(-1)
        n += rel.size
        if rel.size and rel.max() > worst_rel:
            worst_rel = float(rel.max())
            worst_at = (k, int(rel.argmax()))
        if absd.size:
            worst_abs = max(worst_abs, float(absd.max()))
    return GradCheckReport(worst_rel, worst_abs, n, tol, worst_at)
