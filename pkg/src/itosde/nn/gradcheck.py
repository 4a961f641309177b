"""Central finite-difference gradient checking.

The independent oracle for every backward pass: perturb each coordinate of a
tensor's data in place, re-run the forward closure, and difference the scalar
loss.  Relative error is norm-based so near-zero gradients do not explode it.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / denom


def finite_diff_grad(loss_fn: Callable[[], float], arr: np.ndarray, h: float = 1e-5,
                     indices=None) -> np.ndarray:
    """Central differences of loss_fn w.r.t. entries of `arr` (edited in place).

    `indices` restricts the check to a flat-coordinate subset; unchecked
    coordinates come back as NaN so callers can mask them.
    """
    flat = arr.reshape(-1)
    if indices is None:
        indices = range(flat.size)
        g = np.empty(flat.size)
    else:
        g = np.full(flat.size, np.nan)
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = loss_fn()
        flat[i] = orig - h
        fm = loss_fn()
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g.reshape(arr.shape)


def check_gradients(build_loss: Callable[[], Tensor], tensors: dict[str, Tensor],
                    h: float = 1e-5, sample: int | None = None, seed: int = 0) -> dict[str, float]:
    """Compare autodiff gradients of a scalar loss against central differences.

    build_loss must rebuild the graph from the tensors' current data each call.
    Returns {tensor name: relative error}.  With `sample`, only that many
    randomly chosen coordinates per tensor are differenced (for big tensors).
    """
    for t in tensors.values():
        t.zero_grad()
    out = build_loss()
    if out.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {out.data.shape}")
    out.backward()
    analytic = {}
    for name, t in tensors.items():
        if t.grad is None:
            raise AssertionError(f"no gradient reached tensor {name!r}")
        analytic[name] = t.grad.copy()

    def scalar_loss():
        return float(build_loss().data)

    rng = np.random.default_rng(seed)
    errors = {}
    for name, t in tensors.items():
        n = t.data.size
        if sample is not None and sample < n:
            idx = rng.choice(n, size=sample, replace=False)
        else:
            idx = None
        fd = finite_diff_grad(scalar_loss, t.data, h=h, indices=idx)
        mask = ~np.isnan(fd.reshape(-1))
        errors[name] = rel_error(analytic[name].reshape(-1)[mask], fd.reshape(-1)[mask])
        t.zero_grad()
    return errors
