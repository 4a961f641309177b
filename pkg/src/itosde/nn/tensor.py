"""Array-valued reverse-mode autodiff.

A Tensor wraps a float64 numpy array plus an optional gradient accumulator.
Operations build a graph of backward closures; Tensor.backward() replays them
in reverse topological order.  Everything is 64-bit and single-threaded per
graph, so forward and backward are bit-reproducible.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def ensure_grad(self) -> np.ndarray:
        """Gradient buffer for closures that accumulate into slices in place."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, output_grad=None) -> None:
        """Accumulate gradients of this tensor's recorded computation.

        output_grad defaults to ones (appropriate for scalar losses) and must
        match this tensor's shape.
        """
        if output_grad is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(output_grad, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ValueError(
                    f"output_grad shape {seed.shape} does not match tensor shape {self.data.shape}"
                )
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.accumulate(seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul_scalar(other, -1.0))
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(mul_scalar(self, -1.0), float(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def _bw(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=_bw)


def add_scalar(a: Tensor, c: float) -> Tensor:
    def _bw(g):
        if a.needs_grad:
            a.accumulate(g)

    return Tensor(a.data + c, parents=(a,), backward=_bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def _bw(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=_bw)


def mul_scalar(a: Tensor, c: float) -> Tensor:
    def _bw(g):
        if a.needs_grad:
            a.accumulate(g * c)

    return Tensor(a.data * c, parents=(a,), backward=_bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def _bw(g):
        if a.needs_grad:
            a.accumulate(g @ b.data.T)
        if b.needs_grad:
            b.accumulate(a.data.T @ g)

    return Tensor(out_data, parents=(a, b), backward=_bw)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.data.shape

    def _bw(g):
        if a.needs_grad:
            a.accumulate(g.reshape(old))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=_bw)


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))

    def _bw(g):
        if a.needs_grad:
            a.accumulate(g * s * (1.0 - s))

    return Tensor(s, parents=(a,), backward=_bw)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def _bw(g):
        if a.needs_grad:
            a.accumulate(g * (1.0 - y * y))

    return Tensor(y, parents=(a,), backward=_bw)


def silu(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    y = a.data * s

    def _bw(g):
        if a.needs_grad:
            a.accumulate(g * (s + y * (1.0 - s)))

    return Tensor(y, parents=(a,), backward=_bw)


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def _bw(g):
        if a.needs_grad:
            a.accumulate(g * sign)

    return Tensor(np.abs(a.data), parents=(a,), backward=_bw)


def sum_over(a: Tensor, axis=None) -> Tensor:
    out_data = a.data.sum(axis=axis)

    def _bw(g):
        if not a.needs_grad:
            return
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full_like(a.data, g))
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return Tensor(out_data, parents=(a,), backward=_bw)


def mean_over(a: Tensor, axis=None) -> Tensor:
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]
    return mul_scalar(sum_over(a, axis), 1.0 / n)


def chunk2(a: Tensor, axis: int = 1) -> tuple[Tensor, Tensor]:
    """Split evenly into two halves along `axis`; channel count must be even."""
    n = a.data.shape[axis]
    if n % 2 != 0:
        raise ValueError(f"chunk2 needs an even size along axis {axis}, got {n}")
    half = n // 2
    sl_lo = tuple(slice(None) if i != axis else slice(0, half) for i in range(a.data.ndim))
    sl_hi = tuple(slice(None) if i != axis else slice(half, n) for i in range(a.data.ndim))

    def _bw_lo(g):
        if a.needs_grad:
            a.ensure_grad()[sl_lo] += g

    def _bw_hi(g):
        if a.needs_grad:
            a.ensure_grad()[sl_hi] += g

    lo = Tensor(a.data[sl_lo].copy(), parents=(a,), backward=_bw_lo)
    hi = Tensor(a.data[sl_hi].copy(), parents=(a,), backward=_bw_hi)
    return lo, hi


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.needs_grad:
                sl = tuple(
                    slice(None) if i != axis else slice(int(lo), int(hi))
                    for i in range(g.ndim)
                )
                t.accumulate(g[sl])

    return Tensor(out_data, parents=tuple(tensors), backward=_bw)


def cond_gate(z: Tensor, cond: Tensor) -> Tensor:
    """Fused gate: split (z + cond) evenly along channels, tanh(a) * sigmoid(b).

    One node instead of add/chunk/tanh/sigmoid/mul keeps the per-step pass
    count down on the training hot path.
    """
    Z = z.data + cond.data
    C = Z.shape[1]
    if C % 2 != 0:
        raise ValueError(f"gate needs an even channel count, got {C}")
    half = C // 2
    ta = np.tanh(Z[:, :half])
    sb = 1.0 / (1.0 + np.exp(-Z[:, half:]))
    out = ta * sb

    def _bw(g):
        da = g * (sb * (1.0 - ta * ta))
        db = g * (ta * (sb * (1.0 - sb)))
        for parent in (z, cond):
            if parent.needs_grad:
                pg = parent.ensure_grad()
                pg[:, :half] += da
                pg[:, half:] += db

    return Tensor(out, parents=(z, cond), backward=_bw)


def add_scaled(a: Tensor, b: Tensor, scale: float) -> Tensor:
    """(a + b) * scale for same-shaped operands (residual connections)."""
    def _bw(g):
        if a.needs_grad:
            a.accumulate(g * scale)
        if b.needs_grad:
            b.accumulate(g * scale)

    return Tensor((a.data + b.data) * scale, parents=(a, b), backward=_bw)


def add_channel_bias(x: Tensor, v: Tensor) -> Tensor:
    """x (B, C, L) + v (B, C) broadcast over length."""
    if v.data.shape != x.data.shape[:2]:
        raise ValueError(f"bias shape {v.data.shape} must be {x.data.shape[:2]}")

    def _bw(g):
        if x.needs_grad:
            x.accumulate(g)
        if v.needs_grad:
            v.accumulate(g.sum(axis=2))

    return Tensor(x.data + v.data[:, :, None], parents=(x, v), backward=_bw)


def dense(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    """x (B, In) @ w (In, Out) + b (Out,)."""
    if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ValueError(f"dense shape mismatch: x {x.data.shape}, w {w.data.shape}")
    out_data = x.data @ w.data
    if b is not None:
        out_data = out_data + b.data

    def _bw(g):
        if x.needs_grad:
            x.accumulate(g @ w.data.T)
        if w.needs_grad:
            w.accumulate(x.data.T @ g)
        if b is not None and b.needs_grad:
            b.accumulate(g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out_data, parents=parents, backward=_bw)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None, dilation: int = 1) -> Tensor:
    """Same-padded dilated 1-D convolution.

    x (B, Cin, L), w (Cout, Cin, k) with k odd; output (B, Cout, L) with
    pad = dilation (k - 1) / 2.  Matmuls run per batch item in channel-major
    layout, so no output transposes are needed and the summation order is
    fixed, keeping repeat runs bit-identical.
    """
    X, W = x.data, w.data
    if X.ndim != 3 or W.ndim != 3:
        raise ValueError(f"conv1d expects 3-D x and w, got x {X.shape}, w {W.shape}")
    Bn, Cin, L = X.shape
    Cout, Cin2, k = W.shape
    if Cin != Cin2:
        raise ValueError(f"conv1d channel mismatch: x has {Cin}, w expects {Cin2}")
    if k % 2 == 0:
        raise ValueError(f"conv1d kernel width must be odd for same padding, got {k}")
    # Weight in tap-major layout (Cout, k*Cin): row of cols j*Cin + c.
    Wm = np.ascontiguousarray(W.transpose(0, 2, 1)).reshape(Cout, k * Cin)
    if k == 1:
        cols = X
    else:
        pad = dilation * (k - 1) // 2
        Xp = np.zeros((Bn, Cin, L + 2 * pad))
        Xp[:, :, pad:pad + L] = X
        cols = np.empty((Bn, k * Cin, L))
        for j in range(k):
            cols[:, j * Cin:(j + 1) * Cin, :] = Xp[:, :, j * dilation:j * dilation + L]
    out_data = np.matmul(Wm, cols)
    if b is not None:
        out_data += b.data[None, :, None]

    def _bw(g):
        if b is not None and b.needs_grad:
            b.accumulate(g.sum(axis=(0, 2)))
        if w.needs_grad:
            gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)  # (Cout, k*Cin)
            w.accumulate(gw.reshape(Cout, k, Cin).transpose(0, 2, 1))
        if x.needs_grad:
            gx = x.ensure_grad()
            dcols = np.matmul(Wm.T, g)  # (Bn, k*Cin, L)
            if k == 1:
                gx += dcols
            else:
                pad = dilation * (k - 1) // 2
                dXp = np.zeros((Bn, Cin, L + 2 * pad))
                for j in range(k):
                    dXp[:, :, j * dilation:j * dilation + L] += dcols[:, j * Cin:(j + 1) * Cin, :]
                gx += dXp[:, :, pad:pad + L]

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out_data, parents=parents, backward=_bw)


def conv_transpose1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int) -> Tensor:
    """Length-upsampling transposed convolution: out length = in length * stride.

    x (B, Cin, L), w (Cin, Cout, k) with k = 2 * stride and pad = stride // 2.
    """
    X, W = x.data, w.data
    Bn, Cin, L = X.shape
    Cin2, Cout, k = W.shape
    if Cin != Cin2:
        raise ValueError(f"conv_transpose1d channel mismatch: x has {Cin}, w expects {Cin2}")
    if k != 2 * stride:
        raise ValueError(f"conv_transpose1d requires kernel = 2*stride, got k={k}, stride={stride}")
    pad = stride // 2
    Ls = L * stride
    Wk = W.reshape(Cin, Cout * k)
    # prod rows are ordered o*k + j (row-major over (Cout, k))
    prod = np.matmul(Wk.T, X).reshape(Bn, Cout, k, L)
    outp = np.zeros((Bn, Cout, Ls + 2 * pad))
    for j in range(k):
        q, r = divmod(j, stride)
        outp[:, :, r::stride][:, :, q:q + L] += prod[:, :, j, :]
    out_data = outp[:, :, pad:pad + Ls].copy()
    if b is not None:
        out_data += b.data[None, :, None]

    def _bw(g):
        if b is not None and b.needs_grad:
            b.accumulate(g.sum(axis=(0, 2)))
        gp = np.zeros((Bn, Cout, Ls + 2 * pad))
        gp[:, :, pad:pad + Ls] = g
        dprod = np.empty((Bn, Cout, k, L))
        for j in range(k):
            q, r = divmod(j, stride)
            dprod[:, :, j, :] = gp[:, :, r::stride][:, :, q:q + L]
        dmat = dprod.reshape(Bn, Cout * k, L)
        if w.needs_grad:
            w.accumulate(np.matmul(X, dmat.transpose(0, 2, 1)).sum(axis=0).reshape(W.shape))
        if x.needs_grad:
            x.ensure_grad()[...] += np.matmul(Wk, dmat)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor(out_data, parents=parents, backward=_bw)


def embedding(ids: np.ndarray, table: Tensor) -> Tensor:
    """ids (B, F) integer array -> (B, E, F) rows of `table` (V, E)."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError(f"embedding ids must be integers, got dtype {ids.dtype}")
    V = table.data.shape[0]
    if ids.min() < 0 or ids.max() >= V:
        raise ValueError(f"embedding ids out of range [0, {V}): min={ids.min()}, max={ids.max()}")
    out_data = table.data[ids].transpose(0, 2, 1)

    def _bw(g):
        if table.needs_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g.transpose(0, 2, 1))

    return Tensor(out_data, parents=(table,), backward=_bw)


def gfp_embed(t: np.ndarray, frozen_weights: np.ndarray) -> np.ndarray:
    """Gaussian Fourier features of scalar times: [sin(2 pi w t), cos(2 pi w t)].

    `frozen_weights` (dim/2,) are drawn once at construction and never
    trained, so this is a pure function of the inputs with no gradient.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    proj = 2.0 * np.pi * t[:, None] * frozen_weights[None, :]
    return np.concatenate([np.sin(proj), np.cos(proj)], axis=1)
