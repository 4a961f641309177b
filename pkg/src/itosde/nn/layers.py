"""Layer vocabulary over the autodiff tensor.

Modules auto-register parameters, buffers, and child modules in assignment
order, which fixes the enumeration order the checkpoint format relies on.
Weights initialize Uniform(+-sqrt(1/fan_in)) with zero biases; layers meant
to start silent (output heads) are built with zero_init=True.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import RandomSource
from . import tensor as T
from .tensor import Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", [])
        object.__setattr__(self, "_buffers", [])
        object.__setattr__(self, "_children", [])

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params.append((name, value))
        elif isinstance(value, Module):
            self._children.append((name, value))
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children.append((f"{name}.{i}", v))
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array: np.ndarray):
        self._buffers.append((name, name))
        object.__setattr__(self, name, np.asarray(array, dtype=np.float64))

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + n, p) for n, p in self._params]
        for n, child in self._children:
            out.extend(child.named_parameters(prefix + n + "."))
        return out

    def named_buffers(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        out = [(prefix + n, getattr(self, attr)) for n, attr in self._buffers]
        for n, child in self._children:
            out.extend(child.named_buffers(prefix + n + "."))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def set_buffer(self, name: str, array: np.ndarray):
        """Assign a buffer by dotted path (used by checkpoint loading)."""
        parts = name.split(".")
        mod = self
        for part in parts[:-1]:
            mod = getattr(mod, part) if not part.isdigit() else mod[int(part)]
        object.__setattr__(mod, parts[-1], np.asarray(array, dtype=np.float64))


def _uniform_fan_in(rng: RandomSource, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, shape)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: RandomSource, zero_init: bool = False):
        super().__init__()
        w = np.zeros((in_features, out_features)) if zero_init else _uniform_fan_in(
            rng, (in_features, out_features), in_features)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.dense(x, self.weight, self.bias)



class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: RandomSource,
                 dilation: int = 1, zero_init: bool = False):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError(f"conv kernel must be odd for same padding, got {kernel}")
        self.dilation = dilation
        fan_in = in_channels * kernel
        w = np.zeros((out_channels, in_channels, kernel)) if zero_init else _uniform_fan_in(
            rng, (out_channels, in_channels, kernel), fan_in)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, dilation=self.dilation)



class TransposedConv1d(Module):
    """Upsampler: output length = input length * stride (kernel 2*stride, pad stride/2)."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, rng: RandomSource):
        super().__init__()
        self.stride = stride
        kernel = 2 * stride
        fan_in = in_channels * kernel
        self.weight = Tensor(_uniform_fan_in(rng, (in_channels, out_channels, kernel), fan_in),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv_transpose1d(x, self.weight, self.bias, stride=self.stride)



class Embedding(Module):
    def __init__(self, vocab_size: int, dim: int, rng: RandomSource):
        super().__init__()
        self.vocab_size = vocab_size
        self.weight = Tensor(rng.normal((vocab_size, dim)) * dim**-0.5, requires_grad=True)

    def forward(self, ids: np.ndarray) -> Tensor:
        return T.embedding(ids, self.weight)



class GaussianFourierProjection(Module):
    """Random sinusoidal features of the diffusion time, frozen at init."""

    def __init__(self, dim: int, rng: RandomSource, scale: float = 16.0):
        super().__init__()
        if dim % 2 != 0:
            raise ValueError(f"GFP dim must be even, got {dim}")
        self.dim = dim
        self.scale = scale
        self.register_buffer("frozen_weights", rng.normal(dim // 2) * scale)

    def forward(self, t) -> Tensor:
        return Tensor(T.gfp_embed(t, self.frozen_weights))



class Silu(Module):
    def forward(self, x: Tensor) -> Tensor:
        return T.silu(x)



class Tanh(Module):
    def forward(self, x: Tensor) -> Tensor:
        return T.tanh(x)



class Sigmoid(Module):
    def forward(self, x: Tensor) -> Tensor:
        return T.sigmoid(x)



class Chunk2(Module):
    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        return T.chunk2(x, axis=1)



class Add(Module):
    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        return T.add(a, b)



class Mul(Module):
    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        return T.mul(a, b)



class SumOver(Module):
    def __init__(self, axis=None):
        super().__init__()
        self.axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return T.sum_over(x, self.axis)



class MeanOver(Module):
    def __init__(self, axis=None):
        super().__init__()
        self.axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return T.mean_over(x, self.axis)

