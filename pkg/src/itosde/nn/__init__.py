from . import tensor
from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .layers import (
    Add,
    Chunk2,
    Conv1d,
    Dense,
    Embedding,
    GaussianFourierProjection,
    MeanOver,
    Module,
    Mul,
    Sigmoid,
    Silu,
    SumOver,
    Tanh,
    TransposedConv1d,
)
from .tensor import Tensor

__all__ = [
    "Add", "Chunk2", "Conv1d", "Dense", "Embedding", "GaussianFourierProjection",
    "MeanOver", "Module", "Mul", "Sigmoid", "Silu", "SumOver", "Tanh", "Tensor",
    "TransposedConv1d", "load_checkpoint", "read_header", "save_checkpoint", "tensor",
]
