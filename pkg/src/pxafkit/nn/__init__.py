from .tensor import (
    GraphReleased,
    NonScalarLoss,
    ShapeMismatch,
    Tensor,
    no_grad,
)
from .layers import (
    BatchNorm,
    Conv1d,
    Conv2d,
    Linear,
    Module,
    Sequential,
)
from .optim import SGD, Adam
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "no_grad",
    "ShapeMismatch", "NonScalarLoss", "GraphReleased",
    "Module", "Sequential", "Conv1d", "Conv2d", "BatchNorm", "Linear",
    "SGD", "Adam", "save_checkpoint", "load_checkpoint",
]
