"""Parametric layers on top of the tensor ops.

Modules hold their parameters as ``Tensor`` attributes (requires_grad
set) and non-trainable buffers as plain ndarrays; ``named_parameters``
and ``state_dict`` discover both by reflection, recursing through
sub-modules and lists of sub-modules.

Initialization: Kaiming-uniform for conv/linear weights, zero biases,
batch-norm gamma=1 beta=0.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def __init__(self):
        self.training = True

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in vars(self).items():
            if isinstance(value, np.ndarray):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(prefix=f"{prefix}{name}.")

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: b for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own_params = dict(self.named_parameters())
        own_buffers = dict(self.named_buffers())
        missing = (set(own_params) | set(own_buffers)) - set(state)
        if missing:
            raise KeyError(f"checkpoint missing entries: {sorted(missing)}")
        for name, p in own_params.items():
            if state[name].shape != p.data.shape:
                raise T.ShapeMismatch(
                    f"{name}: checkpoint {state[name].shape} vs model {p.data.shape}")
            p.data = state[name].astype(p.data.dtype, copy=True)
        for name, b in own_buffers.items():
            b[...] = state[name]


class Sequential(Module):
    def __init__(self, *modules: Module):
        super().__init__()
        self.items = list(modules)

    def forward(self, x):
        for m in self.items:
            x = m(x)
        return x


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, stride: int = 1, pad: int = 0,
                 dilation: int = 1, bias: bool = True, *,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.stride, self.pad, self.dilation = stride, pad, dilation
        self.weight = Tensor(kaiming_uniform((c_out, c_in, k), c_in * k, rng, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return T.conv1d(x, self.weight, self.bias, self.stride, self.pad, self.dilation)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, stride: int = 1, pad: int = 0,
                 dilation: int = 1, groups: int = 1, bias: bool = True, *,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.stride, self.pad, self.dilation, self.groups = stride, pad, dilation, groups
        fan_in = (c_in // groups) * k * k
        self.weight = Tensor(
            kaiming_uniform((c_out, c_in // groups, k, k), fan_in, rng, dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        b = T.reshape(self.bias, (1, -1, 1, 1)) if self.bias is not None else None
        out = T.conv2d(x, self.weight, None, self.stride, self.pad,
                       self.dilation, self.groups)
        return out + b if b is not None else out


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, bias: bool = True, *,
                 rng: np.random.Generator, dtype=np.float64):
        super().__init__()
        self.weight = Tensor(kaiming_uniform((n_in, n_out), n_in, rng, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x):
        out = T.matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class BatchNorm(Module):
    """Batch normalization over (B, C, ...) with per-channel statistics.

    Training mode normalizes by batch statistics and updates the running
    buffers; eval mode is a fixed affine map from the frozen buffers.
    """

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1,
                 affine: bool = True, dtype=np.float64):
        super().__init__()
        self.eps, self.momentum, self.affine = eps, momentum, affine
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        if affine:
            self.gamma = Tensor(np.ones(num_features, dtype=dtype), requires_grad=True)
            self.beta = Tensor(np.zeros(num_features, dtype=dtype), requires_grad=True)

    def forward(self, x):
        stat_shape = (1, -1) + (1,) * (x.ndim - 2)
        if self.training:
            y, mu, var = T.batch_norm_train(
                x, self.gamma if self.affine else None,
                self.beta if self.affine else None, self.eps)
            m = self.momentum
            self.running_mean += m * (mu - self.running_mean)
            self.running_var += m * (var - self.running_var)
            return y
        scale = 1.0 / np.sqrt(self.running_var + self.eps)
        y = (x - self.running_mean.reshape(stat_shape)) * scale.reshape(stat_shape)
        if self.affine:
            y = y * T.reshape(self.gamma, stat_shape) + T.reshape(self.beta, stat_shape)
        return y
