"""Cell search space: the seven candidate operators and the mixed op.

Every operator maps C channels to C channels. On reduction-cell edges
leaving an input node the operator runs at stride 2; spatial halving
rounds up (39 -> 20 -> 10). Convolutions follow the
convolution -> batch-norm -> ReLU order throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import BatchNorm, Conv2d, Module
from ..nn import tensor as T
from ..nn.tensor import Tensor

OP_NAMES = (
    "sep_conv_3x3",
    "sep_conv_5x5",
    "dil_conv_3x3",
    "dil_conv_5x5",
    "max_pool_3x3",
    "avg_pool_3x3",
    "identity",
)

N_INTERMEDIATE = 4          # nodes 2..5; nodes 0,1 are the cell inputs
EDGES = [(j, i + 2) for i in range(N_INTERMEDIATE) for j in range(i + 2)]
N_EDGES = len(EDGES)        # 14


class ConvUnit(Module):
    """conv -> BN -> ReLU building block."""

    def __init__(self, c_in, c_out, k, stride=1, pad=0, dilation=1, groups=1,
                 affine=True, *, rng, dtype):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, k, stride, pad, dilation, groups,
                           bias=False, rng=rng, dtype=dtype)
        self.bn = BatchNorm(c_out, affine=affine, dtype=dtype)

    def forward(self, x):
        return T.relu(self.bn(self.conv(x)))


class SepConv(Module):
    """(depthwise k x k -> BN -> ReLU -> pointwise 1x1 -> BN -> ReLU) x 2."""

    def __init__(self, c, k, stride, affine, *, rng, dtype):
        super().__init__()
        pad = k // 2
        self.blocks = [
            ConvUnit(c, c, k, stride, pad, groups=c, affine=affine, rng=rng, dtype=dtype),
            ConvUnit(c, c, 1, affine=affine, rng=rng, dtype=dtype),
            ConvUnit(c, c, k, 1, pad, groups=c, affine=affine, rng=rng, dtype=dtype),
            ConvUnit(c, c, 1, affine=affine, rng=rng, dtype=dtype),
        ]

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x


class DilConv(Module):
    """depthwise k x k dilated -> BN -> ReLU -> pointwise -> BN -> ReLU."""

    def __init__(self, c, k, stride, affine, *, rng, dtype):
        super().__init__()
        pad = (k // 2) * 2
        self.blocks = [
            ConvUnit(c, c, k, stride, pad, dilation=2, groups=c, affine=affine,
                     rng=rng, dtype=dtype),
            ConvUnit(c, c, 1, affine=affine, rng=rng, dtype=dtype),
        ]

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x


class Pool(Module):
    def __init__(self, kind, stride):
        super().__init__()
        self.kind, self.stride = kind, stride

    def forward(self, x):
        if self.kind == "max":
            return T.max_pool2d(x, 3, self.stride, 1)
        return T.avg_pool2d(x, 3, self.stride, 1)


class Identity(Module):
    def forward(self, x):
        return x


class ReducedSkip(Module):
    """Identity for stride-2 edges: 1x1 conv stride 2 + BN.

    (A two-path factorized reduction would misalign on odd sizes such
    as 39; a single strided 1x1 keeps the ceil-halving contract.)
    """

    def __init__(self, c_in, c_out, affine, *, rng, dtype):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 1, stride=2, pad=0, bias=False,
                           rng=rng, dtype=dtype)
        self.bn = BatchNorm(c_out, affine=affine, dtype=dtype)

    def forward(self, x):
        return self.bn(self.conv(x))


def make_op(name: str, c: int, stride: int, affine: bool, *, rng, dtype) -> Module:
    if name == "sep_conv_3x3":
        return SepConv(c, 3, stride, affine, rng=rng, dtype=dtype)
    if name == "sep_conv_5x5":
        return SepConv(c, 5, stride, affine, rng=rng, dtype=dtype)
    if name == "dil_conv_3x3":
        return DilConv(c, 3, stride, affine, rng=rng, dtype=dtype)
    if name == "dil_conv_5x5":
        return DilConv(c, 5, stride, affine, rng=rng, dtype=dtype)
    if name == "max_pool_3x3":
        return Pool("max", stride)
    if name == "avg_pool_3x3":
        return Pool("avg", stride)
    if name == "identity":
        if stride == 1:
            return Identity()
        return ReducedSkip(c, c, affine, rng=rng, dtype=dtype)
    raise ValueError(f"unknown operator {name!r}")


OPS = {name: make_op for name in OP_NAMES}


@dataclass
class SearchSpace:
    operators: tuple = OP_NAMES
    nodes_per_cell: int = 7           # 2 inputs + 4 intermediate + 1 output
    edges: tuple = tuple(EDGES)

    def __post_init__(self):
        assert len(self.operators) == 7
        for i in range(N_INTERMEDIATE):
            incoming = [e for e in self.edges if e[1] == i + 2]
            assert len(incoming) >= 2


@dataclass
class AlphaParams:
    """Architecture weights: one (edges x operators) matrix per cell type."""
    normal: Tensor
    reduction: Tensor
    op_names: tuple = OP_NAMES

    @staticmethod
    def initial(seed: int = 0, scale: float = 1e-3, dtype=np.float64) -> "AlphaParams":
        rng = np.random.default_rng([seed, 0xA1FA])
        return AlphaParams(
            normal=Tensor(scale * rng.standard_normal((N_EDGES, len(OP_NAMES)))
                          .astype(dtype), requires_grad=True),
            reduction=Tensor(scale * rng.standard_normal((N_EDGES, len(OP_NAMES)))
                             .astype(dtype), requires_grad=True))

    def tensors(self) -> list[Tensor]:
        return [self.normal, self.reduction]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {"normal": self.normal.data.copy(),
                "reduction": self.reduction.data.copy()}


class MixedOp(Module):
    """Softmax(alpha)-weighted sum over all candidate operators."""

    def __init__(self, c: int, stride: int, *, rng, dtype):
        super().__init__()
        self.ops = [make_op(name, c, stride, affine=False, rng=rng, dtype=dtype)
                    for name in OP_NAMES]

    def forward(self, x: Tensor, weights: Tensor) -> Tensor:
        out = None
        for k, op in enumerate(self.ops):
            term = weights[k] * op(x)
            out = term if out is None else out + term
        return out


def mixed_op_forward(x: Tensor, alpha_row: Tensor, ops: list[Module]) -> Tensor:
    """Standalone Eq.-style mixed forward used by tests: softmax the raw
    alpha row, then weight each operator output."""
    weights = T.softmax(alpha_row, axis=-1)
    out = None
    for k, op in enumerate(ops):
        term = weights[k] * op(x)
        out = term if out is None else out + term
    return out
