"""Cell-stacked networks: the mixed-operator search network and the
discrete network assembled from a derived genotype.

Channel flow follows the usual cell convention: every cell sees its two
predecessors (preprocessed to the cell's working width C), intermediate
nodes stay at C, and the cell output is the depthwise concatenation of
the four intermediate nodes (4C). Reduction cells double C and halve
the spatial size with ceil rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import PxafError
from ..nn import BatchNorm, Conv2d, Linear, Module
from ..nn import tensor as T
from ..nn.tensor import Tensor
from .genotype import CellGenotype
from .space import (
    EDGES,
    N_INTERMEDIATE,
    AlphaParams,
    ConvUnit,
    MixedOp,
    ReducedSkip,
    make_op,
)

MULTIPLIER = N_INTERMEDIATE  # concat of 4 nodes


class PlanInfeasible(PxafError):
    pass


@dataclass
class NetworkPlan:
    n_normal: int = 6
    n_reduction: int = 2
    normal_per_block: int = 3       # reduction follows every block of normals
    init_channels: int = 16
    num_classes: int = 2
    stem_multiplier: int = 3
    input_size: int = 39
    input_channels: int = 1

    def layout(self) -> list[bool]:
        """Cell sequence; True marks a reduction cell."""
        out: list[bool] = []
        normals_left, reductions_left = self.n_normal, self.n_reduction
        while normals_left > 0 or reductions_left > 0:
            take = min(self.normal_per_block, normals_left)
            out.extend([False] * take)
            normals_left -= take
            if reductions_left > 0:
                out.append(True)
                reductions_left -= 1
            elif normals_left == 0:
                break
        return out

    def spatial_sizes(self) -> list[int]:
        """Spatial side length entering each cell (ceil halving at reductions)."""
        sizes = []
        s = self.input_size
        for is_reduction in self.layout():
            sizes.append(s)
            if is_reduction:
                if s < 2:
                    raise PlanInfeasible(
                        f"spatial size {s} cannot be reduced further")
                s = math.ceil(s / 2)
        sizes.append(s)
        return sizes


class _CellBase(Module):
    def __init__(self, c_pp: int, c_p: int, c: int, reduction_prev: bool,
                 affine: bool, *, rng, dtype):
        super().__init__()
        if reduction_prev:
            self.pre0 = ReducedSkip(c_pp, c, affine=affine, rng=rng, dtype=dtype)
        else:
            self.pre0 = ConvUnit(c_pp, c, 1, affine=affine, rng=rng, dtype=dtype)
        self.pre1 = ConvUnit(c_p, c, 1, affine=affine, rng=rng, dtype=dtype)


class SearchCell(_CellBase):
    def __init__(self, c_pp, c_p, c, reduction: bool, reduction_prev: bool,
                 *, rng, dtype):
        super().__init__(c_pp, c_p, c, reduction_prev, affine=False,
                         rng=rng, dtype=dtype)
        self.reduction = reduction
        self.mixed = [MixedOp(c, stride=2 if reduction and j < 2 else 1,
                              rng=rng, dtype=dtype)
                      for j, _ in EDGES]

    def forward(self, s0: Tensor, s1: Tensor, weights: Tensor) -> Tensor:
        states = [self.pre0(s0), self.pre1(s1)]
        k = 0
        for i in range(N_INTERMEDIATE):
            acc = None
            for j in range(i + 2):
                term = self.mixed[k](states[j], weights[k])
                acc = term if acc is None else acc + term
                k += 1
            states.append(acc)
        return T.concat(states[2:], axis=1)


class DerivedCell(_CellBase):
    def __init__(self, genotype: CellGenotype, c_pp, c_p, c, reduction: bool,
                 reduction_prev: bool, *, rng, dtype):
        super().__init__(c_pp, c_p, c, reduction_prev, affine=True,
                         rng=rng, dtype=dtype)
        self.reduction = reduction
        self.sources: list[int] = []
        self.ops: list[Module] = []
        for picks in genotype.nodes:
            for state, op_name in picks:
                stride = 2 if reduction and state < 2 else 1
                self.sources.append(state)
                self.ops.append(make_op(op_name, c, stride, affine=True,
                                        rng=rng, dtype=dtype))

    def forward(self, s0: Tensor, s1: Tensor) -> Tensor:
        states = [self.pre0(s0), self.pre1(s1)]
        for i in range(N_INTERMEDIATE):
            a, b = 2 * i, 2 * i + 1
            states.append(self.ops[a](states[self.sources[a]])
                          + self.ops[b](states[self.sources[b]]))
        return T.concat(states[2:], axis=1)


class _StackedNetwork(Module):
    """Shared stem / cell-flow / classifier-head scaffolding."""

    def __init__(self, plan: NetworkPlan, *, rng, dtype):
        super().__init__()
        self.plan = plan
        plan.spatial_sizes()  # raises PlanInfeasible early
        c_stem = plan.stem_multiplier * plan.init_channels
        self.stem = ConvUnit(plan.input_channels, c_stem, 3, 1, 1, affine=True,
                             rng=rng, dtype=dtype)
        self.cells: list[Module] = []
        self._c_out = None  # set by _build_cells

    def _build_cells(self, cell_factory, *, rng, dtype):
        plan = self.plan
        c_stem = plan.stem_multiplier * plan.init_channels
        c_pp, c_p, c = c_stem, c_stem, plan.init_channels
        reduction_prev = False
        for is_reduction in plan.layout():
            if is_reduction:
                c *= 2
            cell = cell_factory(c_pp, c_p, c, is_reduction, reduction_prev,
                                rng=rng, dtype=dtype)
            self.cells.append(cell)
            reduction_prev = is_reduction
            c_pp, c_p = c_p, MULTIPLIER * c
        self._c_out = c_p
        self.head = Linear(self._c_out, plan.num_classes, rng=rng, dtype=dtype)

    def _run_cells(self, x: Tensor, cell_args) -> Tensor:
        s0 = s1 = self.stem(x)
        for cell, extra in zip(self.cells, cell_args):
            s0, s1 = s1, cell(s0, s1, *extra)
        pooled = s1.mean(axis=(2, 3))
        return self.head(pooled)


class SearchNetwork(_StackedNetwork):
    """Mixed-operator super-network evaluated under architecture weights."""

    def __init__(self, plan: NetworkPlan, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng([seed, 0x5EA5C])
        super().__init__(plan, rng=rng, dtype=dtype)
        self._build_cells(SearchCell, rng=rng, dtype=dtype)

    def forward(self, x: Tensor, alpha: AlphaParams) -> Tensor:
        wn = T.softmax(alpha.normal, axis=1)
        wr = T.softmax(alpha.reduction, axis=1)
        args = [(wr,) if cell.reduction else (wn,) for cell in self.cells]
        return self._run_cells(x, args)


class DerivedNetwork(_StackedNetwork):
    """Discrete network assembled from (normal, reduction) genotypes."""

    def __init__(self, genotypes: tuple[CellGenotype, CellGenotype],
                 plan: NetworkPlan, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng([seed, 0xF17A])
        super().__init__(plan, rng=rng, dtype=dtype)
        normal, reduction = genotypes
        self._build_cells(
            lambda c_pp, c_p, c, red, red_prev, *, rng, dtype: DerivedCell(
                reduction if red else normal, c_pp, c_p, c, red, red_prev,
                rng=rng, dtype=dtype),
            rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self._run_cells(x, [()] * len(self.cells))


def build_network(genotypes: tuple[CellGenotype, CellGenotype],
                  plan: NetworkPlan | None = None, seed: int = 0,
                  dtype=np.float64) -> DerivedNetwork:
    """Assemble the classifier; its parameter count is reported by
    ``model.num_parameters()``."""
    return DerivedNetwork(genotypes, plan or NetworkPlan(), seed=seed, dtype=dtype)
