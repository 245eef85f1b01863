"""Discrete architecture derivation from architecture weights.

Per edge the argmax-softmax operator survives; per intermediate node the
two incoming edges with the largest surviving-operator weight are kept.
Ties break deterministically toward the lower edge index and lower
operator index.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .space import EDGES, N_INTERMEDIATE, OP_NAMES, AlphaParams


@dataclass(frozen=True)
class CellGenotype:
    """Per intermediate node: exactly two (input_state, op_name) pairs."""
    cell_type: str                       # "normal" | "reduction"
    nodes: tuple                         # tuple per node: ((state, op), (state, op))

    def __post_init__(self):
        assert len(self.nodes) == N_INTERMEDIATE
        for i, picks in enumerate(self.nodes):
            assert len(picks) == 2
            for state, op in picks:
                assert 0 <= state < i + 2, "edges must reference earlier nodes"
                assert op in OP_NAMES


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _derive_one(alpha: np.ndarray, cell_type: str) -> CellGenotype:
    weights = _softmax_rows(np.asarray(alpha, dtype=np.float64))
    best_op = weights.argmax(axis=1)              # first max wins ties
    best_w = weights[np.arange(len(EDGES)), best_op]
    nodes = []
    for i in range(N_INTERMEDIATE):
        incoming = [(idx, EDGES[idx][0]) for idx in range(len(EDGES))
                    if EDGES[idx][1] == i + 2]
        ranked = sorted(incoming, key=lambda t: (-best_w[t[0]], t[1]))
        picks = tuple((state, OP_NAMES[best_op[idx]]) for idx, state in ranked[:2])
        picks = tuple(sorted(picks, key=lambda p: p[0]))
        nodes.append(picks)
    return CellGenotype(cell_type=cell_type, nodes=tuple(nodes))


def derive_genotype(alpha: AlphaParams) -> tuple[CellGenotype, CellGenotype]:
    return (_derive_one(alpha.normal.data, "normal"),
            _derive_one(alpha.reduction.data, "reduction"))


def genotype_to_json(genotypes: tuple[CellGenotype, CellGenotype]) -> str:
    doc = {}
    for g in genotypes:
        doc[g.cell_type] = [
            {"node": i + 2, "edge": state, "op": op}
            for i, picks in enumerate(g.nodes) for state, op in picks
        ]
    return json.dumps(doc, indent=1, sort_keys=True)


def genotype_from_json(text: str) -> tuple[CellGenotype, CellGenotype]:
    doc = json.loads(text)
    out = []
    for cell_type in ("normal", "reduction"):
        per_node: dict[int, list] = {}
        for item in doc[cell_type]:
            per_node.setdefault(item["node"], []).append((item["edge"], item["op"]))
        nodes = tuple(tuple(sorted(per_node[i + 2], key=lambda p: p[0]))
                      for i in range(N_INTERMEDIATE))
        out.append(CellGenotype(cell_type=cell_type, nodes=nodes))
    return tuple(out)


def genotype_hash(genotypes: tuple[CellGenotype, CellGenotype]) -> str:
    return hashlib.sha256(genotype_to_json(genotypes).encode()).hexdigest()[:16]
