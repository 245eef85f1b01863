from .space import OPS, AlphaParams, SearchSpace, mixed_op_forward
from .genotype import CellGenotype, derive_genotype, genotype_to_json, genotype_from_json
from .network import NetworkPlan, PlanInfeasible, SearchNetwork, build_network
from .search import SearchConfig, SearchLog, search

__all__ = [
    "OPS", "SearchSpace", "AlphaParams", "mixed_op_forward",
    "CellGenotype", "derive_genotype", "genotype_to_json", "genotype_from_json",
    "NetworkPlan", "PlanInfeasible", "SearchNetwork", "build_network",
    "SearchConfig", "SearchLog", "search",
]
