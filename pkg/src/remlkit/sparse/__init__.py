"""Sparse symmetric LDL^T: AMD ordering, elimination tree, factorization, solves."""
from .mmio import FactorStats, read_symmetric, read_vector, write_symmetric, write_vector
from .numeric import LdlFactor, inverse_diagonal, ldl, logdet, numeric_factor, reconstruct, solve
from .symbolic import (EliminationTree, SymbolicFactor, amd_order, elimination_tree, ldl_flops,
                       natural_order, symbolic_factor)

__all__ = [
    "EliminationTree", "FactorStats", "LdlFactor", "SymbolicFactor", "amd_order",
    "elimination_tree", "inverse_diagonal", "ldl", "ldl_flops", "logdet", "natural_order",
    "numeric_factor", "read_symmetric", "read_vector", "reconstruct", "solve",
    "symbolic_factor", "write_symmetric", "write_vector",
]
