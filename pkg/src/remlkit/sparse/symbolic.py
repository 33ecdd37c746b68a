"""Fill-reducing ordering and symbolic LDL^T analysis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from . import _kernels


def lower(A) -> sps.csc_matrix:
    """Lower triangle of a symmetric matrix as sorted float CSC.

    Accepts either a lower-triangular matrix or one holding both triangles.
    """
    L = sps.tril(sps.csc_matrix(A, dtype=float), format="csc")
    L.sum_duplicates()
    L.sort_indices()
    return L


def full_symmetric(A) -> sps.csc_matrix:
    L = lower(A)
    S = (L + sps.tril(L, k=-1, format="csc").T).tocsc()
    S.sort_indices()
    return S


def structure(A, diagonal: bool = True) -> sps.csc_matrix:
    """0/1 structure of a symmetric matrix, both triangles.

    Explicitly stored zeros count as structural entries.
    """
    L = lower(A)
    L.data = np.ones_like(L.data)
    m = L.shape[0]
    S = (L + L.T).tocsc()
    if diagonal:
        S = (S + sps.eye(m, format="csc")).tocsc()
    else:
        S = (S - sps.diags(S.diagonal(), format="csc")).tocsc()
        S.eliminate_zeros()
    S.data = np.ones_like(S.data)
    S.sort_indices()
    return S


def permute(A, perm) -> sps.csc_matrix:
    """P A P^T of a symmetric matrix, both triangles, sorted indices."""
    S = full_symmetric(A)
    Sp = S[perm][:, perm].tocsc()
    Sp.sort_indices()
    return Sp


def _arrays(S: sps.csc_matrix):
    return (np.ascontiguousarray(S.indptr, dtype=np.int64),
            np.ascontiguousarray(S.indices, dtype=np.int64))


def amd_order(pattern, aggressive: bool = False) -> np.ndarray:
    """Approximate minimum degree permutation of a symmetric pattern.

    Returns ``perm`` such that ``A[perm][:, perm]`` is the reordered matrix.
    Deterministic; ties in approximate degree go to the lowest index.
    """
    S = structure(pattern, diagonal=False)
    Ap, Ai = _arrays(S)
    return _kernels.amd_kernel(S.shape[0], Ap, Ai, aggressive)


def _permuted_structure(pattern, perm) -> sps.csc_matrix:
    S = structure(pattern)[perm][:, perm].tocsc()
    S.sort_indices()
    return S


def natural_order(pattern) -> np.ndarray:
    return np.arange(sps.csc_matrix(pattern).shape[0], dtype=np.int64)


def resolve_ordering(pattern, ordering) -> np.ndarray:
    if ordering is None or (isinstance(ordering, str) and ordering == "amd"):
        return amd_order(pattern)
    if isinstance(ordering, str):
        if ordering == "natural":
            return natural_order(pattern)
        raise ValueError(f"unknown ordering {ordering!r}; expected 'amd' or 'natural'")
    perm = np.asarray(ordering, dtype=np.int64)
    m = sps.csc_matrix(pattern).shape[0]
    if perm.shape != (m,) or not np.array_equal(np.sort(perm), np.arange(m)):
        raise ValueError("ordering is not a permutation of 0..m-1")
    return perm


@dataclass(frozen=True, eq=False)
class EliminationTree:
    """Parent pointers (-1 for a root) and column counts m_i of L, diagonal included."""

    parent: np.ndarray
    col_counts: np.ndarray

    @property
    def height(self) -> int:
        m = self.parent.size
        depth = np.zeros(m, dtype=np.int64)
        for i in range(m - 1, -1, -1):
            if self.parent[i] >= 0:
                depth[i] = depth[self.parent[i]] + 1
        return int(depth.max(initial=-1)) + 1


def elimination_tree(pattern, perm=None) -> EliminationTree:
    """Elimination tree and column counts of the permuted matrix."""
    perm = natural_order(pattern) if perm is None else np.asarray(perm, dtype=np.int64)
    S = _permuted_structure(pattern, perm)
    Sp, Si = _arrays(S)
    m = S.shape[0]
    parent = _kernels.etree_kernel(m, Sp, Si)
    counts = _kernels.colcount_kernel(m, Sp, Si, parent)
    return EliminationTree(parent, counts)


def ldl_flops(col_counts) -> int:
    """Floating point operations of LDL^T: sum of m_i^2 minus m."""
    c = np.asarray(col_counts, dtype=np.int64)
    return int(np.sum(c * c) - c.size)


@dataclass(frozen=True, eq=False)
class SymbolicFactor:
    """Result of symbolic analysis, reusable for any matrix with the same pattern.

    ``Lp`` points into the strictly lower part of L (column i holds
    ``col_counts[i] - 1`` entries); ``pattern`` is the permuted structure the
    analysis was run on.
    """

    perm: np.ndarray
    parent: np.ndarray
    col_counts: np.ndarray
    Lp: np.ndarray
    pattern: sps.csc_matrix

    @property
    def m(self) -> int:
        return self.perm.size

    @property
    def nnz_l(self) -> int:
        """Nonzeros of L including the diagonal."""
        return int(self.col_counts.sum())

    @property
    def flops(self) -> int:
        return ldl_flops(self.col_counts)

    @property
    def iperm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    @property
    def etree(self) -> EliminationTree:
        return EliminationTree(self.parent, self.col_counts)

    def row_structure(self) -> sps.csc_matrix:
        """0/1 pattern of the strictly lower part of L (permuted indexing)."""
        Sp, Si = _arrays(self.pattern)
        Li = _kernels.pattern_kernel(self.m, Sp, Si, self.parent, self.Lp)
        return sps.csc_matrix((np.ones(Li.size), Li, self.Lp), shape=(self.m, self.m))


def symbolic_factor(pattern, perm="amd") -> SymbolicFactor:
    """Ordering, elimination tree, column counts and FLOP count for LDL^T."""
    perm = resolve_ordering(pattern, perm)
    S = _permuted_structure(pattern, perm)
    Sp, Si = _arrays(S)
    m = S.shape[0]
    parent = _kernels.etree_kernel(m, Sp, Si)
    counts = _kernels.colcount_kernel(m, Sp, Si, parent)
    Lp = np.concatenate([[0], np.cumsum(counts - 1)]).astype(np.int64)
    return SymbolicFactor(perm=perm, parent=parent, col_counts=counts, Lp=Lp, pattern=S)
