"""Numeric LDL^T factorization and multi-RHS solves."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from ..errors import NotPositiveDefiniteError
from . import _kernels
from .symbolic import SymbolicFactor, _arrays, ldl_flops, permute, symbolic_factor

PIVOT_TOL = 1e-12


def solve_threads() -> int:
    """Worker count for multi-RHS solves, capped by REMLKIT_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("REMLKIT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class LdlFactor:
    """P A P^T = L D L^T with unit lower-triangular L stored without its diagonal."""

    symbolic: SymbolicFactor
    Lx: np.ndarray
    Li: np.ndarray
    D: np.ndarray

    @property
    def m(self) -> int:
        return self.D.size

    @property
    def perm(self) -> np.ndarray:
        return self.symbolic.perm

    @property
    def Lp(self) -> np.ndarray:
        return self.symbolic.Lp

    @property
    def logdet(self) -> float:
        return float(np.sum(np.log(self.D)))

    @property
    def col_counts(self) -> np.ndarray:
        """Column counts of the realized L (diagonal included)."""
        return np.diff(self.Lp) + 1

    @property
    def nnz_l(self) -> int:
        return int(self.Li.size + self.m)

    @property
    def flops(self) -> int:
        return ldl_flops(self.col_counts)

    def L(self) -> sps.csc_matrix:
        """Unit lower-triangular L (permuted indexing) as CSC."""
        strict = sps.csc_matrix((self.Lx, self.Li, self.Lp), shape=(self.m, self.m))
        return (strict + sps.eye(self.m, format="csc")).tocsc()

    def solve(self, B) -> np.ndarray:
        return solve(self, B)


def align_values(symbolic: SymbolicFactor, S_perm: sps.csc_matrix) -> np.ndarray:
    """Values of a permuted symmetric matrix laid out on the analysed pattern.

    Raises ValueError if the matrix has entries outside that pattern.
    """
    pat = symbolic.pattern
    m = symbolic.m
    S = S_perm.tocsc()
    S.sort_indices()
    pat_keys = np.repeat(np.arange(m, dtype=np.int64), np.diff(pat.indptr)) * m + pat.indices
    keys = np.repeat(np.arange(m, dtype=np.int64), np.diff(S.indptr)) * m + S.indices
    pos = np.searchsorted(pat_keys, keys)
    if keys.size and (pos.max() >= pat_keys.size or not np.array_equal(pat_keys[pos], keys)):
        raise ValueError("matrix has entries outside the analysed pattern")
    Sx = np.zeros(pat.nnz)
    Sx[pos] = S.data
    return Sx


def diagonal_positions(symbolic: SymbolicFactor) -> np.ndarray:
    """Index into ``pattern.data`` of each diagonal entry (permuted order)."""
    pat = symbolic.pattern
    m = symbolic.m
    pat_keys = np.repeat(np.arange(m, dtype=np.int64), np.diff(pat.indptr)) * m + pat.indices
    return np.searchsorted(pat_keys, np.arange(m, dtype=np.int64) * (m + 1))


def factor_aligned(symbolic: SymbolicFactor, Sx: np.ndarray, pivot_tol: float = PIVOT_TOL,
                   diag_pos: np.ndarray | None = None) -> LdlFactor:
    """Numeric LDL^T from values already aligned with ``symbolic.pattern``."""
    m = symbolic.m
    if diag_pos is None:
        diag_pos = diagonal_positions(symbolic)
    diag = np.abs(Sx[diag_pos])
    tol = pivot_tol * (diag.max() if diag.size else 0.0)
    Sp, Si = _arrays(symbolic.pattern)
    Li, Lx, D, failed = _kernels.ldl_numeric_kernel(
        m, Sp, Si, np.ascontiguousarray(Sx, dtype=np.float64), symbolic.parent, symbolic.Lp, tol)
    if failed >= 0:
        raise NotPositiveDefiniteError(failed, D[failed], symbolic.perm[failed])
    return LdlFactor(symbolic=symbolic, Lx=Lx, Li=Li, D=D)


def numeric_factor(values, symbolic: SymbolicFactor, pivot_tol: float = PIVOT_TOL) -> LdlFactor:
    """LDL^T of a symmetric matrix whose pattern was analysed by ``symbolic``.

    Raises NotPositiveDefiniteError when a pivot d_k <= pivot_tol * max|diag A|.
    """
    S = permute(values, symbolic.perm)
    if S.shape != (symbolic.m, symbolic.m):
        raise ValueError(f"matrix of order {S.shape[0]} does not match symbolic analysis "
                         f"of order {symbolic.m}")
    return factor_aligned(symbolic, align_values(symbolic, S), pivot_tol)


def ldl(A, ordering="amd", pivot_tol: float = PIVOT_TOL) -> LdlFactor:
    """Symbolic analysis plus numeric factorization in one call."""
    return numeric_factor(A, symbolic_factor(A, ordering), pivot_tol)


def _solve_permuted(factor: LdlFactor, Bp: np.ndarray):
    args = (factor.m, factor.Lp, factor.Li, factor.Lx, factor.D)
    r = Bp.shape[1]
    threads = solve_threads()
    if threads == 1 or r < 2 * threads:
        _kernels.ldl_solve_kernel(*args, Bp)
        return Bp
    chunks = np.array_split(np.arange(r), threads)
    blocks = [np.ascontiguousarray(Bp[:, c]) for c in chunks]
    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(lambda blk: _kernels.ldl_solve_kernel(*args, blk), blocks))
    for c, blk in zip(chunks, blocks):
        Bp[:, c] = blk
    return Bp


def solve(factor: LdlFactor, B) -> np.ndarray:
    """Solve A X = B for one or many right-hand sides (columns of B)."""
    B = np.asarray(B.toarray() if sps.issparse(B) else B, dtype=float)
    vector = B.ndim == 1
    B2 = B[:, None] if vector else B
    if B2.ndim != 2 or B2.shape[0] != factor.m:
        raise ValueError(f"dimension mismatch: right-hand side has {B2.shape[0]} rows, factor order is {factor.m}")
    Bp = np.ascontiguousarray(B2[factor.perm])
    Bp = _solve_permuted(factor, Bp)
    X = np.empty_like(Bp)
    X[factor.perm] = Bp
    return X[:, 0] if vector else X


def logdet(factor: LdlFactor) -> float:
    """log det A = sum_i log d_i."""
    return factor.logdet


def inverse_diagonal(factor: LdlFactor, indices) -> np.ndarray:
    """Selected diagonal entries of A^{-1} (original indexing) via sparse forward solves."""
    idx = np.asarray(indices, dtype=np.int64)
    cols = factor.symbolic.iperm[idx]
    return _kernels.inv_diag_kernel(factor.m, factor.Lp, factor.Li, factor.Lx, factor.D,
                                    factor.symbolic.parent, np.ascontiguousarray(cols))


def reconstruct(factor: LdlFactor) -> sps.csc_matrix:
    """L D L^T in permuted indexing (for verification)."""
    L = factor.L()
    return (L @ sps.diags(factor.D) @ L.T).tocsc()
