"""Matrix Market I/O for symmetric sparse matrices and factor statistics rows."""
from __future__ import annotations

import io
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sps

from .symbolic import lower


def write_symmetric(path, A, comment: str = "") -> None:
    """Write the lower triangle of symmetric A as a 'coordinate real symmetric' file."""
    L = lower(A).tocoo()
    buf = io.StringIO()
    buf.write("%%MatrixMarket matrix coordinate real symmetric\n")
    for line in comment.splitlines():
        buf.write(f"% {line}\n")
    buf.write(f"{L.shape[0]} {L.shape[1]} {L.nnz}\n")
    order = np.lexsort((L.row, L.col))
    for r, c, v in zip(L.row[order], L.col[order], L.data[order]):
        buf.write(f"{r + 1} {c + 1} {float(v)!r}\n")
    Path(path).write_text(buf.getvalue())


def read_symmetric(path) -> sps.csc_matrix:
    """Read a Matrix Market file; returns the lower triangle as CSC."""
    A = scipy.io.mmread(str(path))
    return lower(sps.csc_matrix(A))


def write_vector(path, v) -> None:
    np.savetxt(path, np.asarray(v, dtype=float), fmt="%.17g")


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float, ndmin=1)


@dataclass
class FactorStats:
    """One row of symbolic statistics: order, nnz of C and L (lower incl. diagonal),
    average nonzeros per column, density in per mille, FLOPs and timings."""

    order: int
    nnz_c: int
    nz_c: float
    rho_c: float
    nnz_l: int
    nz_l: float
    rho_l: float
    flops: int
    amd_time: float = float("nan")
    factor_time: float = float("nan")

    @classmethod
    def from_counts(cls, order, nnz_c, nnz_l, flops, amd_time=float("nan"), factor_time=float("nan")):
        tri = order * (order + 1) / 2.0
        return cls(order=int(order), nnz_c=int(nnz_c), nz_c=nnz_c / order, rho_c=1000.0 * nnz_c / tri,
                   nnz_l=int(nnz_l), nz_l=nnz_l / order, rho_l=1000.0 * nnz_l / tri,
                   flops=int(flops), amd_time=amd_time, factor_time=factor_time)

    def as_dict(self) -> dict:
        return asdict(self)

    def keyvalue(self) -> str:
        parts = []
        for k, v in asdict(self).items():
            parts.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(parts)
