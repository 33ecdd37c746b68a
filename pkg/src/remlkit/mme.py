"""Henderson's mixed-model equations and the projection P applied through them.

With R = I and G = blockdiag(kappa_k I) the coefficient matrix is

    C = [[X'X, X'Z], [Z'X, Z'Z + G^{-1}]]

and P v = v - W C^{-1} W' v with W = [X, Z].  P itself is never formed.
Only the diagonal of the random block of C depends on kappa, so one symbolic
analysis per model serves every iteration.
"""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .errors import BoundaryError
from .model import KAPPA_MIN, ModelSpec, Theta
from .sparse.mmio import write_symmetric, write_vector
from .sparse.numeric import PIVOT_TOL, LdlFactor, diagonal_positions, factor_aligned, \
    align_values, inverse_diagonal, solve
from .sparse.symbolic import lower, permute, symbolic_factor

# below this ratio the inverse-diagonal trace formula loses digits to cancellation
_DIAG_TRACE_MIN_KAPPA = 1e-4
_RHS_CHUNK = 512


class MixedModelEquations:
    """The theta-independent part of the MME for one model.

    Holds W'W (lower triangle), W'y and a symbolic LDL^T analysis of the
    pattern of C.  ``assemble`` adds G^{-1} for a given theta.
    """

    def __init__(self, model: ModelSpec, ordering="amd"):
        self.model = model
        W = model.W
        self.WtW = lower((W.T @ W).tocsc())
        # the analysed pattern always carries the full diagonal, so G^{-1} has a slot
        m = model.order
        self.Wty = np.asarray(W.T @ model.y).ravel()
        t0 = time.perf_counter()
        self.symbolic = symbolic_factor(self.WtW, ordering)
        self.analysis_time = time.perf_counter() - t0
        self._base = align_values(self.symbolic, permute(self.WtW, self.symbolic.perm))
        self._diag_pos = diagonal_positions(self.symbolic)
        self.order = m

    def ginv_diagonal(self, theta: Theta) -> np.ndarray:
        """Diagonal of blockdiag(0_p, G^{-1}) in original effect order."""
        model = self.model
        kappa = np.asarray(theta.kappa, dtype=float)
        if kappa.size != model.q:
            raise ValueError(f"expected {model.q} variance ratios, got {kappa.size}")
        low = np.flatnonzero(kappa < KAPPA_MIN)
        if low.size:
            k = int(low[0])
            raise BoundaryError(f"boundary variance ratio: kappa[{k}] = {kappa[k]:.3g} "
                                f"is below {KAPPA_MIN:g}, G^-1 is unbounded")
        g = np.zeros(self.order)
        off = model.offsets
        for k in range(model.q):
            g[off[k]:off[k + 1]] = 1.0 / kappa[k]
        return g

    def coefficient_matrix(self, theta: Theta) -> sps.csc_matrix:
        """Lower triangle of C(theta)."""
        return lower(self.WtW + sps.diags(self.ginv_diagonal(theta)))

    def assemble(self, theta: Theta) -> "MmeSystem":
        return MmeSystem(self, theta)


class MmeSystem:
    """C, rhs and (after ``factorize``) the factor, solution and residual for one theta."""

    def __init__(self, mme: MixedModelEquations, theta: Theta):
        self.mme = mme
        self.model = mme.model
        self.theta = theta
        self._ginv = mme.ginv_diagonal(theta)
        self.rhs = mme.Wty
        self.factor: LdlFactor | None = None
        self.tau_hat = self.u_tilde = self.e = None

    @property
    def C(self) -> sps.csc_matrix:
        return lower(self.mme.WtW + sps.diags(self._ginv))

    @property
    def factorized(self) -> bool:
        return self.factor is not None

    def factorize(self, pivot_tol: float = PIVOT_TOL) -> "MmeSystem":
        """Numeric LDL^T on the shared symbolic analysis, then solve for (tau, u)."""
        mme = self.mme
        Sx = mme._base.copy()
        Sx[mme._diag_pos] += self._ginv[mme.symbolic.perm]
        self.factor = factor_aligned(mme.symbolic, Sx, pivot_tol, mme._diag_pos)
        sol = solve(self.factor, self.rhs)
        p = self.model.p
        self.tau_hat, self.u_tilde = sol[:p], sol[p:]
        self.e = self.model.y - self.model.W @ sol
        return self

    def _require(self):
        if self.factor is None:
            raise RuntimeError("system is not factorized; call factorize() first")

    @property
    def logdet_c(self) -> float:
        self._require()
        return self.factor.logdet

    @property
    def logdet_g(self) -> float:
        return float(np.dot(self.model.sizes, np.log(self.theta.kappa)))

    @property
    def ypy(self) -> float:
        """y'Py = y'e."""
        self._require()
        return float(self.model.y @ self.e)

    def residual_norm(self) -> float:
        """||C x - rhs|| for the current solution."""
        self._require()
        x = np.concatenate([self.tau_hat, self.u_tilde])
        Cf = self.mme.WtW
        Cx = Cf @ x + Cf.T @ x - Cf.diagonal() * x + self._ginv * x
        return float(np.linalg.norm(Cx - self.rhs))

    def dump(self, directory, stem: str = "mme") -> tuple:
        """Write C (Matrix Market) and rhs (one value per line) for outside checks."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        cpath, rpath = d / f"{stem}_C.mtx", d / f"{stem}_rhs.txt"
        write_symmetric(cpath, self.C, comment=f"MME coefficient matrix at {self.theta!r}")
        write_vector(rpath, self.rhs)
        return cpath, rpath


def assemble_c(model_or_mme, theta: Theta) -> MmeSystem:
    """Unfactored MME system at theta.  Raises BoundaryError if some kappa < KAPPA_MIN."""
    mme = model_or_mme if isinstance(model_or_mme, MixedModelEquations) \
        else MixedModelEquations(model_or_mme)
    return mme.assemble(theta)


def solve_mme(system: MmeSystem):
    """Factorize if needed and return (tau_hat, u_tilde, e)."""
    if not system.factorized:
        system.factorize()
    return system.tau_hat, system.u_tilde, system.e


def apply_p(system: MmeSystem, v) -> np.ndarray:
    """P v = v - W C^{-1} W' v for a vector or an n x r block."""
    system._require()
    v = np.asarray(v, dtype=float)
    n = system.model.n
    if v.shape[0] != n:
        raise ValueError(f"dimension mismatch: vector has {v.shape[0]} rows, model has n={n}")
    W = system.model.W
    return v - W @ solve(system.factor, np.asarray(W.T @ v))


def trace_p_hdot(system: MmeSystem, k: int, method: str = "solve") -> float:
    """tr(P Z_k Z_k').

    ``method="solve"`` uses tr(Z_k'Z_k) - tr(Z_k'W C^{-1} W'Z_k) with multi-RHS
    solves.  ``method="diag"`` uses b_k/kappa_k - tr(C^{kk})/kappa_k^2 from the
    diagonal of C^{-1}; it is faster but cancels badly as kappa_k -> 0, so
    ``"auto"`` only takes it for kappa_k >= 1e-4.
    """
    system._require()
    model = system.model
    if not 0 <= k < model.q:
        raise IndexError(f"random factor index {k} out of range 0..{model.q - 1}")
    kappa = system.theta.kappa[k]
    if method == "auto":
        method = "diag" if kappa >= _DIAG_TRACE_MIN_KAPPA else "solve"
    if method == "diag":
        lo, hi = model.offsets[k], model.offsets[k + 1]
        ckk = inverse_diagonal(system.factor, np.arange(lo, hi)).sum()
        return float((hi - lo) / kappa - ckk / kappa ** 2)
    if method != "solve":
        raise ValueError(f"unknown trace method {method!r}")
    Zk = model.factors[k].Z
    WtZ = (model.W.T @ Zk).tocsc()
    total = float(Zk.multiply(Zk).sum())
    for start in range(0, Zk.shape[1], _RHS_CHUNK):
        block = WtZ[:, start:start + _RHS_CHUNK].toarray()
        X = solve(system.factor, block)
        total -= float(np.sum(block * X))
    return total


def evaluate(mme: MixedModelEquations, theta: Theta) -> MmeSystem:
    """Assemble and factorize in one step."""
    return mme.assemble(theta).factorize()
