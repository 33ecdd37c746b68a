"""Dense reference implementations used as test oracles and for small-scale
Newton / Fisher information.

Everything here forms n x n matrices, so it refuses models with n above a
threshold (500 by default) unless told otherwise.  The error-contrast basis
uses K from a complete QR of X with B = I, giving L_2 = K_2 (orthonormal).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DataError, DenseThresholdError, RankDeficientError
from .model import ModelSpec, Theta
from .results import InfoMatrix, ScoreVec

DENSE_THRESHOLD = 500


def check_dense(n: int, threshold: int | None = DENSE_THRESHOLD):
    if threshold is not None and n > threshold:
        raise DenseThresholdError(
            f"dense computation refused: n={n} exceeds the dense threshold {threshold}")


def _chol(H):
    try:
        return sla.cho_factor(H, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("matrix is not symmetric positive definite") from exc


def _logdet_spd(A) -> float:
    c, _ = _chol(A)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


# -- error-contrast basis ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class LBasis:
    """L = [L1, L2] with L1'X = I_p and L2'X = 0, built from K = [K1, K2] and B."""

    L1: np.ndarray
    L2: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    B: np.ndarray

    @property
    def L(self) -> np.ndarray:
        return np.hstack([self.L1, self.L2])


def build_l_basis(X, B=None) -> LBasis:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n <= p:
        raise DataError(f"n must exceed p (n={n}, p={p})")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientError("X is rank deficient")
    Q, _ = np.linalg.qr(X, mode="complete")
    K1, K2 = Q[:, :p], Q[:, p:]
    B = np.eye(n - p) if B is None else np.asarray(B, dtype=float)
    M = np.hstack([X, K2 @ B.T])
    # L' = M^{-1}
    L = np.linalg.inv(M).T
    return LBasis(L1=L[:, :p], L2=L[:, p:], K1=K1, K2=K2, B=B)


def projector_identities(X) -> dict:
    """Deviations (max abs) of the projector identities for X."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lb = build_l_basis(X)
    n = X.shape[0]
    PX = X @ np.linalg.solve(X.T @ X, X.T)
    L2 = lb.L2
    comp = L2 @ np.linalg.solve(L2.T @ L2, L2.T)
    dev = {
        "L1tX_minus_I": np.abs(lb.L1.T @ X - np.eye(X.shape[1])).max(),
        "L2tX": np.abs(L2.T @ X).max(),
        "PX_vs_K1K1t": np.abs(PX - lb.K1 @ lb.K1.T).max(),
        "I_minus_PX_vs_K2K2t": np.abs(np.eye(n) - PX - lb.K2 @ lb.K2.T).max(),
        "I_minus_PX_vs_L2": np.abs(np.eye(n) - PX - comp).max(),
        "PX_idempotent": np.abs(PX @ PX - PX).max(),
    }
    dev["max"] = max(dev.values())
    return dev


# -- projection P in three forms -------------------------------------------

def p_from_h(X, H) -> np.ndarray:
    """P = H^{-1} - H^{-1}X (X'H^{-1}X)^{-1} X'H^{-1}."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    cf = _chol(H)
    HiX = sla.cho_solve(cf, X)
    Hi = sla.cho_solve(cf, np.eye(H.shape[0]))
    P = Hi - HiX @ np.linalg.solve(X.T @ HiX, HiX.T)
    return 0.5 * (P + P.T)


def p_from_l2(X, H, basis: LBasis | None = None) -> np.ndarray:
    """P = L2 (L2'H L2)^{-1} L2'."""
    lb = basis or build_l_basis(X)
    L2 = lb.L2
    P = L2 @ np.linalg.solve(L2.T @ H @ L2, L2.T)
    return 0.5 * (P + P.T)


def p_from_mme(X, Z, G, R) -> np.ndarray:
    """P = R^{-1} - R^{-1} W C^{-1} W' R^{-1} with W = [X, Z], C = W'R^{-1}W + blockdiag(0, G^{-1})."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    Z = np.zeros((X.shape[0], 0)) if Z is None else np.asarray(Z, dtype=float)
    W = np.hstack([X, Z])
    Ri = np.linalg.inv(R)
    C = W.T @ Ri @ W
    p = X.shape[1]
    if Z.shape[1]:
        C[p:, p:] += np.linalg.inv(G)
    RiW = Ri @ W
    P = Ri - RiW @ np.linalg.solve(C, RiW.T)
    return 0.5 * (P + P.T)


def p_three_ways(X, H, Z=None, G=None, R=None):
    """(P_a, P_b, P_c, max relative deviation).

    P_a from H directly, P_b through the error-contrast basis, P_c through
    the mixed-model equations.  For P_c, H must equal R + Z G Z'; with no
    Z given, R = H and the random part is empty.
    """
    H = np.asarray(H, dtype=float)
    if Z is None:
        R, G = H, None
    elif R is None:
        R = np.eye(H.shape[0])
    Pa = p_from_h(X, H)
    Pb = p_from_l2(X, H)
    Pc = p_from_mme(X, Z, G, R)
    scale = max(np.abs(Pa).max(), 1e-300)
    dev = max(np.abs(Pa - Pb).max(), np.abs(Pa - Pc).max(), np.abs(Pb - Pc).max()) / scale
    return Pa, Pb, Pc, float(dev)


def xhx_identity(X, H) -> float:
    """Relative deviation between (X'H^{-1}X)^{-1} and its L-basis expression."""
    X = np.atleast_2d(np.asarray(X, dtype=float).T).T
    H = np.asarray(H, dtype=float)
    lb = build_l_basis(X)
    L1, L2 = lb.L1, lb.L2
    lhs = np.linalg.inv(X.T @ sla.cho_solve(_chol(H), X))
    rhs = L1.T @ H @ L1 - L1.T @ H @ L2 @ np.linalg.solve(L2.T @ H @ L2, L2.T @ H @ L1)
    return float(np.abs(lhs - rhs).max() / max(np.abs(lhs).max(), 1e-300))


# -- model-level dense twins ------------------------------------------------

def dense_z(model: ModelSpec) -> np.ndarray:
    return model.Z.toarray()


def dense_g(model: ModelSpec, theta: Theta) -> np.ndarray:
    return np.diag(np.repeat(theta.kappa, model.sizes).astype(float))


def dense_h(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> np.ndarray:
    check_dense(model.n, threshold)
    H = np.eye(model.n)
    for k, f in enumerate(model.factors):
        Zk = f.Z.toarray()
        H += theta.kappa[k] * (Zk @ Zk.T)
    return H


def dense_p(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> np.ndarray:
    return p_from_h(model.X, dense_h(model, theta, threshold))


def woodbury_hinv(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> np.ndarray:
    """H^{-1} = I - Z (Z'Z + G^{-1})^{-1} Z' (R = I)."""
    check_dense(model.n, threshold)
    Z = dense_z(model)
    Gi = np.diag(1.0 / np.repeat(theta.kappa, model.sizes))
    return np.eye(model.n) - Z @ np.linalg.solve(Z.T @ Z + Gi, Z.T)


def dense_c(model: ModelSpec, theta: Theta) -> np.ndarray:
    W = model.W.toarray()
    C = W.T @ W
    p = model.p
    C[p:, p:] += np.diag(1.0 / np.repeat(theta.kappa, model.sizes))
    return C


def cinv_blocks(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> dict:
    """Blocks of C^{-1} from the partitioned-inverse formulas, plus checks.

    With D = Z'Z + G^{-1} and H^{-1} from the Woodbury form:
    C^XX = (X'H^{-1}X)^{-1}, C^XZ = -C^XX X'Z D^{-1}, C^ZX = (C^XZ)',
    C^ZZ = D^{-1} + D^{-1} Z'X C^XX X'Z D^{-1}.
    """
    check_dense(model.n, threshold)
    X, Z = model.X, dense_z(model)
    D = Z.T @ Z + np.diag(1.0 / np.repeat(theta.kappa, model.sizes))
    Di = np.linalg.inv(D)
    Hi = woodbury_hinv(model, theta, threshold)
    cxx = np.linalg.inv(X.T @ Hi @ X)
    cxz = -cxx @ X.T @ Z @ Di
    czz = Di + Di @ Z.T @ X @ cxx @ X.T @ Z @ Di
    direct = np.linalg.inv(dense_c(model, theta))
    blocks = np.block([[cxx, cxz], [cxz.T, czz]])
    return {"XX": cxx, "XZ": cxz, "ZX": cxz.T, "ZZ": czz, "direct": direct,
            "deviation": float(np.abs(blocks - direct).max() / np.abs(direct).max())}


def logdet_identity(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> tuple:
    """(log|C| + log|G|, log|H| + log|X'H^{-1}X|) from dense determinants."""
    H = dense_h(model, theta, threshold)
    X = model.X
    lhs = _logdet_spd(dense_c(model, theta)) + float(np.dot(model.sizes, np.log(theta.kappa)))
    xhx = X.T @ sla.cho_solve(_chol(H), X)
    rhs = _logdet_spd(H) + _logdet_spd(xhx)
    return lhs, rhs


def loglik_l2(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> float:
    """Restricted log-likelihood as the log-density of the error contrasts L2'y.

    With L2 = K2 this differs from ``loglik_dense`` by the theta-free constant
    log|X'X| / 2.
    """
    H = dense_h(model, theta, threshold)
    n, p = model.n, model.p
    L2 = build_l_basis(model.X).L2
    V = theta.sigma2 * (L2.T @ H @ L2)
    r = L2.T @ model.y
    return -0.5 * ((n - p) * np.log(2 * np.pi) + _logdet_spd(V) + float(r @ np.linalg.solve(V, r)))


def loglik_dense(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> float:
    """Dense l_R on the same constant convention as the sparse path."""
    XtX = model.X.T @ model.X
    return loglik_l2(model, theta, threshold) - 0.5 * _logdet_spd(XtX)


def ypy_l2(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> float:
    H = dense_h(model, theta, threshold)
    L2 = build_l_basis(model.X).L2
    r = L2.T @ model.y
    return float(r @ np.linalg.solve(L2.T @ H @ L2, r))


def _parts(model, theta, threshold):
    P = dense_p(model, theta, threshold)
    Hd = [f.Z.toarray() @ f.Z.toarray().T for f in model.factors]
    Py = P @ model.y
    return P, Hd, Py


def score_dense(model: ModelSpec, theta: Theta, threshold: int | None = DENSE_THRESHOLD) -> ScoreVec:
    P, Hd, Py = _parts(model, theta, threshold)
    s2 = theta.sigma2
    nu = model.p
    s_sigma = -0.5 * ((model.n - nu) / s2 - float(model.y @ Py) / s2 ** 2)
    s_kappa = np.array([-0.5 * (np.trace(P @ Hk) - float(Py @ Hk @ Py) / s2) for Hk in Hd])
    return ScoreVec(s_sigma, s_kappa)


def info_dense(model: ModelSpec, theta: Theta, kind: str = "observed",
               threshold: int | None = DENSE_THRESHOLD) -> InfoMatrix:
    """Observed, Fisher or average information with explicit P (dH/dkappa second derivatives vanish)."""
    if kind not in ("observed", "fisher", "average"):
        raise ValueError(f"unknown information kind {kind!r}")
    P, Hd, Py = _parts(model, theta, threshold)
    s2 = theta.sigma2
    n, nu, q = model.n, model.p, model.q
    ypy = float(model.y @ Py)
    PH = [P @ Hk for Hk in Hd]
    I = np.zeros((1 + q, 1 + q))
    if kind == "observed":
        I[0, 0] = ypy / s2 ** 3 - (n - nu) / (2 * s2 ** 2)
    elif kind == "fisher":
        I[0, 0] = np.trace(P @ dense_h(model, theta, threshold)) / (2 * s2 ** 2)
    else:
        I[0, 0] = ypy / (2 * s2 ** 3)
    for i in range(q):
        yphpy = float(Py @ Hd[i] @ Py)
        I[0, i + 1] = np.trace(PH[i]) / (2 * s2) if kind == "fisher" else yphpy / (2 * s2 ** 2)
        for j in range(i, q):
            quad = float(Py @ Hd[i] @ P @ Hd[j] @ Py)
            tr = float(np.sum(PH[i] * PH[j].T))
            if kind == "observed":
                v = -0.5 * tr + quad / s2
            elif kind == "fisher":
                v = 0.5 * tr
            else:
                v = quad / (2 * s2)
            I[i + 1, j + 1] = I[j + 1, i + 1] = v
    I[1:, 0] = I[0, 1:]
    return InfoMatrix(kind, I)
