"""Restricted log-likelihood, scores, average information and the outer iterations.

Parameters are theta = (sigma2, kappa_1..kappa_q) with var(y) = sigma2 H(kappa).
All sparse-path quantities come from one LDL^T of the mixed-model coefficient
matrix C:

    l_R = -1/2 [(n - p) log(2 pi sigma2) + log|C| + log|G| + y'Py / sigma2]

using log|H| + log|X'H^{-1}X| = log|C| + log|G| (R = I) and Py = e.
"""
from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.linalg as sla

from .errors import DataError, DenseThresholdError
from .mme import MixedModelEquations, MmeSystem, apply_p, evaluate, trace_p_hdot
from .model import KAPPA_MIN, ModelSpec, Theta
from .results import FitResult, InfoMatrix, ScoreVec

log = logging.getLogger(__name__)

DENSE_THRESHOLD = 500
MAX_HALVINGS = 20
PIN_ITERATIONS = 3


def _system(model, theta, mme=None) -> MmeSystem:
    if mme is None:
        mme = MixedModelEquations(model)
    return evaluate(mme, theta)


def loglik_components(system: MmeSystem) -> dict:
    """The summands of -2 l_R, kept apart for auditing."""
    model, theta = system.model, system.theta
    dof = model.n - model.p
    comp = {
        "const": dof * np.log(2 * np.pi),
        "dof_log_sigma2": dof * np.log(theta.sigma2),
        "logdet_c": system.logdet_c,
        "logdet_g": system.logdet_g,
        "ypy": system.ypy,
        "ypy_over_sigma2": system.ypy / theta.sigma2,
    }
    comp["loglik"] = -0.5 * (comp["const"] + comp["dof_log_sigma2"] + comp["logdet_c"]
                             + comp["logdet_g"] + comp["ypy_over_sigma2"])
    return comp


def _loglik(system: MmeSystem) -> float:
    return loglik_components(system)["loglik"]


def log_likelihood(model: ModelSpec, theta: Theta, mme: MixedModelEquations | None = None) -> float:
    return _loglik(_system(model, theta, mme))


def _zte(system: MmeSystem) -> np.ndarray:
    """||Z_k'e||^2 = y'P Hdot_k P y for each k."""
    out = np.empty(system.model.q)
    for k, f in enumerate(system.model.factors):
        z = f.Z.T @ system.e
        out[k] = float(z @ z)
    return out


def _score(system: MmeSystem, trace_method: str = "solve") -> ScoreVec:
    model, theta = system.model, system.theta
    s2 = theta.sigma2
    s_sigma = -0.5 * ((model.n - model.p) / s2 - system.ypy / s2 ** 2)
    tr = np.array([trace_p_hdot(system, k, trace_method) for k in range(model.q)])
    s_kappa = -0.5 * (tr - _zte(system) / s2)
    return ScoreVec(float(s_sigma), s_kappa)


def score(model: ModelSpec, theta: Theta, mme: MixedModelEquations | None = None,
          trace_method: str = "solve") -> ScoreVec:
    return _score(_system(model, theta, mme), trace_method)


def _average_info(system: MmeSystem) -> InfoMatrix:
    """Average information from xi = Py, eta_k = Hdot_k xi and zeta = P [eta_1..eta_q]."""
    model, theta = system.model, system.theta
    s2, q = theta.sigma2, model.q
    xi = system.e
    eta = np.empty((model.n, q))
    for k, f in enumerate(model.factors):
        eta[:, k] = f.Z @ (f.Z.T @ xi)
    zeta = apply_p(system, eta) if q else eta
    A = np.zeros((1 + q, 1 + q))
    A[0, 0] = system.ypy / (2 * s2 ** 3)
    A[0, 1:] = A[1:, 0] = (xi @ eta) / (2 * s2 ** 2)
    for i in range(q):
        for j in range(i, q):
            A[i + 1, j + 1] = A[j + 1, i + 1] = float(eta[:, i] @ zeta[:, j]) / (2 * s2)
    return InfoMatrix("average", A)


def average_info(model: ModelSpec, theta: Theta, mme: MixedModelEquations | None = None) -> InfoMatrix:
    return _average_info(_system(model, theta, mme))


def splitting_check(model: ModelSpec, theta: Theta, dense_threshold: int | None = DENSE_THRESHOLD,
                    tol: float = 1e-9) -> InfoMatrix:
    """Remainder (I_O + I)/2 - I_A.

    For a linear variance structure the (sigma2, sigma2) and (kappa, kappa)
    entries vanish; only the sigma2-kappa cross terms remain.
    """
    from . import oracle
    if dense_threshold is not None and model.n > dense_threshold:
        raise DenseThresholdError(
            f"splitting check needs dense information: n={model.n} exceeds {dense_threshold}")
    obs = oracle.info_dense(model, theta, "observed", dense_threshold)
    fis = oracle.info_dense(model, theta, "fisher", dense_threshold)
    avg = average_info(model, theta)
    Z = 0.5 * (obs.values + fis.values) - avg.values
    scale = max(np.abs(avg.values).max(), 1.0)
    zero = Z.copy()
    zero[0, 1:] = zero[1:, 0] = 0.0
    if np.abs(zero).max() > tol * scale:
        raise AssertionError(f"splitting remainder has nonzero diagonal blocks: {np.abs(zero).max():.3g}")
    return InfoMatrix("remainder", Z)


def profile_sigma2(model: ModelSpec, kappa, mme: MixedModelEquations | None = None) -> float:
    """sigma2 = y'Py / (n - p), the root of the sigma2 score for fixed kappa."""
    system = _system(model, Theta(1.0, kappa), mme)
    return _profile(system)


def _profile(system: MmeSystem) -> float:
    model = system.model
    ypy = system.ypy
    scale = float(model.y @ model.y)
    if ypy <= 1e-14 * max(scale, 1e-300):
        warnings.warn("degenerate fit: y'Py is zero, y lies in the fitted space", RuntimeWarning,
                      stacklevel=3)
        return max(ypy, 0.0) / (model.n - model.p)
    return ypy / (model.n - model.p)


def default_theta0(model: ModelSpec) -> Theta:
    kappa = np.full(model.q, 0.1)
    var = float(np.var(model.y, ddof=1)) if model.n > 1 else 1.0
    if not var > 0:
        var = 1.0
    return Theta(var / (1.0 + kappa.sum()), kappa)


# -- outer iterations ---------------------------------------------------------

def _information(system: MmeSystem, method: str, dense_threshold) -> InfoMatrix:
    if method == "ai":
        return _average_info(system)
    from . import oracle
    kind = "observed" if method == "newton" else "fisher"
    return oracle.info_dense(system.model, system.theta, kind, dense_threshold)


def _direction(I: np.ndarray, s: np.ndarray):
    """Solve I d = s; regularize once, else fall back to a scaled gradient step."""
    try:
        c = sla.cho_factor(I, lower=True)
        return sla.cho_solve(c, s), "full"
    except (np.linalg.LinAlgError, ValueError):
        pass
    ridge = 1e-8 * np.trace(I) / I.shape[0]
    if ridge > 0:
        try:
            c = sla.cho_factor(I + ridge * np.eye(I.shape[0]), lower=True)
            return sla.cho_solve(c, s), "regularized"
        except (np.linalg.LinAlgError, ValueError):
            pass
    d = np.abs(np.diag(I))
    scale = d.max() if d.size and d.max() > 0 else 1.0
    return s / scale, "steepest"


def _projected(sv: np.ndarray, kappa: np.ndarray) -> tuple:
    """Score with pinned coordinates (kappa at its floor, pushing down) removed.

    sigma2 always stays in the solved system: when it is profiled its score is
    zero and keeping its row gives the kappa step the Schur-complement form.
    """
    pinned = (kappa <= KAPPA_MIN * (1 + 1e-9)) & (sv[1:] < 0)
    mask = np.concatenate([[True], ~pinned])
    return np.where(mask, sv, 0.0), mask


def fit(model: ModelSpec, theta0: Theta | None = None, method: str = "ai", *,
        profile_sigma2: bool = True, max_iter: int = 50, tol_score: float | None = None,
        tol_loglik: float = 1e-8, dense_threshold: int | None = DENSE_THRESHOLD,
        mme: MixedModelEquations | None = None, ordering="amd", trace_method: str = "solve",
        callback=None) -> FitResult:
    """Maximize l_R by Newton-Raphson, Fisher scoring or average information.

    Each iteration solves I d = S and takes theta + t d with t halved (up to
    20 times) until l_R does not decrease and theta stays admissible.  With
    ``profile_sigma2`` only kappa is stepped and sigma2 is set to its
    closed-form optimum afterwards.  ``tol_score`` defaults to
    1e-6 (1 + |l_R|); convergence needs the projected score max-norm below it
    and |delta l_R| < ``tol_loglik``.
    """
    if method not in ("ai", "fisher", "newton"):
        raise ValueError(f"unknown method {method!r}; expected ai, fisher or newton")
    if method != "ai" and dense_threshold is not None and model.n > dense_threshold:
        raise DenseThresholdError(
            f"method {method!r} needs dense information and is limited to n <= {dense_threshold} "
            f"(n = {model.n}); use method='ai'")
    if model.q == 0:
        raise DataError("model has no random terms")
    if mme is None:
        mme = MixedModelEquations(model, ordering)
    theta = default_theta0(model) if theta0 is None else theta0
    if theta.q != model.q:
        raise ValueError(f"theta0 has {theta.q} ratios, model has {model.q} random terms")
    theta = theta.replace(kappa=np.maximum(theta.kappa, KAPPA_MIN))

    system = evaluate(mme, theta)
    if profile_sigma2:
        theta = theta.replace(sigma2=_profile(system))
        system = _reuse(system, theta)
    ll = _loglik(system)
    q = model.q
    trace = []
    pin_count = np.zeros(q, dtype=int)
    converged = False
    prev_ll = None
    it = 0
    message = ""
    halvings, kind = 0, ""
    while True:
        S = _score(system, trace_method)
        sv = S.vector()
        proj, mask = _projected(sv, theta.kappa)
        snorm = float(np.abs(proj).max())
        tol_s = tol_score if tol_score is not None else 1e-6 * (1 + abs(ll))
        # halvings and step kind are those that led to this iterate
        record = {"iter": it, "sigma2": theta.sigma2, "kappa": theta.kappa.tolist(), "loglik": ll,
                  "score_norm": snorm, "s_sigma2": S.s_sigma2, "halvings": halvings, "step": kind}
        trace.append(record)
        if callback is not None:
            callback(record)
        if snorm < tol_s and prev_ll is not None and abs(ll - prev_ll) < tol_loglik:
            converged = True
            break
        if it >= max_iter:
            message = f"no convergence in {max_iter} iterations"
            break

        I = _information(system, method, dense_threshold).values
        free = np.flatnonzero(mask)
        delta = np.zeros(1 + q)
        d, kind = _direction(I[np.ix_(free, free)], sv[free])
        delta[free] = d
        if kind != "full":
            log.info("iteration %d: %s step", it + 1, kind)

        t = 1.0
        accepted = None
        for halvings in range(MAX_HALVINGS + 1):
            cand = _candidate(theta, t * delta, profile_sigma2)
            cs = None
            if cand is not None:
                try:
                    cs = evaluate(mme, cand)
                except ArithmeticError:
                    cs = None
            if cs is not None:
                if profile_sigma2:
                    cand = cand.replace(sigma2=_profile(cs))
                    cs = _reuse(cs, cand)
                cll = _loglik(cs)
                if np.isfinite(cll) and cll >= ll - 1e-12 * (1 + abs(ll)):
                    accepted = (cand, cs, cll)
                    break
            t *= 0.5
        if accepted is None:
            message = "step halving found no ascent step"
            break
        it += 1
        theta, system, new_ll = accepted
        prev_ll, ll = ll, new_ll
        at_floor = theta.kappa <= KAPPA_MIN * (1 + 1e-9)
        pin_count = np.where(at_floor, pin_count + 1, 0)

    lls = [r["loglik"] for r in trace]
    if any(b < a - 1e-12 * (1 + abs(a)) for a, b in zip(lls, lls[1:])):
        raise AssertionError("restricted log-likelihood decreased along accepted iterates")

    A = _average_info(system)
    se = _standard_errors(A.values)
    boundary = tuple(int(k) for k in np.flatnonzero(pin_count >= PIN_ITERATIONS))
    if not boundary:
        boundary = tuple(int(k) for k in np.flatnonzero(
            (theta.kappa <= KAPPA_MIN * (1 + 1e-9)) & converged))
    return FitResult(theta_hat=theta, loglik=ll, iterations=it, converged=converged,
                     score_norm=trace[-1]["score_norm"], method=method, trace=trace, se=se,
                     at_boundary=boundary, info=A, score=S, message=message)


def _reuse(system: MmeSystem, theta: Theta) -> MmeSystem:
    """Same factorization, new sigma2 (C does not depend on sigma2)."""
    out = MmeSystem.__new__(MmeSystem)
    out.__dict__.update(system.__dict__)
    out.theta = theta
    return out


def _candidate(theta: Theta, step: np.ndarray, profile: bool):
    kappa = np.maximum(theta.kappa + step[1:], KAPPA_MIN)
    sigma2 = theta.sigma2 if profile else theta.sigma2 + step[0]
    if not (np.isfinite(sigma2) and sigma2 > 0 and np.all(np.isfinite(kappa))):
        return None
    return Theta(sigma2, kappa)


def _standard_errors(I: np.ndarray) -> np.ndarray:
    try:
        cov = np.linalg.inv(I)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(I)
    d = np.diag(cov)
    return np.sqrt(np.where(d > 0, d, np.nan))
