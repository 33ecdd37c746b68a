import warnings

import numpy as np
import pytest

from remlkit import DenseThresholdError, Theta
from remlkit import oracle, reml
from remlkit.bench import PRESETS, generate
from remlkit.mme import MixedModelEquations, evaluate
from remlkit.model import KAPPA_MIN, model_from_arrays

from helpers import random_model, toy_model


def fd_score(model, theta, mme=None):
    v = theta.vector()
    g = np.empty(v.size)
    for i in range(v.size):
        h = 1e-5 * max(1.0, abs(v[i]))
        e = np.zeros(v.size)
        e[i] = h
        g[i] = (reml.log_likelihood(model, Theta.from_vector(v + e), mme)
                - reml.log_likelihood(model, Theta.from_vector(v - e), mme)) / (2 * h)
    return g


def test_toy_values():
    m, th = toy_model(), Theta(1.0, [1.0])
    ll = reml.log_likelihood(m, th)
    assert ll == pytest.approx(-0.5 * (3 * np.log(2 * np.pi) + np.log(12) + 7 / 3), rel=1e-14)
    assert ll == pytest.approx(-5.16594, abs=5e-6)
    s = reml.score(m, th)
    assert s.s_sigma2 == pytest.approx(-1 / 3, rel=1e-13)
    A = reml.average_info(m, th)
    assert A.kind == "average" and A[0, 0] == pytest.approx(7 / 6, rel=1e-13)
    assert reml.profile_sigma2(m, [1.0]) == pytest.approx(7 / 9, rel=1e-13)
    assert abs(reml.score(m, Theta(7 / 9, [1.0])).s_sigma2) < 1e-10


def test_sigma2_scaling_exact():
    m = toy_model()
    base = reml.log_likelihood(m, Theta(1.0, [1.0]))
    for c in (0.3, 2.0, 11.0):
        diff = reml.log_likelihood(m, Theta(c, [1.0])) - base
        assert diff == pytest.approx(-0.5 * (3 * np.log(c) + (1 / c - 1) * 7 / 3), abs=1e-13)


def test_loglik_components_sum():
    m, th = toy_model(), Theta(1.3, [0.7])
    comp = reml.loglik_components(evaluate(MixedModelEquations(m), th))
    lhs = -2 * comp["loglik"] - comp["const"] - comp["dof_log_sigma2"]
    assert lhs == pytest.approx(comp["logdet_c"] + comp["logdet_g"] + comp["ypy_over_sigma2"], rel=1e-14)


@pytest.mark.parametrize("seed", range(6))
def test_fast_path_matches_dense(seed):
    rng = np.random.default_rng(seed)
    m, th = random_model(rng, n=int(rng.integers(30, 200)), q=int(rng.integers(1, 5)),
                         p=int(rng.integers(1, 3)))
    assert reml.log_likelihood(m, th) == pytest.approx(oracle.loglik_dense(m, th), rel=1e-9)
    np.testing.assert_allclose(reml.score(m, th).vector(), oracle.score_dense(m, th).vector(),
                               rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(reml.average_info(m, th).values,
                               oracle.info_dense(m, th, "average").values, rtol=1e-9)
    lhs, rhs = oracle.logdet_identity(m, th)
    s = evaluate(MixedModelEquations(m), th)
    assert s.logdet_c + s.logdet_g == pytest.approx(lhs, rel=1e-10)
    assert lhs == pytest.approx(rhs, abs=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_score_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    m, th = random_model(rng, n=120, q=3, p=2)
    s = reml.score(m, th).vector()
    fd = fd_score(m, th)
    assert np.max(np.abs(fd - s) / np.maximum(np.abs(s), 1e-3)) < 1e-6


def test_average_info_is_psd_and_symmetric():
    rng = np.random.default_rng(7)
    m, th = random_model(rng, n=150, q=4)
    A = reml.average_info(m, th).values
    assert np.array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).min() > -1e-10 * np.abs(A).max()


def test_splitting_remainder():
    m, th = toy_model(), Theta(1.0, [1.0])
    Z = reml.splitting_check(m, th)
    assert Z.kind == "remainder"
    assert abs(Z[0, 0]) < 1e-12 and abs(Z[1, 1]) < 1e-12
    assert Z[0, 1] == pytest.approx((2 / 3) / 4 - (8 / 9) / 4, rel=1e-12)


def test_splitting_refuses_large_n():
    rng = np.random.default_rng(8)
    m, th = random_model(rng, n=60, q=1)
    with pytest.raises(DenseThresholdError):
        reml.splitting_check(m, th, dense_threshold=50)


def test_profile_scaling_and_degenerate():
    rng = np.random.default_rng(9)
    m, _ = random_model(rng, n=50, q=2)
    m3 = model_from_arrays(m.X, [f.Z for f in m.factors], 3.0 * m.y)
    k = [0.4, 1.1]
    assert reml.profile_sigma2(m3, k) == pytest.approx(9 * reml.profile_sigma2(m, k), rel=1e-12)
    flat = model_from_arrays(m.X, [f.Z for f in m.factors], np.full(m.n, 2.0))
    with pytest.warns(RuntimeWarning, match="degenerate fit"):
        assert reml.profile_sigma2(flat, k) == pytest.approx(0.0, abs=1e-20)


def test_fit_methods_agree():
    rng = np.random.default_rng(10)
    m, _ = random_model(rng, n=150, q=3, p=2)
    fits = {meth: reml.fit(m, method=meth, tol_score=1e-8) for meth in ("ai", "fisher", "newton")}
    for r in fits.values():
        assert r.converged
    ref = fits["ai"].theta_hat.vector()
    for meth in ("fisher", "newton"):
        assert np.max(np.abs(fits[meth].theta_hat.vector() - ref)) < 1e-6


def test_fit_without_profiling_matches():
    rng = np.random.default_rng(11)
    m, _ = random_model(rng, n=120, q=2)
    a = reml.fit(m, tol_score=1e-8)
    b = reml.fit(m, profile_sigma2=False, tol_score=1e-8)
    assert a.converged and b.converged
    np.testing.assert_allclose(a.theta_hat.vector(), b.theta_hat.vector(), rtol=1e-6)


def test_fit_trace_monotone_and_profiled_score_zero():
    rng = np.random.default_rng(12)
    m, _ = random_model(rng, n=100, q=3)
    r = reml.fit(m)
    lls = [t["loglik"] for t in r.trace]
    assert all(b >= a - 1e-12 * (1 + abs(a)) for a, b in zip(lls, lls[1:]))
    assert all(abs(t["s_sigma2"]) < 1e-8 * (1 + abs(t["loglik"])) for t in r.trace)
    assert r.score_norm < 1e-6 * (1 + abs(r.loglik))


def test_fit_from_optimum_takes_at_most_one_step():
    rng = np.random.default_rng(13)
    m, _ = random_model(rng, n=100, q=2)
    r = reml.fit(m, tol_score=1e-9)
    again = reml.fit(m, r.theta_hat, tol_score=1e-9)
    assert again.converged and again.iterations <= 1
    assert np.max(np.abs(again.theta_hat.vector() - r.theta_hat.vector())) < 1e-8


def test_fit_boundary_component():
    # second factor carries no signal: its ratio should end at the floor
    rng = np.random.default_rng(14)
    # balanced crossing keeps the two factors orthogonal
    a, b = (g.ravel() for g in np.meshgrid(np.arange(8), np.arange(10), [0, 1], indexing="ij")[:2])
    n = a.size
    Za, Zb = np.eye(8)[a], np.eye(10)[b]
    y = Za @ rng.normal(size=8) * 1.5 + rng.normal(size=n)
    # flatten the b-group means so that factor explains nothing
    y -= Zb @ (Zb.T @ y / Zb.sum(axis=0)) - y.mean()
    m = model_from_arrays(np.ones(n), [Za, Zb], y)
    r = reml.fit(m)
    assert r.converged
    assert r.theta_hat.kappa[1] == pytest.approx(KAPPA_MIN)
    assert r.at_boundary == (1,)
    assert r.score.s_kappa[1] < 0


def test_newton_refused_above_threshold():
    rng = np.random.default_rng(15)
    m, _ = random_model(rng, n=80, q=1)
    with pytest.raises(DenseThresholdError):
        reml.fit(m, method="newton", dense_threshold=50)


def test_max_iter_exhaustion_returns_trace():
    rng = np.random.default_rng(16)
    m, _ = random_model(rng, n=100, q=3)
    r = reml.fit(m, max_iter=1)
    assert not r.converged and r.iterations == 1 and len(r.trace) == 2
    assert "no convergence" in r.message


def test_steepest_fallback_direction():
    d, kind = reml._direction(np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([1.0, 1.0]))
    assert kind == "steepest" and np.all(d > 0)
    d, kind = reml._direction(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 1.0]))
    assert kind == "regularized"


def test_p1_mini_recovery_single_seed():
    ds = generate(PRESETS["P1-mini"].with_seed(3))
    m = ds.model()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r = reml.fit(m)
    assert r.converged and r.iterations <= 20
    assert np.all(np.isfinite(r.se)) and r.score_norm < 1e-6 * (1 + abs(r.loglik))
    # asymptotic SEs from the expected information at the truth
    F = oracle.info_dense(m, ds.theta, "fisher", threshold=None).values
    z = np.abs(r.theta_hat.vector() - ds.theta.vector()) / np.sqrt(np.diag(np.linalg.inv(F)))
    assert np.all(z < 3)
