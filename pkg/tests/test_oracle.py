import numpy as np
import pytest

from remlkit import DataError, DenseThresholdError, Theta
from remlkit.mme import MixedModelEquations, evaluate
from remlkit.model import model_from_arrays
from remlkit import oracle
from remlkit.reml import log_likelihood

from helpers import TOY_Z, random_model, simulate_y, toy_model


def test_l_basis_two_vector():
    lb = oracle.build_l_basis(np.ones((2, 1)))
    k2 = lb.K2[:, 0]
    assert np.allclose(np.abs(k2), 1 / np.sqrt(2)) and k2[0] * k2[1] < 0
    assert np.abs(lb.L2.T @ np.ones((2, 1))).max() < 1e-15


def test_l_basis_rejects_square_x():
    with pytest.raises(DataError, match="n must exceed p"):
        oracle.build_l_basis(np.eye(4))


def test_l_basis_random_identities():
    X = np.random.default_rng(0).normal(size=(20, 3))
    lb = oracle.build_l_basis(X)
    assert np.abs(lb.L1.T @ X - np.eye(3)).max() < 1e-10
    assert np.abs(lb.L2.T @ X).max() < 1e-10
    assert abs(np.linalg.det(np.hstack([X, lb.K2 @ lb.B.T]))) > 0


def test_projector_identities():
    PX = np.ones((3, 3)) / 3
    X = np.ones((3, 1))
    assert oracle.projector_identities(X)["max"] < 1e-10
    assert np.allclose(X @ np.linalg.solve(X.T @ X, X.T), PX)
    assert oracle.projector_identities(np.random.default_rng(1).normal(size=(15, 4)))["max"] < 1e-10
    Q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(10, 3)))
    lb = oracle.build_l_basis(Q)
    assert np.abs(lb.K1 @ lb.K1.T - Q @ Q.T).max() < 1e-12


def test_p_three_ways_identity_h():
    X = np.random.default_rng(3).normal(size=(8, 2))
    Pa, Pb, Pc, dev = oracle.p_three_ways(X, np.eye(8))
    assert dev < 1e-12
    np.testing.assert_allclose(Pa, np.eye(8) - X @ np.linalg.solve(X.T @ X, X.T), atol=1e-12)


def test_p_three_ways_toy():
    H = np.eye(4) + TOY_Z @ TOY_Z.T
    Pa, Pb, Pc, dev = oracle.p_three_ways(np.ones((4, 1)), H, Z=TOY_Z, G=np.eye(2))
    expected = np.array([-5, 1, -1, 5]) / 6
    for P in (Pa, Pb, Pc):
        np.testing.assert_allclose(P @ [1, 2, 3, 4.0], expected, atol=1e-14)
    assert dev < 1e-12


def test_p_three_ways_random_spd_general_r():
    rng = np.random.default_rng(4)
    n, b = 30, 6
    A = rng.normal(size=(n, n))
    R = A @ A.T / n + np.eye(n)
    Z = rng.normal(size=(n, b))
    G = np.diag(rng.uniform(0.2, 2, b))
    H = R + Z @ G @ Z.T
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    *_, dev = oracle.p_three_ways(X, H, Z=Z, G=G, R=R)
    assert dev < 1e-9


def test_xhx_identity():
    Q, _ = np.linalg.qr(np.random.default_rng(5).normal(size=(6, 2)))
    assert oracle.xhx_identity(Q, np.eye(6)) < 1e-12
    H = np.eye(4) + TOY_Z @ TOY_Z.T
    X = np.ones((4, 1))
    assert np.linalg.inv(X.T @ np.linalg.solve(H, X))[0, 0] == pytest.approx(0.75)
    assert oracle.xhx_identity(X, H) < 1e-12
    rng = np.random.default_rng(6)
    A = rng.normal(size=(25, 25))
    assert oracle.xhx_identity(rng.normal(size=(25, 3)), A @ A.T + np.eye(25)) < 1e-9


def test_woodbury():
    m = toy_model()
    Hi = oracle.woodbury_hinv(m, Theta(1.0, [1.0]))
    block = np.array([[2, -1], [-1, 2]]) / 3
    np.testing.assert_allclose(Hi[:2, :2], block, atol=1e-15)
    np.testing.assert_allclose(Hi[2:, 2:], block, atol=1e-15)
    np.testing.assert_allclose(oracle.woodbury_hinv(m, Theta(1.0, [1e-12])), np.eye(4), atol=1e-11)
    rng = np.random.default_rng(7)
    mr, th = random_model(rng, n=50, q=3)
    assert np.abs(oracle.dense_h(mr, th) @ oracle.woodbury_hinv(mr, th) - np.eye(50)).max() < 1e-10


def test_cinv_blocks():
    cb = oracle.cinv_blocks(toy_model(), Theta(1.0, [1.0]))
    assert cb["XX"][0, 0] == pytest.approx(0.75)
    assert cb["deviation"] < 1e-12
    rng = np.random.default_rng(8)
    m, th = random_model(rng, n=60, q=3, p=2)
    cb = oracle.cinv_blocks(m, th)
    assert cb["deviation"] < 1e-9
    H = oracle.dense_h(m, th)
    np.testing.assert_allclose(cb["XX"], np.linalg.inv(m.X.T @ np.linalg.solve(H, m.X)), rtol=1e-9)
    big = oracle.cinv_blocks(toy_model(), Theta(1.0, [1e9]))
    assert big["deviation"] < 1e-6


def test_info_examples_toy():
    m, th = toy_model(), Theta(1.0, [1.0])
    assert oracle.info_dense(m, th, "fisher")[0, 0] == pytest.approx(1.5, rel=1e-12)
    assert oracle.info_dense(m, th, "observed")[0, 0] == pytest.approx(5 / 6, rel=1e-12)
    assert oracle.info_dense(m, th, "average")[0, 0] == pytest.approx(7 / 6, rel=1e-12)


def test_dense_threshold():
    rng = np.random.default_rng(9)
    m, th = random_model(rng, n=60, q=1)
    with pytest.raises(DenseThresholdError):
        oracle.dense_h(m, th, threshold=50)
    assert oracle.dense_h(m, th, threshold=None).shape == (60, 60)


def test_loglik_l2_constant_offset():
    m, th = toy_model(), Theta(1.0, [1.0])
    fast = log_likelihood(m, th)
    assert fast == pytest.approx(-5.16594, abs=5e-6)
    assert oracle.loglik_dense(m, th) == pytest.approx(fast, abs=1e-12)
    assert oracle.loglik_l2(m, th) - fast == pytest.approx(0.5 * np.log(4.0), abs=1e-12)


def test_ypy_three_ways():
    rng = np.random.default_rng(10)
    m, th = random_model(rng, n=80, q=3, p=2)
    s = evaluate(MixedModelEquations(m), th)
    from remlkit.mme import apply_p
    a = float(m.y @ apply_p(s, m.y))
    b = float(m.y @ s.e)
    c = oracle.ypy_l2(m, th)
    assert max(abs(a - b), abs(a - c), abs(b - c)) < 1e-10 * abs(a)


def test_logdet_identity_toy():
    lhs, rhs = oracle.logdet_identity(toy_model(), Theta(1.0, [1.0]))
    assert lhs == pytest.approx(np.log(12)) and rhs == pytest.approx(np.log(12))


def test_monte_carlo_expectations():
    # E(y'Py) = (n - p) sigma2 and E(I_O) = I
    rng = np.random.default_rng(11)
    m, th = random_model(rng, n=40, q=2)
    Zs = [f.Z for f in m.factors]
    Y = simulate_y(rng, m.X, Zs, th, size=2000)
    P = oracle.dense_p(m, th)
    q = np.einsum("ij,ij->j", Y, P @ Y)
    mean, se = q.mean(), q.std(ddof=1) / np.sqrt(q.size)
    assert abs(mean - (m.n - m.p) * th.sigma2) < 3 * se
    # observed (sigma2, sigma2) entry is linear in y'Py
    obs = q / th.sigma2 ** 3 - (m.n - m.p) / (2 * th.sigma2 ** 2)
    fis = oracle.info_dense(m, th, "fisher")[0, 0]
    assert abs(obs.mean() - fis) < 3 * obs.std(ddof=1) / np.sqrt(obs.size)
    # one kappa-kappa entry as well
    H1 = Zs[0].toarray() @ Zs[0].toarray().T
    PY = P @ Y
    quad = np.einsum("ij,ij->j", H1 @ PY, P @ (H1 @ PY))
    tr = np.trace(P @ H1 @ P @ H1)
    o11 = -0.5 * tr + quad / th.sigma2
    f11 = oracle.info_dense(m, th, "fisher")[1, 1]
    assert abs(o11.mean() - f11) < 3 * o11.std(ddof=1) / np.sqrt(o11.size)


def test_l2_identity_with_covariates():
    rng = np.random.default_rng(12)
    X = np.column_stack([np.ones(30), rng.normal(size=30)])
    Z = np.eye(5)[rng.integers(0, 5, 30)]
    m = model_from_arrays(X, [Z], rng.normal(size=30))
    th = Theta(1.7, [0.4])
    offset = 0.5 * np.linalg.slogdet(X.T @ X)[1]
    assert oracle.loglik_l2(m, th) - log_likelihood(m, th) == pytest.approx(offset, abs=1e-10)


def test_projection_uses_h_not_h_inverse():
    # L2 (L2'H L2)^{-1} L2' equals P; the variant with H^{-1} inside does not
    rng = np.random.default_rng(13)
    m, th = random_model(rng, n=25, q=2)
    H = oracle.dense_h(m, th)
    L2 = oracle.build_l_basis(m.X).L2
    P = oracle.p_from_h(m.X, H)
    good = L2 @ np.linalg.solve(L2.T @ H @ L2, L2.T)
    bad = L2 @ np.linalg.solve(L2.T @ np.linalg.inv(H) @ L2, L2.T)
    assert np.abs(good - P).max() < 1e-10
    assert np.abs(bad - P).max() > 1e-2
