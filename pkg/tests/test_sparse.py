import itertools
import os

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings, strategies as st

from remlkit.errors import NotPositiveDefiniteError
from remlkit.sparse import (FactorStats, amd_order, elimination_tree, inverse_diagonal, ldl,
                            ldl_flops, logdet, numeric_factor, read_symmetric, read_vector,
                            reconstruct, solve, symbolic_factor, write_symmetric, write_vector)
from remlkit.sparse.symbolic import permute


def random_spd(rng, m, density=0.05):
    A = sps.random(m, m, density=density, random_state=np.random.RandomState(rng.integers(1 << 31)))
    A = A + A.T
    return (A + sps.diags(np.abs(A).sum(axis=1).A1 + 1.0)).tocsc()


def fill_in(A, perm):
    return symbolic_factor(A, perm).nnz_l - sps.tril(sps.csc_matrix(A)).nnz


def arrow(m):
    A = np.eye(m) * m
    A[0, :] = A[:, 0] = 1.0
    A[0, 0] = m
    return sps.csc_matrix(A)


def tridiag(m):
    return sps.diags([np.full(m - 1, -1.0), np.full(m, 4.0), np.full(m - 1, -1.0)], [-1, 0, 1]).tocsc()


def test_ldl_2x2_by_hand():
    f = ldl(sps.csc_matrix([[4.0, 2.0], [2.0, 3.0]]), "natural")
    np.testing.assert_allclose(f.D, [4.0, 2.0])
    np.testing.assert_allclose(f.L().toarray(), [[1, 0], [0.5, 1]])
    assert logdet(f) == pytest.approx(np.log(8.0), rel=1e-15)
    np.testing.assert_allclose(solve(f, [8.0, 7.0]), [1.25, 1.5], rtol=1e-15)


def test_identity_factor():
    f = ldl(sps.eye(5, format="csc"))
    np.testing.assert_array_equal(f.D, np.ones(5))
    assert f.logdet == 0.0
    B = np.arange(10.0).reshape(5, 2)
    np.testing.assert_array_equal(solve(f, B), B)
    assert ldl(sps.diags([2.0, 2.0, 2.0]).tocsc()).logdet == pytest.approx(3 * np.log(2))


def test_indefinite_reports_column_two():
    with pytest.raises(NotPositiveDefiniteError, match="column 2") as info:
        ldl(sps.csc_matrix([[1.0, 2.0], [2.0, 1.0]]), "natural")
    assert info.value.pivot == pytest.approx(-3.0)


def test_amd_diagonal_is_identity():
    np.testing.assert_array_equal(amd_order(sps.eye(3)), [0, 1, 2])


def test_amd_arrow_puts_hub_last_with_zero_fill():
    A = arrow(4)
    perm = amd_order(A)
    assert perm[-1] == 0
    best = min(fill_in(A, list(p)) for p in itertools.permutations(range(4)))
    assert best == 0
    assert fill_in(A, perm) == 0


@pytest.mark.parametrize("m", [2, 5, 17, 60])
def test_amd_tridiagonal_zero_fill(m):
    assert fill_in(tridiag(m), amd_order(tridiag(m))) == 0


def test_amd_deterministic():
    A = random_spd(np.random.default_rng(3), 200)
    np.testing.assert_array_equal(amd_order(A), amd_order(A))


def test_amd_permutation_valid_and_better_than_natural_on_grid():
    k = 20
    T = sps.diags([-1, 2, -1], [-1, 0, 1], shape=(k, k))
    A = (sps.kron(T, sps.eye(k)) + sps.kron(sps.eye(k), T)).tocsc()
    perm = amd_order(A)
    assert np.array_equal(np.sort(perm), np.arange(k * k))
    assert symbolic_factor(A, perm).nnz_l < symbolic_factor(A, "natural").nnz_l


def test_elimination_tree_examples():
    t = elimination_tree(sps.eye(4))
    np.testing.assert_array_equal(t.parent, [-1] * 4)
    np.testing.assert_array_equal(t.col_counts, [1] * 4)
    t = elimination_tree(tridiag(4))
    np.testing.assert_array_equal(t.parent, [1, 2, 3, -1])
    np.testing.assert_array_equal(t.col_counts, [2, 2, 2, 1])
    t = elimination_tree(sps.csc_matrix(np.ones((3, 3)) + 3 * np.eye(3)))
    np.testing.assert_array_equal(t.parent, [1, 2, -1])
    np.testing.assert_array_equal(t.col_counts, [3, 2, 1])
    assert t.height == 3


def test_flop_formula():
    assert ldl_flops([3, 2, 1]) == 11
    assert ldl_flops(np.arange(10, 0, -1)) == 375
    assert ldl_flops(np.ones(7)) == 0
    dense10 = sps.csc_matrix(np.ones((10, 10)) + 10 * np.eye(10))
    assert symbolic_factor(dense10, "natural").flops == 375
    assert symbolic_factor(sps.eye(6), "natural").flops == 0


@pytest.mark.parametrize("m", [10, 50, 200, 500])
def test_reconstruction_and_counts(m):
    rng = np.random.default_rng(m)
    A = random_spd(rng, m, density=min(0.05, 8.0 / m))
    f = ldl(A)
    PAP = permute(A, f.perm)
    err = sps.linalg.norm(reconstruct(f) - PAP) / sps.linalg.norm(PAP)
    assert err < 1e-12
    # realized pattern equals the symbolic one and flops follow from it
    realized = np.diff(f.L().tocsc().indptr)
    np.testing.assert_array_equal(realized, f.symbolic.col_counts)
    assert f.flops == ldl_flops(realized) == f.symbolic.flops
    assert np.all(f.D > 0)


def test_solve_round_trip_multi_rhs():
    rng = np.random.default_rng(5)
    A = random_spd(rng, 50, 0.1)
    X0 = rng.normal(size=(50, 7))
    X = solve(ldl(A), A @ X0)
    assert np.abs(X - X0).max() / np.abs(X0).max() < 1e-10


def test_threaded_solve_matches_serial(monkeypatch):
    rng = np.random.default_rng(6)
    A = random_spd(rng, 80, 0.1)
    f = ldl(A)
    B = rng.normal(size=(80, 9))
    serial = solve(f, B)
    monkeypatch.setenv("REMLKIT_THREADS", "3")
    np.testing.assert_array_equal(solve(f, B), serial)


def test_solve_dimension_mismatch():
    f = ldl(sps.eye(3, format="csc"))
    with pytest.raises(ValueError, match="dimension mismatch"):
        solve(f, np.ones(4))


def test_logdet_matches_dense():
    rng = np.random.default_rng(8)
    A = random_spd(rng, 100, 0.05)
    sign, ref = np.linalg.slogdet(A.toarray())
    assert sign > 0 and abs(ldl(A).logdet - ref) / abs(ref) < 1e-9


def test_inverse_diagonal_matches_dense():
    rng = np.random.default_rng(9)
    A = random_spd(rng, 60, 0.08)
    idx = np.array([0, 7, 33, 59])
    ref = np.diag(np.linalg.inv(A.toarray()))[idx]
    np.testing.assert_allclose(inverse_diagonal(ldl(A), idx), ref, rtol=1e-12)


def test_numeric_factor_reuses_symbolic():
    rng = np.random.default_rng(10)
    A = random_spd(rng, 40, 0.1)
    sym = symbolic_factor(A)
    B = (A + sps.diags(rng.uniform(0, 5, 40))).tocsc()
    f = numeric_factor(B, sym)
    assert abs(f.logdet - np.linalg.slogdet(B.toarray())[1]) < 1e-10
    with pytest.raises(ValueError, match="outside the analysed pattern"):
        numeric_factor(A + sps.csc_matrix(([1.0, 1.0], ([0, 39], [39, 0])), shape=(40, 40)), sym)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), m=st.integers(1, 60))
def test_property_factor_solves(seed, m):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, m, 0.15)
    f = ldl(A)
    b = rng.normal(size=m)
    x = solve(f, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * (np.linalg.norm(b) + 1e-300) * max(1, m)
    assert np.all(f.symbolic.parent[f.symbolic.parent >= 0] > np.flatnonzero(f.symbolic.parent >= 0))


def test_matrix_market_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    A = random_spd(rng, 30, 0.1)
    path = tmp_path / "a.mtx"
    write_symmetric(path, A, comment="test")
    text = path.read_text().splitlines()
    assert text[0] == "%%MatrixMarket matrix coordinate real symmetric"
    B = read_symmetric(path)
    assert abs(B - sps.tril(A)).max() == 0.0
    write_vector(tmp_path / "v.txt", np.array([1 / 3, 2.5]))
    np.testing.assert_array_equal(read_vector(tmp_path / "v.txt"), [1 / 3, 2.5])


def test_factor_stats_schema():
    s = FactorStats.from_counts(3488, 56946, 112618, 8943842)
    assert s.nz_c == pytest.approx(16.3, abs=0.05)
    assert s.rho_c == pytest.approx(9.4, abs=0.05)
    assert s.nz_l == pytest.approx(32.3, abs=0.05)
    assert s.rho_l == pytest.approx(18.5, abs=0.05)
    assert "nnz_l=112618" in s.keyvalue()


def test_threads_env_default():
    from remlkit.sparse.numeric import solve_threads
    assert solve_threads() == int(os.environ.get("REMLKIT_THREADS", "1") or 1)
