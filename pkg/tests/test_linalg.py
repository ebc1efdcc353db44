import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mimetic_cloud.errors import CompatibilityError, UnisolvencyError
from mimetic_cloud.linalg import (SparseOperator, amg_preconditioner, bicgstab_solve, bordered_solve,
                                  dense_qr_least_squares, graph_laplacian, pcg)


def path_laplacian(n):
    return graph_laplacian(n, np.column_stack([np.arange(n - 1), np.arange(1, n)]))


def lattice_laplacian(m):
    idx = np.arange(m * m).reshape(m, m)
    edges = np.vstack([np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()]),
                       np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])])
    return graph_laplacian(m * m, edges)


def test_identity_one_iteration(rng):
    b = rng.random(10)
    x, rep = pcg(sp.identity(10, format="csr"), b)
    np.testing.assert_allclose(x, b)
    assert rep.iterations == 1 and rep.converged


def test_path_graph_against_pseudoinverse():
    L = path_laplacian(3)
    b = np.array([1.0, 0.0, -1.0])
    x, rep = pcg(L, b, nullspace=True)
    oracle = np.linalg.pinv(L.matrix.toarray()) @ b
    np.testing.assert_allclose(x, oracle, atol=1e-12)
    np.testing.assert_allclose(x, [1, 0, -1], atol=1e-12)
    assert abs(x.mean()) < 1e-12


def test_incompatible_rhs():
    with pytest.raises(CompatibilityError, match="1\\^T b"):
        pcg(path_laplacian(3), np.array([1.0, 0.0, 0.0]), nullspace=True)


def test_laplacian_tags():
    L = lattice_laplacian(5)
    assert L.laplacian and L.m_matrix and L.symmetric
    with pytest.raises(ValueError):
        SparseOperator(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), laplacian=True)
    with pytest.raises(ValueError):
        SparseOperator(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])), m_matrix=True)


def test_amg_path_iterations(rng):
    L = path_laplacian(256)
    b = rng.standard_normal(256)
    b -= b.mean()
    x, rep = pcg(L, b, tol=1e-10, preconditioner=amg_preconditioner(L), nullspace=True)
    assert rep.converged and rep.iterations <= 30


def test_amg_lattice_iterations_bounded(rng):
    its = []
    for m in (16, 32, 64):
        L = lattice_laplacian(m)
        b = rng.standard_normal(m * m)
        b -= b.mean()
        _, rep = pcg(L, b, tol=1e-10, preconditioner=amg_preconditioner(L), nullspace=True)
        assert rep.converged
        its.append(rep.iterations)
    assert its[-1] < 2 * its[0]


def test_amg_symmetric(rng):
    L = lattice_laplacian(20)
    M = amg_preconditioner(L)
    x, y = rng.standard_normal((2, 400))
    assert M(x) @ y == pytest.approx(x @ M(y), rel=1e-12)
    x -= x.mean()
    assert x @ M(x) > 0


def test_pcg_energy_norm_monotone(rng):
    L = lattice_laplacian(12)
    A = L.matrix.toarray()
    b = rng.standard_normal(144)
    b -= b.mean()
    exact = np.linalg.pinv(A) @ b
    errs = []
    for k in range(1, 15):
        x, _ = pcg(L, b, tol=1e-30, max_iter=k, nullspace=True)
        e = x - exact
        errs.append(e @ A @ e)
    assert all(b2 <= b1 * (1 + 1e-10) + 1e-24 for b1, b2 in zip(errs, errs[1:]))


def test_bordered_agrees_with_deflated_pcg():
    L = path_laplacian(3)
    b = np.array([1.0, 0.0, -1.0])
    x, lam, _ = bordered_solve(L, b, np.ones(3))
    xp, _ = pcg(L, b, nullspace=True)
    np.testing.assert_allclose(x, xp, atol=1e-12)
    assert abs(lam) < 1e-12


def test_bordered_zero_rhs():
    x, lam, _ = bordered_solve(path_laplacian(4), np.zeros(4), np.ones(4))
    np.testing.assert_array_equal(x, 0)
    assert lam == 0


def test_bordered_orthogonal_weights():
    with pytest.raises(CompatibilityError):
        bordered_solve(path_laplacian(2), np.zeros(2), np.array([1.0, -1.0]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), large=st.booleans())
def test_bordered_constraint_residual(seed, large):
    rng = np.random.default_rng(seed)
    m = 50 if large else 10
    L = lattice_laplacian(m)
    b = rng.standard_normal(m * m)
    b -= b.mean()
    w = rng.random(m * m) + 0.1
    x, _, _ = bordered_solve(L, b, w)
    assert abs(w @ x) <= 1e-10 * np.linalg.norm(w) * max(np.linalg.norm(x), 1)
    assert np.linalg.norm(L @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_bicgstab_nonsymmetric(rng):
    n = 200
    A = sp.diags([-1.3, 2.5, -0.7], [-1, 0, 1], shape=(n, n), format="csr")
    b = rng.random(n)
    x, rep = bicgstab_solve(A, b, tol=1e-10)
    assert rep.converged
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_bicgstab_reports_failure():
    A = sp.diags([1.0, -1.0], [0, 1], shape=(300, 300), format="csr") * 1.0
    A = A + sp.diags([1e-12], [0], shape=(300, 300))
    _, rep = bicgstab_solve(A - sp.identity(300), np.ones(300), max_iter=5)
    assert not rep.converged


def test_dense_qr_examples(rng):
    M = rng.random((4, 4)) + 4 * np.eye(4)
    x = rng.random(4)
    np.testing.assert_allclose(dense_qr_least_squares(M, M @ x), x, atol=1e-12)
    t = np.linspace(0, 1, 5)
    V = np.column_stack([np.ones(5), t])
    np.testing.assert_allclose(dense_qr_least_squares(V, 2 - 3 * t), [2, -3], atol=1e-12)
    A = rng.random((20, 6))
    r = rng.random(20)
    np.testing.assert_allclose(dense_qr_least_squares(A, r), np.linalg.solve(A.T @ A, A.T @ r), atol=1e-8)
    with pytest.raises(UnisolvencyError):
        dense_qr_least_squares(np.column_stack([t, 2 * t]), t)
