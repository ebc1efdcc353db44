"""Sparse and dense linear algebra.

Contents: a tagged CSR operator, conjugate gradients with constant-vector
deflation, a smoothed-aggregation AMG preconditioner for M-matrix graph
Laplacians, bordered (Lagrange multiplier) solves for singular systems,
BiCGStab for the nonsymmetric finite-volume systems, and a rank-checked
dense QR least-squares solve.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CompatibilityError, ConfigurationError, UnisolvencyError

RANK_TOL = 1e-10


@dataclass
class SparseOperator:
    """CSR matrix with structural tags checked on construction."""

    matrix: sp.csr_matrix
    symmetric: bool = False
    laplacian: bool = False
    m_matrix: bool = False

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        n, m = self.matrix.shape
        if n != m:
            raise ValueError("operator must be square")
        A = self.matrix
        scale = abs(A).max() if A.nnz else 1.0
        if self.laplacian:
            rowsum = np.asarray(A.sum(axis=1)).ravel()
            if np.max(np.abs(rowsum), initial=0.0) > 1e-12 * scale:
                raise ValueError("graph Laplacian rows must sum to zero")
        if self.m_matrix:
            off = A - sp.diags(A.diagonal())
            if off.nnz and off.data.max() > 0:
                raise ValueError("M-matrix off-diagonals must be nonpositive")
        if self.symmetric and A.nnz and abs(A - A.T).max() > 1e-12 * scale:
            raise ValueError("operator tagged symmetric is not symmetric")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, x):
        return self.matrix @ x


@dataclass
class SolveReport:
    iterations: int
    residual: float
    seconds: float
    converged: bool = True
    method: str = ""
    history: list = field(default_factory=list, repr=False)


def _as_csr(A):
    return A.matrix if isinstance(A, SparseOperator) else sp.csr_matrix(A)


def graph_laplacian(n: int, edges: np.ndarray, weights=None) -> SparseOperator:
    """Weighted graph Laplacian ``sum_j w_ij (x_i - x_j)``; an M-matrix for w > 0."""
    i, j = edges[:, 0], edges[:, 1]
    w = np.ones(len(i)) if weights is None else np.asarray(weights, dtype=float)
    off = sp.csr_matrix((np.r_[-w, -w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
    deg = -np.asarray(off.sum(axis=1)).ravel()
    L = (off + sp.diags(deg)).tocsr()
    L.sum_duplicates()
    L.sort_indices()
    return SparseOperator(L, symmetric=True, laplacian=True, m_matrix=bool(np.all(w > 0)))


# --- conjugate gradients ----------------------------------------------------

def pcg(A, b, tol: float = 1e-10, max_iter: int = 500, preconditioner=None,
        nullspace: bool = False, x0=None):
    """Preconditioned CG. With ``nullspace=True`` the constant vector is deflated.

    In the deflated case ``b`` must be orthogonal to the constants and the
    returned solution has zero mean. The relative residual is
    ``|b - A x| / |b|``. Non-convergence is reported, not raised.
    """
    t0 = time.perf_counter()
    A = _as_csr(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if nullspace:
        if abs(b.sum()) > 1e-10 * max(np.abs(b).sum(), 1e-300):
            raise CompatibilityError(
                "right-hand side violates the compatibility condition 1^T b = 0 "
                f"(1^T b = {b.sum():.3e})")
        b = b - b.mean()
    if bnorm == 0:
        return np.zeros(n), SolveReport(0, 0.0, time.perf_counter() - t0, True, "pcg")

    def project(v):
        return v - v.mean() if nullspace else v

    M = preconditioner if preconditioner is not None else (lambda r: r)
    x = np.zeros(n) if x0 is None else project(np.asarray(x0, dtype=float).copy())
    r = b - A @ x
    z = project(M(r))
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    it = 0
    while history[-1] > tol and it < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        history.append(np.linalg.norm(r) / bnorm)
        if history[-1] <= tol:
            break
        z = project(M(r))
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    x = project(x)
    res = np.linalg.norm(b - A @ x) / bnorm
    report = SolveReport(it, float(res), time.perf_counter() - t0, bool(res <= tol * 1.0001),
                         "pcg", history)
    return x, report


# --- smoothed aggregation AMG ----------------------------------------------

def _strength(A: sp.csr_matrix, theta: float) -> sp.csr_matrix:
    d = np.abs(A.diagonal())
    C = sp.coo_matrix(A)
    off = C.row != C.col
    r, c, v = C.row[off], C.col[off], C.data[off]
    strong = np.abs(v) >= theta * np.sqrt(d[r] * d[c])
    S = sp.csr_matrix((np.ones(strong.sum()), (r[strong], c[strong])), shape=A.shape)
    S.sort_indices()
    return S


def _aggregate(S: sp.csr_matrix) -> np.ndarray:
    """Greedy three-pass aggregation on the strength graph."""
    n = S.shape[0]
    indptr, indices = S.indptr, S.indices
    agg = -np.ones(n, dtype=np.int64)
    count = 0
    # pass 1: root nodes whose whole strong neighborhood is free
    for i in range(n):
        if agg[i] >= 0:
            continue
        nb = indices[indptr[i]:indptr[i + 1]]
        if np.all(agg[nb] < 0):
            agg[i] = count
            agg[nb] = count
            count += 1
    # pass 2: attach leftovers to a neighboring aggregate
    left = np.flatnonzero(agg < 0)
    snapshot = agg.copy()
    for i in left:
        nb = indices[indptr[i]:indptr[i + 1]]
        owned = snapshot[nb]
        owned = owned[owned >= 0]
        if len(owned):
            agg[i] = owned[0]
    # pass 3: isolated leftovers form their own aggregates
    for i in np.flatnonzero(agg < 0):
        nb = indices[indptr[i]:indptr[i + 1]]
        agg[i] = count
        free = nb[agg[nb] < 0]
        agg[free] = count
        count += 1
    return agg


def _spectral_radius_DinvA(A: sp.csr_matrix, iters: int = 15) -> float:
    dinv = 1.0 / A.diagonal()
    x = np.cos(np.arange(A.shape[0]) * 1.3 + 0.1)
    lam = 1.0
    for _ in range(iters):
        y = dinv * (A @ x)
        lam = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
    return float(lam)


@dataclass
class _Level:
    A: sp.csr_matrix
    dinv: np.ndarray
    omega: float
    P: sp.csr_matrix = None
    R: sp.csr_matrix = None


class AggregationAMG:
    """Smoothed-aggregation V-cycle for symmetric M-matrices.

    One application is a fixed symmetric linear map (equal pre/post damped
    Jacobi sweeps, Galerkin coarse operators, pseudo-inverse coarse solve),
    which is what CG needs.
    """

    def __init__(self, A, theta: float = 0.08, coarse_size: int = 64, max_levels: int = 25,
                 sweeps: int = 1):
        A = _as_csr(A)
        self.sweeps = sweeps
        self.levels: list[_Level] = []
        while True:
            dinv = 1.0 / A.diagonal()
            omega = 4.0 / (3.0 * _spectral_radius_DinvA(A))
            lvl = _Level(A, dinv, omega)
            self.levels.append(lvl)
            if A.shape[0] <= coarse_size or len(self.levels) >= max_levels:
                break
            agg = _aggregate(_strength(A, theta))
            nagg = int(agg.max()) + 1
            if nagg >= A.shape[0]:
                break
            sizes = np.bincount(agg, minlength=nagg).astype(float)
            T = sp.csr_matrix((1.0 / np.sqrt(sizes[agg]), (np.arange(A.shape[0]), agg)),
                              shape=(A.shape[0], nagg))
            P = (T - omega * sp.diags(dinv) @ (A @ T)).tocsr()
            lvl.P, lvl.R = P, P.T.tocsr()
            A = (lvl.R @ A @ P).tocsr()
            A = 0.5 * (A + A.T)
            A = sp.csr_matrix(A)
        self.coarse_inv = np.linalg.pinv(self.levels[-1].A.toarray(), hermitian=True)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def operator_complexity(self) -> float:
        return sum(l.A.nnz for l in self.levels) / self.levels[0].A.nnz

    def _cycle(self, k: int, b: np.ndarray) -> np.ndarray:
        lvl = self.levels[k]
        if k == len(self.levels) - 1:
            return self.coarse_inv @ b
        x = np.zeros_like(b)
        for _ in range(self.sweeps):
            x += lvl.omega * lvl.dinv * (b - lvl.A @ x)
        r = b - lvl.A @ x
        x += lvl.P @ self._cycle(k + 1, lvl.R @ r)
        for _ in range(self.sweeps):
            x += lvl.omega * lvl.dinv * (b - lvl.A @ x)
        return x

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self._cycle(0, np.asarray(r, dtype=float))

    def aslinearoperator(self) -> spla.LinearOperator:
        n = self.levels[0].A.shape[0]
        return spla.LinearOperator((n, n), matvec=self.__call__, dtype=float)


def amg_preconditioner(A, **kwargs) -> AggregationAMG:
    if isinstance(A, SparseOperator) and not A.m_matrix:
        raise ConfigurationError("AMG preconditioner expects an operator tagged as M-matrix")
    return AggregationAMG(A, **kwargs)


# --- bordered solves --------------------------------------------------------

def bordered_solve(A, b, w, nullspace=None, dense_limit: int = 2000):
    """Solve ``[[A, w], [w^T, 0]] [x; lam] = [b; 0]``.

    ``A`` is singular with a one-dimensional (right) nullspace ``nullspace``
    (constants by default); ``w^T x = 0`` fixes the free constant and ``lam``
    absorbs any inconsistency of ``b``. Symmetric systems use MINRES above
    ``dense_limit`` unknowns, nonsymmetric ones a sparse LU.
    """
    t0 = time.perf_counter()
    A = _as_csr(A)
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    z = np.ones(n) if nullspace is None else np.asarray(nullspace, dtype=float)
    if abs(w @ z) <= 1e-12 * np.linalg.norm(w) * np.linalg.norm(z):
        raise CompatibilityError("constraint weights are orthogonal to the nullspace; "
                                 "the bordered system is singular")
    K = sp.bmat([[A, sp.csr_matrix(w[:, None])], [sp.csr_matrix(w[None, :]), None]]).tocsc()
    rhs = np.r_[b, 0.0]
    symmetric = abs(A - A.T).max() <= 1e-12 * max(abs(A).max(), 1e-300) if A.nnz else True
    if n + 1 <= dense_limit:
        sol = sla.solve(K.toarray(), rhs, assume_a="sym" if symmetric else "gen")
        method, iters = "dense", 0
    elif symmetric:
        sol, info = spla.minres(K, rhs, rtol=1e-13, maxiter=20 * n)
        method, iters = "minres", info
    else:
        sol = spla.splu(K).solve(rhs)
        method, iters = "splu", 0
    x, lam = sol[:n], float(sol[n])
    res = np.linalg.norm(K @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return x, lam, SolveReport(int(iters), float(res), time.perf_counter() - t0, True, method)


# --- nonsymmetric iterative solve ------------------------------------------

def bicgstab_solve(A, b, tol: float = 1e-8, max_iter: int = 5000, x0=None, restart: int = 500):
    """Jacobi-preconditioned BiCGStab; non-convergence is reported, not raised.

    The iteration is restarted every ``restart`` steps from its current
    iterate, which recovers from breakdowns; the best iterate is returned.
    """
    t0 = time.perf_counter()
    A = _as_csr(A)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, 0.0, True, "bicgstab")
    d = A.diagonal()
    if np.any(d == 0):
        d = np.where(d == 0, 1.0, d)
    M = spla.LinearOperator(A.shape, matvec=lambda r: r / d, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    def residual(x):
        r = np.linalg.norm(b - A @ x) / bnorm
        return r if np.isfinite(r) else np.inf

    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float).copy()
    best, best_res = x, residual(x)
    chunk = max(1, restart or max_iter)
    while best_res > tol and count[0] < max_iter:
        before = count[0]
        with np.errstate(all="ignore"):
            x, _ = spla.bicgstab(A, b, x0=x, rtol=tol, atol=0.0,
                                 maxiter=min(chunk, max_iter - count[0]), M=M, callback=cb)
        res = residual(x)
        if res < best_res:
            best, best_res = x, res
        if count[0] == before or not np.isfinite(res):
            break
    ok = bool(best_res <= 10 * tol)
    return best, SolveReport(count[0], float(best_res), time.perf_counter() - t0, ok, "bicgstab")


# --- dense least squares ----------------------------------------------------

def dense_qr_least_squares(M, rhs, weights=None, rank_tol: float = RANK_TOL):
    """Minimize ``|W^{1/2}(M x - rhs)|`` by column-pivoted QR.

    Raises :class:`UnisolvencyError` if some pivot falls below
    ``rank_tol * |R_00|``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        M = sw[:, None] * M
        rhs = sw.reshape((-1,) + (1,) * (rhs.ndim - 1)) * rhs
    m, n = M.shape
    if m < n:
        raise UnisolvencyError(f"{m} samples cannot determine {n} coefficients")
    Q, R, perm = sla.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0 or np.any(diag < rank_tol * diag[0]):
        raise UnisolvencyError("least-squares matrix is rank deficient")
    y = sla.solve_triangular(R, Q.T @ rhs)
    x = np.empty_like(y)
    x[perm] = y
    return x
