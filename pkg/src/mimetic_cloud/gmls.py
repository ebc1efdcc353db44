"""Generalized moving least squares on point clouds.

Fits are computed in shifted and scaled local coordinates
``(x - center) / scale`` for conditioning, then mapped to the global linear
basis ``{1, X, Y}`` with ``X = x - origin``, which is the basis the face
moments are expressed in. Vector-valued P1 coefficients are ordered
``s = k * (d + 1) + r`` (component ``k``, scalar basis function ``r``).

Batched routines return :class:`Stencil` objects: the coefficients are
linear in the samples, so each point stores a small dense matrix acting on
the samples of its neighborhood.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .cloud import radius_neighbors
from .errors import UnisolvencyError
from .linalg import RANK_TOL, dense_qr_least_squares

log = logging.getLogger(__name__)

DIM = 2


class BasisKind(enum.Enum):
    SCALAR_P1 = "scalar_p1"
    SCALAR_P2 = "scalar_p2"
    VECTOR_P1 = "vector_p1"


def monomial_exponents(degree: int, dim: int = DIM) -> list[tuple]:
    """Exponents ordered by total degree: 1, x, y, x^2, xy, y^2, ..."""
    out = []
    for deg in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            e = [0] * dim
            for k in combo:
                e[k] += 1
            out.append(tuple(e))
    return out


def _monomials(rel: np.ndarray, exps) -> np.ndarray:
    cols = [np.prod(rel ** np.asarray(e), axis=-1) for e in exps]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class Kernel:
    """Compactly supported weight ``(1 - rho / support)^4`` for ``rho < support``."""

    support: float
    exponent: int = 4

    def __call__(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return np.where(rho < self.support, np.clip(1.0 - rho / self.support, 0.0, None) ** self.exponent, 0.0)


@dataclass(frozen=True)
class PolyBasis:
    kind: BasisKind
    center: np.ndarray
    scale: float

    @property
    def scalar_degree(self) -> int:
        return 2 if self.kind is BasisKind.SCALAR_P2 else 1

    @property
    def exponents(self):
        return monomial_exponents(self.scalar_degree)

    @property
    def dim(self) -> int:
        n = len(self.exponents)
        return DIM * n if self.kind is BasisKind.VECTOR_P1 else n

    def evaluate(self, points) -> np.ndarray:
        """Scalar kinds: ``(n, q)``. Vector kind: ``(n, d, d*(d+1))`` with phi_s = e_k phi_r."""
        rel = (np.atleast_2d(points) - np.asarray(self.center)) / self.scale
        scalar = _monomials(rel, self.exponents)
        if self.kind is not BasisKind.VECTOR_P1:
            return scalar
        n, m = scalar.shape
        out = np.zeros((n, DIM, DIM * m))
        for k in range(DIM):
            out[:, k, k * m:(k + 1) * m] = scalar
        return out


def p1_to_global(center, scale: float, origin) -> np.ndarray:
    """Matrix mapping local P1 coefficients at ``center`` to the global ``{1, X, Y}`` basis.

    Works on stacked centers: ``center`` of shape ``(..., d)`` gives ``(..., 3, 3)``.
    """
    c = (np.asarray(center, dtype=float) - np.asarray(origin, dtype=float)) / scale
    shape = c.shape[:-1]
    T = np.zeros(shape + (DIM + 1, DIM + 1))
    T[..., 0, 0] = 1.0
    for k in range(DIM):
        T[..., 0, k + 1] = -c[..., k]
        T[..., k + 1, k + 1] = 1.0 / scale
    return T


def gradient_map(scale: float = 1.0) -> np.ndarray:
    """Exact linear map from scalar P2 coefficients to vector P1 coefficients of the gradient.

    Both sides live in the same local coordinates; the ``1/scale`` factor
    converts derivatives in scaled coordinates back to physical ones.
    """
    p2 = monomial_exponents(2)
    p1 = monomial_exponents(1)
    G = np.zeros((DIM * len(p1), len(p2)))
    for q, e in enumerate(p2):
        for k in range(DIM):
            if e[k] == 0:
                continue
            de = list(e)
            de[k] -= 1
            G[k * len(p1) + p1.index(tuple(de)), q] += e[k] / scale
    return G


@dataclass
class GmlsCoefficients:
    anchor: np.ndarray
    basis: PolyBasis
    coeffs: np.ndarray
    neighbor_count: int

    def global_p1(self, origin=(0.0, 0.0)) -> np.ndarray:
        """Coefficients in the global ``{1, X, Y}`` (per component) basis."""
        if self.basis.kind is BasisKind.SCALAR_P2:
            raise ValueError("P2 coefficients have no P1 representation")
        T = p1_to_global(self.anchor, self.basis.scale, origin)
        c = self.coeffs.reshape(-1, DIM + 1)
        return (c @ T.T).ravel()


def solve_gmls(samples, basis: PolyBasis, kernel: Kernel, anchor, neighbor_points) -> GmlsCoefficients:
    """Weighted least-squares fit of ``samples`` at ``neighbor_points``.

    For the vector basis ``samples`` is ``(n, d)`` and each component is
    fitted independently against the shared scalar P1 factorization.
    """
    pts = np.atleast_2d(np.asarray(neighbor_points, dtype=float))
    w = kernel(np.linalg.norm(pts - np.asarray(anchor), axis=1))
    keep = w > 0
    if basis.kind is BasisKind.VECTOR_P1:
        scalar = PolyBasis(BasisKind.SCALAR_P1, basis.center, basis.scale)
        B = scalar.evaluate(pts[keep])
        vals = np.asarray(samples, dtype=float)[keep]
        c = dense_qr_least_squares(B, vals, weights=w[keep])  # (3, d)
        coeffs = c.T.ravel()
    else:
        B = basis.evaluate(pts[keep])
        coeffs = dense_qr_least_squares(B, np.asarray(samples, dtype=float)[keep], weights=w[keep])
    return GmlsCoefficients(np.asarray(anchor, dtype=float), basis, coeffs, int(keep.sum()))


# --- batched machinery -----------------------------------------------------

@dataclass
class Neighborhoods:
    """Padded neighbor lists: ``index[a, m]`` is valid where ``mask[a, m]``."""

    index: np.ndarray
    dist: np.ndarray
    mask: np.ndarray

    @property
    def count(self) -> np.ndarray:
        return self.mask.sum(axis=1)


def neighborhoods(anchors, points, radius: float, min_width: int = 1) -> Neighborhoods:
    q, j, d = radius_neighbors(anchors, points, radius)
    n = len(np.atleast_2d(anchors))
    counts = np.bincount(q, minlength=n)
    K = max(int(counts.max(initial=0)), min_width)
    starts = np.cumsum(counts) - counts
    slot = np.arange(len(q)) - starts[q]
    index = np.zeros((n, K), dtype=np.int64)
    dist = np.full((n, K), np.inf)
    mask = np.zeros((n, K), dtype=bool)
    index[q, slot] = j
    dist[q, slot] = d
    mask[q, slot] = True
    # padded slots point at the anchor's first neighbor (or 0) with zero weight
    index[~mask] = np.where(counts > 0, index[:, 0], 0).repeat(K).reshape(n, K)[~mask]
    return Neighborhoods(index, dist, mask)


@dataclass
class Stencil:
    """Per-anchor linear maps: ``coeffs[a] = weights[a] @ samples[index[a]]``."""

    index: np.ndarray
    weights: np.ndarray
    ok: np.ndarray

    def apply(self, samples) -> np.ndarray:
        s = np.asarray(samples, dtype=float)
        return np.einsum("aqk,ak->aq", self.weights, s[self.index])

    def scale_samples(self, factors) -> "Stencil":
        """Stencil acting on ``factors * samples`` expressed in terms of ``samples``."""
        f = np.asarray(factors, dtype=float)[self.index]
        return Stencil(self.index, self.weights * f[:, None, :], self.ok)


def batched_fit(anchors, points, nbhd: Neighborhoods, kernel: Kernel, degree: int,
                scale: float, row_mask=None, rank_tol: float = RANK_TOL):
    """Local-coordinate least-squares maps for every anchor at once.

    Returns ``(weights, ok)`` with weights of shape ``(n, q, K)``. ``ok`` flags
    anchors whose weighted basis matrix passes the rank test.
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    exps = monomial_exponents(degree)
    q = len(exps)
    mask = nbhd.mask if row_mask is None else (nbhd.mask & row_mask)
    n, K = mask.shape
    rel = (points[nbhd.index] - anchors[:, None, :]) / scale
    B = _monomials(rel, exps)
    w = np.where(mask, kernel(np.where(mask, nbhd.dist, 0.0)), 0.0)
    sw = np.sqrt(w)
    A = sw[..., None] * B
    if K < q:
        A = np.concatenate([A, np.zeros((n, q - K, q))], axis=1)
        sw = np.concatenate([sw, np.zeros((n, q - K))], axis=1)
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    ok = (mask.sum(axis=1) >= q) & (diag.min(axis=1) > rank_tol * np.maximum(diag.max(axis=1), 1e-300))
    Rs = R.copy()
    Rs[~ok] = np.eye(q)
    weights = np.linalg.solve(Rs, np.swapaxes(Q, 1, 2)) * sw[:, None, :]
    weights[~ok] = 0.0
    return weights[:, :, :K], ok


def p1_stencil(points, nbhd: Neighborhoods, kernel: Kernel, origin, anchors=None,
               row_mask=None) -> Stencil:
    """Scalar P1 fits mapped to the global basis; ``weights`` is ``(n, 3, K)``."""
    anchors = points if anchors is None else anchors
    scale = kernel.support
    W, ok = batched_fit(anchors, points, nbhd, kernel, 1, scale, row_mask)
    T = p1_to_global(anchors, scale, origin)
    return Stencil(nbhd.index, np.einsum("aij,ajk->aik", T, W), ok)


def vector_stencil(scalar: Stencil, component_factors) -> Stencil:
    """Stencil mapping a scalar ``u`` to VectorP1 coefficients of ``factors * u``.

    ``component_factors`` has shape ``(p, d)``; the advective flux uses
    ``-a`` here.
    """
    f = np.asarray(component_factors, dtype=float)[scalar.index]  # (n, K, d)
    blocks = [scalar.weights * f[:, None, :, k] for k in range(DIM)]
    return Stencil(scalar.index, np.concatenate(blocks, axis=1), scalar.ok)


def nodal_vector_coefficients(field, stencil: Stencil) -> np.ndarray:
    """Per-point VectorP1 coefficients ``(p, d*(d+1))`` of a sampled vector field."""
    v = np.asarray(getattr(field, "values", field), dtype=float)
    if not np.all(stencil.ok):
        bad = np.flatnonzero(~stencil.ok)
        raise UnisolvencyError(f"{len(bad)} neighborhoods are not P1-unisolvent", bad)
    return np.concatenate([stencil.apply(v[:, k]) for k in range(DIM)], axis=1)


def gradient_stencil(points, nbhd: Neighborhoods, kernel: Kernel, origin) -> Stencil:
    """Derived nodal coefficients: P2 fit of ``u`` then its exact gradient, global basis."""
    scale = kernel.support
    W, ok = batched_fit(points, points, nbhd, kernel, 2, scale)
    G = gradient_map(scale)  # (6, 6) local
    local = np.einsum("sq,aqk->ask", G, W)
    T = p1_to_global(points, scale, origin)
    m = DIM + 1
    blocks = [np.einsum("aij,ajk->aik", T, local[:, k * m:(k + 1) * m]) for k in range(DIM)]
    return Stencil(nbhd.index, np.concatenate(blocks, axis=1), ok)


def upwind_mask(points, nbhd: Neighborhoods, velocity) -> np.ndarray:
    """Rows of each neighborhood that are strictly upwind of the anchor, plus the anchor."""
    a = np.asarray(velocity, dtype=float)
    rel = points[nbhd.index] - points[:, None, :]
    upwind = np.einsum("ad,akd->ak", a, rel) < 0
    self_row = nbhd.index == np.arange(len(points))[:, None]
    return nbhd.mask & (upwind | self_row)


def upwind_p1_stencil(points, nbhd: Neighborhoods, kernel: Kernel, origin, velocity):
    """P1 stencils restricted to upwind rows, falling back to the full neighborhood.

    Returns ``(stencil, fallback)`` where ``fallback`` flags anchors whose
    upwind set was not unisolvent.
    """
    up = upwind_mask(points, nbhd, velocity)
    restricted = p1_stencil(points, nbhd, kernel, origin, row_mask=up)
    fallback = ~restricted.ok
    if np.any(fallback):
        full = p1_stencil(points, nbhd, kernel, origin)
        restricted.weights[fallback] = full.weights[fallback]
        restricted.ok = np.where(fallback, full.ok, restricted.ok)
        log.debug("upwind fit fell back to the full neighborhood at %d points", int(fallback.sum()))
    return restricted, fallback


def blend_to_faces(nodal, edges, theta) -> np.ndarray:
    """Field moments ``theta_ij c_i + (1 - theta_ij) c_j`` for every edge."""
    c = np.asarray(nodal, dtype=float)
    th = np.broadcast_to(np.asarray(theta, dtype=float), (len(edges),))[:, None]
    return th * c[edges[:, 0]] + (1.0 - th) * c[edges[:, 1]]
