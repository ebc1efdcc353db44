"""The meshfree mimetic divergence operator and its conservation checks.

``(DIV u)_i = (1 / mu_i) [ sum_j c_ij . mu_ij + sum_{Dirichlet pieces} c_b . mu_b
+ sum_{flux pieces} int u . n dS ]``

Field moments ``c_ij`` are VectorP1 coefficient vectors in the global shifted
basis, one per stored edge ``i < j``; the face moments ``mu_ij`` are stored on
the same edges and oriented from ``i`` to ``j``. Boundary "pieces" are the
parts of the domain boundary owned by a cell: one segment per boundary
particle in the meshless instance, one or two clipped dual-cell sides per
boundary node in the Cartesian instance.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cloud import CloudGraph, PointCloud, build_graph
from .errors import UnisolvencyError
from .geometry import BcTag, Domain
from .gmls import (DIM, Kernel, Neighborhoods, Stencil, blend_to_faces, gradient_stencil,
                   neighborhoods, nodal_vector_coefficients, p1_stencil)
from .metric import (MeshlessMetric, build_meshless_metric, default_origin,
                     cartesian_oracle_metric)

log = logging.getLogger(__name__)

GRAPH_GROWTH = 1.25
MAX_RETRIES = 4


class Instance(enum.Enum):
    MESHLESS = "meshless"
    CARTESIAN_ORACLE = "cartesian_oracle"


@dataclass
class MmdOperator:
    """Metric data plus the data-transfer map of one MMD instance."""

    instance: Instance
    points: np.ndarray
    volumes: np.ndarray
    edges: np.ndarray
    edge_moments: np.ndarray
    piece_owner: np.ndarray
    piece_centroids: np.ndarray
    piece_normals: np.ndarray
    piece_lengths: np.ndarray
    piece_moments: np.ndarray
    interior: np.ndarray
    origin: np.ndarray
    dirichlet_pieces: np.ndarray = None
    transfer: Callable = field(default=None, repr=False)

    def __post_init__(self):
        if self.dirichlet_pieces is None:
            self.dirichlet_pieces = np.zeros(len(self.piece_owner), dtype=bool)
        if self.edge_moments.shape != (len(self.edges), DIM * (DIM + 1)):
            raise ValueError("edge moments do not match the edge list")
        if self.piece_moments.shape != (len(self.piece_owner), DIM * (DIM + 1)):
            raise ValueError("boundary moments do not match the boundary pieces")

    @property
    def n_points(self) -> int:
        return len(self.points)

    def face_moment(self, i: int, j: int) -> np.ndarray:
        """``mu_ij`` oriented from ``i`` to ``j``; the reverse orientation is the exact negation."""
        lo, hi = min(i, j), max(i, j)
        hit = np.flatnonzero((self.edges[:, 0] == lo) & (self.edges[:, 1] == hi))
        if len(hit) == 0:
            raise KeyError(f"no face between {i} and {j}")
        m = self.edge_moments[hit[0]]
        return m.copy() if i < j else -m

    def face_sums(self, edge_coeffs, piece_coeffs=None, neumann_flux=None) -> np.ndarray:
        """``mu_i (DIV u)_i``: the un-normalized boundary contraction of every cell."""
        c = np.asarray(edge_coeffs, dtype=float)
        if c.shape != self.edge_moments.shape:
            raise ValueError(f"field moments have shape {c.shape}, expected {self.edge_moments.shape}")
        t = np.einsum("es,es->e", c, self.edge_moments)
        p = self.n_points
        out = np.bincount(self.edges[:, 0], t, p) - np.bincount(self.edges[:, 1], t, p)
        out += self._boundary_terms(piece_coeffs, neumann_flux)
        return out

    def _boundary_terms(self, piece_coeffs, neumann_flux) -> np.ndarray:
        p = self.n_points
        out = np.zeros(p)
        d = self.dirichlet_pieces
        if np.any(d):
            if piece_coeffs is None:
                raise ValueError("Dirichlet pieces need boundary field moments")
            pc = np.asarray(piece_coeffs, dtype=float)
            if pc.shape != self.piece_moments.shape:
                raise ValueError("boundary field moments do not match the boundary pieces")
            vals = np.einsum("bs,bs->b", pc[d], self.piece_moments[d])
            out += np.bincount(self.piece_owner[d], vals, p)
        if np.any(~d):
            if neumann_flux is None:
                raise ValueError("flux pieces need Neumann data")
            nf = np.asarray(neumann_flux, dtype=float)
            if nf.shape != (len(self.piece_owner),):
                raise ValueError("Neumann data must hold one value per boundary piece")
            out += np.bincount(self.piece_owner[~d], nf[~d], p)
        return out

    def apply_div(self, edge_coeffs, piece_coeffs=None, neumann_flux=None) -> np.ndarray:
        return self.face_sums(edge_coeffs, piece_coeffs, neumann_flux) / self.volumes

    def neumann_flux(self, u: Callable) -> np.ndarray:
        """Midpoint-rule ``int_piece u . n dS`` for every boundary piece."""
        v = np.asarray(u(self.piece_centroids), dtype=float)
        return np.einsum("bk,bk->b", v, self.piece_normals) * self.piece_lengths

    def divergence(self, u: Callable) -> np.ndarray:
        """Sample ``u`` at the points, transfer, and apply DIV with exact-geometry flux data."""
        edge_c, piece_c = self.transfer(np.asarray(u(self.points), dtype=float))
        return self.apply_div(edge_c, piece_c, self.neumann_flux(u))


# --- conservation -----------------------------------------------------------

@dataclass
class ConservationReport:
    residual: float
    scale: float
    global_residual: float = float("nan")
    global_scale: float = float("nan")

    @property
    def relative(self) -> float:
        return abs(self.residual) / max(self.scale, 1e-300)

    @property
    def global_relative(self) -> float:
        return abs(self.global_residual) / max(self.global_scale, 1e-300)


def local_conservation_check(op: MmdOperator, edge_coeffs, subset, piece_coeffs=None,
                             neumann_flux=None) -> ConservationReport:
    """Compare ``sum_{i in C} mu_i DIV_i`` with the flux through the boundary of ``C``.

    The right-hand side is rebuilt from the edges cut by ``C`` and the
    boundary pieces owned by ``C``; interior faces must cancel pairwise.
    """
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if len(subset) == 0:
        raise ValueError("cell subset is empty")
    inside = np.zeros(op.n_points, dtype=bool)
    inside[subset] = True
    div = op.apply_div(edge_coeffs, piece_coeffs, neumann_flux)
    lhs_terms = op.volumes[subset] * div[subset]
    lhs = float(np.sum(lhs_terms))

    c = np.asarray(edge_coeffs, dtype=float)
    t = np.einsum("es,es->e", c, op.edge_moments)
    a, b = inside[op.edges[:, 0]], inside[op.edges[:, 1]]
    rhs_terms = [t[a & ~b], -t[~a & b]]
    owned = inside[op.piece_owner]
    bterm = np.zeros(len(op.piece_owner))
    d = op.dirichlet_pieces
    if np.any(d):
        bterm[d] = np.einsum("bs,bs->b", np.asarray(piece_coeffs)[d], op.piece_moments[d])
    if np.any(~d):
        bterm[~d] = np.asarray(neumann_flux)[~d]
    rhs_terms.append(bterm[owned])
    rhs = float(np.sum(np.concatenate(rhs_terms)))
    # every term that enters either side, interior faces counted twice
    scale = float(np.sum(np.abs(lhs_terms)) + np.sum(np.abs(t[a | b])) + np.sum(np.abs(bterm[owned])))
    g = global_conservation_check(op, edge_coeffs, piece_coeffs, neumann_flux)
    return ConservationReport(lhs - rhs, scale, g.global_residual, g.global_scale)


def global_conservation_check(op: MmdOperator, edge_coeffs, piece_coeffs=None,
                              neumann_flux=None) -> ConservationReport:
    """``sum_i mu_i DIV_i`` minus the total boundary flux."""
    div = op.apply_div(edge_coeffs, piece_coeffs, neumann_flux)
    terms = op.volumes * div
    bterm = op._boundary_terms(piece_coeffs, neumann_flux)
    t = np.einsum("es,es->e", np.asarray(edge_coeffs, dtype=float), op.edge_moments)
    res = float(terms.sum() - bterm.sum())
    scale = float(np.abs(terms).sum() + np.abs(bterm).sum() + 2 * np.abs(t).sum())
    return ConservationReport(res, scale, res, scale)


# --- truncation error -------------------------------------------------------

@dataclass
class TruncationError:
    """Error of ``DIV u`` against the analytic divergence.

    ``l2`` is the root sum of squared errors divided by the root sum of
    squared exact values, over the selected points; this is the normalization
    under which the reference truncation values are reproduced. ``l2_raw`` is
    the un-normalized root sum of squares and ``l2_weighted`` uses the cell
    volumes as quadrature weights.
    """

    l2: float
    max: float
    l2_raw: float
    l2_weighted: float
    n: int

    def __iter__(self):
        yield self.l2
        yield self.max


def relative_l2(err, exact) -> float:
    return float(np.linalg.norm(err) / max(np.linalg.norm(exact), 1e-300))


def truncation_error(op: MmdOperator, u: Callable, div_u: Callable, points: str = "all") -> TruncationError:
    """Compare ``DIV u`` with ``div_u`` at all cells (``points="all"``) or interior ones."""
    if points not in ("all", "interior"):
        raise ValueError("points must be 'all' or 'interior'")
    approx = op.divergence(u)
    m = np.ones(op.n_points, dtype=bool) if points == "all" else op.interior
    exact = np.asarray(div_u(op.points[m]), dtype=float)
    err = approx[m] - exact
    return TruncationError(
        l2=relative_l2(err, exact),
        max=float(np.max(np.abs(err))),
        l2_raw=float(np.sqrt(np.sum(err ** 2))),
        l2_weighted=float(np.sqrt(np.sum(op.volumes[m] * err ** 2))),
        n=int(m.sum()),
    )


# --- meshless instance ------------------------------------------------------

@dataclass
class MeshlessContext:
    """Everything the meshless instance and the FV scheme share."""

    cloud: PointCloud
    domain: Domain
    graph: CloudGraph
    kernel: Kernel
    nbhd: Neighborhoods
    p1: Stencil
    metric: MeshlessMetric
    graph_radius: float
    grad: Stencil = None

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def origin(self) -> np.ndarray:
        return self.metric.origin


def _dirichlet_mask(segments) -> np.ndarray:
    return np.array([s.bc_tag is BcTag.DIRICHLET for s in segments], dtype=bool)


def build_meshless_context(cloud: PointCloud, domain: Domain, graph_factor: float = 2.5,
                           kernel_factor: float = 1.0, volume_scheme="multiresolution",
                           need_gradient: bool = False, tol: float = 1e-10,
                           max_retries: int = MAX_RETRIES) -> MeshlessContext:
    """Graph, GMLS stencils and metric; grows the graph radius on unisolvency failure."""
    pts = cloud.points
    radius = graph_factor * cloud.h_target
    for attempt in range(max_retries + 1):
        graph = build_graph(pts, radius)
        kernel = Kernel(kernel_factor * radius)
        nbhd = neighborhoods(pts, pts, kernel.support, min_width=6)
        origin_guess = default_origin(pts, domain.diameter)
        p1 = p1_stencil(pts, nbhd, kernel, origin_guess)
        grad = gradient_stencil(pts, nbhd, kernel, origin_guess) if need_gradient else None
        bad = ~p1.ok if grad is None else ~(p1.ok & grad.ok)
        if not np.any(bad):
            break
        if attempt == max_retries:
            raise UnisolvencyError(
                f"{int(bad.sum())} neighborhoods stay unisolvent-deficient after {max_retries} "
                f"radius increases (radius {radius:g})", np.flatnonzero(bad))
        log.warning("%d neighborhoods not unisolvent at radius %g; growing by %.2f",
                    int(bad.sum()), radius, GRAPH_GROWTH)
        radius *= GRAPH_GROWTH
    metric = build_meshless_metric(cloud, graph, kernel, domain.measure, domain.diameter,
                                   volume_scheme=volume_scheme, tol=tol)
    return MeshlessContext(cloud, domain, graph, kernel, nbhd, p1, metric, radius, grad)


def meshless_operator(ctx: MeshlessContext, theta: float = 0.5) -> MmdOperator:
    cloud = ctx.cloud
    c, n, m = cloud.segment_data()
    edges = ctx.graph.edges

    def transfer(samples):
        nodal = nodal_vector_coefficients(samples, ctx.p1)
        return blend_to_faces(nodal, edges, theta), nodal[cloud.n_interior:]

    return MmdOperator(
        instance=Instance.MESHLESS, points=cloud.points, volumes=ctx.metric.volumes.mu,
        edges=edges, edge_moments=ctx.metric.edge_moments,
        piece_owner=cloud.boundary_indices, piece_centroids=c, piece_normals=n,
        piece_lengths=m, piece_moments=ctx.metric.boundary_moments,
        interior=~cloud.is_boundary, origin=ctx.metric.origin,
        dirichlet_pieces=_dirichlet_mask(cloud.segments), transfer=transfer)


def build_meshless_operator(cloud: PointCloud, domain: Domain, theta: float = 0.5, **kwargs):
    """Return ``(operator, context)`` for the meshless instance."""
    ctx = build_meshless_context(cloud, domain, **kwargs)
    return meshless_operator(ctx, theta), ctx


# --- Cartesian reference instance -------------------------------------------

def cartesian_operator(N: int, kernel_factor: float = 2.5, dirichlet: bool = False) -> MmdOperator:
    """Mesh-based instance on the unit square: exact face integrals, GMLS at face centroids."""
    origin = np.zeros(2)
    mesh, face_m, piece_m = cartesian_oracle_metric(N, origin)
    kernel = Kernel(kernel_factor * mesh.h)
    pts = mesh.points

    def face_stencil(anchors):
        nb = neighborhoods(anchors, pts, kernel.support, min_width=3)
        st = p1_stencil(pts, nb, kernel, origin, anchors=anchors)
        if not np.all(st.ok):
            raise UnisolvencyError("face neighborhoods are not P1-unisolvent", np.flatnonzero(~st.ok))
        return st

    fs = face_stencil(mesh.face_centroids)
    ps = face_stencil(mesh.piece_centroids)

    def transfer(samples):
        v = np.asarray(samples, dtype=float)
        return (np.concatenate([fs.apply(v[:, k]) for k in range(DIM)], axis=1),
                np.concatenate([ps.apply(v[:, k]) for k in range(DIM)], axis=1))

    n_pieces = len(mesh.piece_owner)
    return MmdOperator(
        instance=Instance.CARTESIAN_ORACLE, points=pts, volumes=mesh.volumes, edges=mesh.edges,
        edge_moments=face_m, piece_owner=mesh.piece_owner, piece_centroids=mesh.piece_centroids,
        piece_normals=mesh.piece_normals, piece_lengths=mesh.piece_lengths, piece_moments=piece_m,
        interior=mesh.interior_mask, origin=origin,
        dirichlet_pieces=np.full(n_pieces, bool(dirichlet)), transfer=transfer)


def write_divergence_csv(path, op: MmdOperator, div) -> None:
    """Point dump ``id, x, y, kind, div`` in the cloud CSV layout."""
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "kind", "div"])
        for i, ((x, y), v) in enumerate(zip(op.points, div)):
            kind = "interior" if op.interior[i] else "boundary"
            w.writerow([i, repr(float(x)), repr(float(y)), kind, repr(float(v))])
