"""Metric data for the mimetic divergence: cell volumes and face moments.

Meshless construction: virtual volumes from a closed-form quadratic program,
virtual face moments as weighted graph gradients of area potentials. The
potentials solve ``d + 1`` weighted graph Laplacians (weights ``{1, X, Y}`` at
edge midpoints) with ``d`` right-hand sides each, in coordinates shifted so
that every weight is positive.

The Cartesian primal-dual grid below supplies exact face integrals and dual
cell volumes and serves as a mesh-based reference.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .cloud import CloudGraph, PointCloud
from .errors import CompatibilityError, SolverError
from .gmls import DIM, Kernel
from .linalg import amg_preconditioner, graph_laplacian, pcg

N_SCALAR = DIM + 1
N_VECTOR = DIM * N_SCALAR


class VolumeScheme(enum.Enum):
    UNIFORM = "uniform"
    MULTIRESOLUTION = "multiresolution"


@dataclass
class VirtualVolumes:
    mu: np.ndarray
    scheme: VolumeScheme

    def __post_init__(self):
        if np.any(self.mu <= 0):
            raise ValueError("virtual volumes must be positive")


def uniform_volumes(n_points: int | PointCloud, measure: float) -> VirtualVolumes:
    n = n_points.n_points if isinstance(n_points, PointCloud) else int(n_points)
    return VirtualVolumes(np.full(n, measure / n), VolumeScheme.UNIFORM)


def multiresolution_volumes(points, kernel: Kernel, measure: float, graph: CloudGraph | None = None) -> VirtualVolumes:
    """Volumes proportional to the inverse kernel density ``1 / sum_j kappa(|x_i - x_j|)``."""
    pts = points.points if isinstance(points, PointCloud) else np.atleast_2d(points)
    if graph is not None and abs(graph.radius - kernel.support) < 1e-15 * kernel.support:
        i, j = graph.edges[:, 0], graph.edges[:, 1]
        w = kernel(np.linalg.norm(pts[i] - pts[j], axis=1))
        density = 1.0 + np.bincount(i, w, len(pts)) + np.bincount(j, w, len(pts))
    else:
        from .cloud import radius_neighbors
        q, _, d = radius_neighbors(pts, pts, kernel.support)
        density = np.bincount(q, kernel(d), len(pts))
    rho = 1.0 / density
    # normalize the sum in a way that makes sum(mu) == measure as tight as possible
    mu = rho * (measure / rho.sum())
    mu *= measure / mu.sum()
    return VirtualVolumes(mu, VolumeScheme.MULTIRESOLUTION)


def make_volumes(scheme, cloud: PointCloud, kernel: Kernel, measure: float, graph=None) -> VirtualVolumes:
    scheme = VolumeScheme(scheme)
    if scheme is VolumeScheme.UNIFORM:
        return uniform_volumes(cloud, measure)
    return multiresolution_volumes(cloud, kernel, measure, graph)


def default_origin(points, diameter: float, shift_fraction: float = 0.1) -> np.ndarray:
    """Origin placing every point at coordinates >= ``shift_fraction * diameter``."""
    return np.min(points, axis=0) - shift_fraction * diameter


def scalar_basis_at(points, origin) -> np.ndarray:
    """Values of ``{1, X, Y}`` at ``points``, shape ``(n, 3)``."""
    X = np.atleast_2d(points) - origin
    return np.column_stack([np.ones(len(X)), X])


def boundary_face_moments(centroids, normals, measures, origin) -> np.ndarray:
    """Exact integrals of ``phi_s . n`` over straight segments, shape ``(n, 6)``.

    The integrand is linear, so the midpoint rule is exact.
    """
    phi = scalar_basis_at(centroids, origin)
    out = np.zeros((len(phi), N_VECTOR))
    for k in range(DIM):
        out[:, k * N_SCALAR:(k + 1) * N_SCALAR] = phi * (np.asarray(normals)[:, k] * measures)[:, None]
    return out


def potential_rhs(cloud: PointCloud, volumes: np.ndarray, origin) -> np.ndarray:
    """Right-hand sides ``b[:, s]``, ``s = k*3 + r``, of the area-potential systems.

    ``b_i = mu_i d_k phi_r - int_{Gamma_i} n_k phi_r dS``; the boundary
    integral is nonzero only for boundary particles.
    """
    p = cloud.n_points
    b = np.zeros((p, N_VECTOR))
    for k in range(DIM):
        b[:, k * N_SCALAR + k + 1] = volumes
    c, n, m = cloud.segment_data()
    b[cloud.n_interior:] -= boundary_face_moments(c, n, m, origin)
    return b


@dataclass
class AreaPotentials:
    psi: np.ndarray  # (p, 6)
    edge_weights: np.ndarray  # (E, 3): phi_r at edge midpoints
    reports: list = field(default_factory=list)
    setup_seconds: float = 0.0


def solve_area_potentials(cloud: PointCloud, graph: CloudGraph, volumes: np.ndarray, origin,
                          tol: float = 1e-10, max_iter: int = 500) -> AreaPotentials:
    """Solve ``L_r psi_{k,r} = b_{k,r}`` with deflated AMG-preconditioned CG."""
    t0 = time.perf_counter()
    pts = cloud.points
    b = potential_rhs(cloud, np.asarray(volumes, dtype=float), origin)
    for s in range(N_VECTOR):
        total = b[:, s].sum()
        if abs(total) > 1e-10 * np.abs(b[:, s]).sum():
            k, r = divmod(s, N_SCALAR)
            raise CompatibilityError(
                f"area-potential system (k={k}, r={r}) is incompatible: 1^T b = {total:.3e}; "
                "volumes do not sum to |Omega| or the boundary segments do not close")
    mids = 0.5 * (pts[graph.edges[:, 0]] + pts[graph.edges[:, 1]])
    weights = scalar_basis_at(mids, origin)
    psi = np.zeros((len(pts), N_VECTOR))
    reports = []
    for r in range(N_SCALAR):
        L = graph_laplacian(len(pts), graph.edges, weights[:, r])
        M = amg_preconditioner(L)
        for k in range(DIM):
            s = k * N_SCALAR + r
            x, rep = pcg(L, b[:, s], tol=tol, max_iter=max_iter, preconditioner=M, nullspace=True)
            if not rep.converged:
                raise SolverError(f"area-potential solve (k={k}, r={r}) did not converge", rep)
            psi[:, s] = x
            reports.append(rep)
    return AreaPotentials(psi, weights, reports, time.perf_counter() - t0)


def assemble_face_moments(potentials: AreaPotentials, graph: CloudGraph) -> np.ndarray:
    """``(mu_ij)_{k,r} = (psi_i - psi_j) phi_r(x_ij)`` for each stored edge ``i < j``."""
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    dpsi = potentials.psi[i] - potentials.psi[j]
    w = np.tile(potentials.edge_weights, (1, DIM))
    return dpsi * w


def oriented_moment(edge_moments: np.ndarray, edges: np.ndarray, i: int, j: int) -> np.ndarray:
    """Moment of the face between ``i`` and ``j`` oriented from ``i`` to ``j``."""
    lo, hi = min(i, j), max(i, j)
    hit = np.flatnonzero((edges[:, 0] == lo) & (edges[:, 1] == hi))
    if len(hit) == 0:
        raise KeyError(f"no edge between {i} and {j}")
    m = edge_moments[hit[0]]
    return m.copy() if i < j else -m


def p1_moment_residual(cloud: PointCloud, graph: CloudGraph, volumes, edge_moments, origin) -> np.ndarray:
    """Row residuals ``sum_j (mu_ij)_{k,r} - b_{k,r,i}``, shape ``(p, 6)``."""
    b = potential_rhs(cloud, np.asarray(volumes, dtype=float), origin)
    p = cloud.n_points
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    s = np.zeros((p, N_VECTOR))
    np.add.at(s, i, edge_moments)
    np.add.at(s, j, -edge_moments)
    return s - b


@dataclass
class MeshlessMetric:
    volumes: VirtualVolumes
    edge_moments: np.ndarray
    boundary_moments: np.ndarray
    origin: np.ndarray
    potentials: AreaPotentials

    @property
    def setup_seconds(self) -> float:
        return self.potentials.setup_seconds


def build_meshless_metric(cloud: PointCloud, graph: CloudGraph, kernel: Kernel, measure: float,
                          diameter: float, volume_scheme="multiresolution", tol: float = 1e-10,
                          shift_fraction: float = 0.1) -> MeshlessMetric:
    origin = default_origin(cloud.points, diameter, shift_fraction)
    vols = make_volumes(volume_scheme, cloud, kernel, measure, graph)
    pot = solve_area_potentials(cloud, graph, vols.mu, origin, tol=tol)
    moments = assemble_face_moments(pot, graph)
    c, n, m = cloud.segment_data()
    return MeshlessMetric(vols, moments, boundary_face_moments(c, n, m, origin), origin, pot)


# --- Cartesian primal-dual reference ---------------------------------------

@dataclass
class CartesianDualMesh:
    """Primal lattice on the unit square with its (clipped) square dual cells.

    Nodes are numbered ``a * (N + 1) + b`` for the node at ``(a h, b h)``.
    Each face is stored once, oriented from the lower to the higher index.
    Boundary pieces are the parts of dual-cell boundaries lying on the
    domain boundary; corner nodes own two of them.
    """

    N: int
    points: np.ndarray = field(init=False)
    volumes: np.ndarray = field(init=False)
    edges: np.ndarray = field(init=False)
    face_centroids: np.ndarray = field(init=False)
    face_normals: np.ndarray = field(init=False)
    face_lengths: np.ndarray = field(init=False)
    piece_owner: np.ndarray = field(init=False)
    piece_centroids: np.ndarray = field(init=False)
    piece_normals: np.ndarray = field(init=False)
    piece_lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        N = self.N
        h = 1.0 / N
        a, b = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        a, b = a.ravel(), b.ravel()
        self.points = np.column_stack([a * h, b * h])
        lo = lambda t: np.maximum(0.0, (t - 0.5) * h)
        hi = lambda t: np.minimum(1.0, (t + 0.5) * h)
        self.volumes = (hi(a) - lo(a)) * (hi(b) - lo(b))
        idx = lambda aa, bb: aa * (N + 1) + bb

        edges, cents, norms, lens = [], [], [], []
        # x-neighbors: vertical dual faces
        m = a < N
        ya, yb = lo(b[m]), hi(b[m])
        edges.append(np.column_stack([idx(a[m], b[m]), idx(a[m] + 1, b[m])]))
        cents.append(np.column_stack([(a[m] + 0.5) * h, 0.5 * (ya + yb)]))
        norms.append(np.tile([1.0, 0.0], (m.sum(), 1)))
        lens.append(yb - ya)
        # y-neighbors: horizontal dual faces
        m = b < N
        xa, xb = lo(a[m]), hi(a[m])
        edges.append(np.column_stack([idx(a[m], b[m]), idx(a[m], b[m] + 1)]))
        cents.append(np.column_stack([0.5 * (xa + xb), (b[m] + 0.5) * h]))
        norms.append(np.tile([0.0, 1.0], (m.sum(), 1)))
        lens.append(xb - xa)
        self.edges = np.vstack(edges)
        self.face_centroids = np.vstack(cents)
        self.face_normals = np.vstack(norms)
        self.face_lengths = np.concatenate(lens)

        owner, pc, pn, pl = [], [], [], []
        for side, sel, normal in (("bottom", b == 0, (0, -1)), ("right", a == N, (1, 0)),
                                  ("top", b == N, (0, 1)), ("left", a == 0, (-1, 0))):
            ids = np.flatnonzero(sel)
            if side in ("bottom", "top"):
                s0, s1 = lo(a[ids]), hi(a[ids])
                y = 0.0 if side == "bottom" else 1.0
                c = np.column_stack([0.5 * (s0 + s1), np.full(len(ids), y)])
            else:
                s0, s1 = lo(b[ids]), hi(b[ids])
                x = 0.0 if side == "left" else 1.0
                c = np.column_stack([np.full(len(ids), x), 0.5 * (s0 + s1)])
            owner.append(ids)
            pc.append(c)
            pn.append(np.tile(np.asarray(normal, dtype=float), (len(ids), 1)))
            pl.append(s1 - s0)
        self.piece_owner = np.concatenate(owner)
        self.piece_centroids = np.vstack(pc)
        self.piece_normals = np.vstack(pn)
        self.piece_lengths = np.concatenate(pl)

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def interior_mask(self) -> np.ndarray:
        x, y = self.points.T
        eps = 1e-12
        return (x > eps) & (x < 1 - eps) & (y > eps) & (y < 1 - eps)


def cartesian_oracle_metric(N: int, origin=(0.0, 0.0)):
    """Dual volumes plus exact face and boundary-piece moments on an ``N x N`` lattice."""
    mesh = CartesianDualMesh(N)
    origin = np.asarray(origin, dtype=float)
    face = boundary_face_moments(mesh.face_centroids, mesh.face_normals, mesh.face_lengths, origin)
    piece = boundary_face_moments(mesh.piece_centroids, mesh.piece_normals, mesh.piece_lengths, origin)
    return mesh, face, piece


def write_metric_csv(prefix, metric: MeshlessMetric, edges) -> tuple:
    """Dump ``mu_i`` to ``<prefix>_volumes.csv`` and ``mu_ij`` to ``<prefix>_moments.csv``."""
    import csv
    from pathlib import Path
    prefix = Path(prefix)
    vol_path = prefix.with_name(prefix.name + "_volumes.csv")
    mom_path = prefix.with_name(prefix.name + "_moments.csv")
    with open(vol_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "mu"])
        for i, m in enumerate(metric.volumes.mu):
            w.writerow([i, repr(float(m))])
    with open(mom_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "i", "j"] + [f"mu_{k}{r}" for k in range(DIM) for r in range(N_SCALAR)])
        for e, ((i, j), row) in enumerate(zip(edges, metric.edge_moments)):
            w.writerow([e, int(i), int(j)] + [repr(float(v)) for v in row])
    return vol_path, mom_path
