"""Point clouds, cloud quality metrics and the epsilon-ball graph."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DisconnectedGraphError
from .geometry import BoundarySegment, Domain, segment_arrays

RNG_NAME = "numpy.random.PCG64"
MAX_REDRAWS = 100


@dataclass
class PointCloud:
    """Interior particles followed by one boundary particle per segment.

    Global point indices run over ``interior`` first and ``boundary`` second.
    """

    interior: np.ndarray
    boundary: np.ndarray
    segments: list
    h_target: float
    seed: int = 0
    fill_distance: float = float("nan")
    separation: float = float("nan")
    rng: str = RNG_NAME

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.interior, self.boundary])

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @property
    def n_points(self) -> int:
        return self.n_interior + self.n_boundary

    @property
    def boundary_indices(self) -> np.ndarray:
        return np.arange(self.n_interior, self.n_points)

    @property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_points, dtype=bool)
        mask[self.n_interior:] = True
        return mask

    @property
    def quasi_uniformity(self) -> float:
        return self.fill_distance / self.separation

    def segment_data(self):
        """Centroids, outward normals and lengths of the boundary segments."""
        return segment_arrays(self.segments)


@dataclass
class DiscreteScalarField:
    values: np.ndarray
    bc_mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.bc_mask is None:
            self.bc_mask = np.zeros(len(self.values), dtype=bool)


@dataclass
class DiscreteVectorField:
    values: np.ndarray
    bc_mask: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("vector field values must be (n, d)")
        if self.bc_mask is None:
            self.bc_mask = np.zeros(len(self.values), dtype=bool)


def _lattice(domain: Domain, h: float) -> np.ndarray:
    lo, hi = domain.bounding_box
    axes = [h * np.arange(np.floor(lo[k] / h), np.ceil(hi[k] / h) + 1) for k in range(2)]
    gx, gy = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _draw_offsets(rng, n, amplitude, mode):
    if mode == "component":
        return rng.uniform(-amplitude, amplitude, size=(n, 2))
    if mode == "radial":
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        r = rng.uniform(0.0, amplitude, size=n)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    raise ConfigurationError(f"unknown perturbation mode {mode!r}")


def generate_cloud(domain: Domain, segments: Sequence[BoundarySegment], h_target: float,
                   perturbation_fraction: float = 0.2, seed: int = 0,
                   mode: str = "component") -> PointCloud:
    """Lattice of spacing ``h_target`` clipped to the domain, randomly perturbed.

    Each interior point moves by Uniform(-p h, p h) per component (or by a
    random vector of length up to p h when ``mode="radial"``). Moves that
    leave the domain are redrawn up to 100 times, after which the point stays
    where it was. Boundary particles are the segment barycenters.
    """
    if not 0 <= perturbation_fraction < 0.5:
        raise ConfigurationError("perturbation_fraction must lie in [0, 0.5)")
    lattice = _lattice(domain, h_target)
    interior = lattice[domain.contains(lattice)]
    if len(interior) == 0:
        raise ConfigurationError("lattice spacing leaves no interior points")
    rng = np.random.Generator(np.random.PCG64(seed))
    amp = perturbation_fraction * h_target
    if amp > 0:
        moved = interior.copy()
        pending = np.arange(len(interior))
        for _ in range(MAX_REDRAWS):
            if len(pending) == 0:
                break
            trial = interior[pending] + _draw_offsets(rng, len(pending), amp, mode)
            ok = domain.contains(trial)
            moved[pending[ok]] = trial[ok]
            pending = pending[~ok]
        interior = moved
    boundary, _, _ = segment_arrays(segments)
    cloud = PointCloud(interior=interior, boundary=boundary, segments=list(segments),
                       h_target=h_target, seed=seed)
    cloud.separation = separation_distance(cloud.points)
    cloud.fill_distance = fill_distance(cloud, domain)
    return cloud


def separation_distance(points: np.ndarray) -> float:
    """Half the minimum pairwise distance."""
    if len(points) < 2:
        return float("inf")
    d, _ = cKDTree(points).query(points, k=2)
    return 0.5 * float(d[:, 1].min())


def fill_distance(cloud: PointCloud | np.ndarray, domain: Domain, h_target: float | None = None) -> float:
    """Estimate of sup_x min_i |x - x_i| over the closed domain.

    The supremum is taken over a sampling lattice four times finer than the
    target spacing plus boundary samples, so it underestimates the true value
    by at most about the sampling resolution.
    """
    if isinstance(cloud, PointCloud):
        pts, h = cloud.points, cloud.h_target
    else:
        pts = np.atleast_2d(np.asarray(cloud, dtype=float))
        h = h_target if h_target is not None else domain.diameter / 16
    if len(pts) == 0:
        raise ConfigurationError("empty cloud")
    step = h / 4
    samples = _lattice(domain, step)
    samples = samples[domain.contains(samples, tol=None)]
    bdry = []
    for poly in domain.boundary_polyline:
        for a, b in zip(poly[:-1], poly[1:]):
            n = max(1, int(np.ceil(np.linalg.norm(b - a) / step)))
            t = np.linspace(0.0, 1.0, n + 1)[:, None]
            bdry.append(a + t * (b - a))
    samples = np.vstack([samples] + bdry)
    d, _ = cKDTree(pts).query(samples)
    return float(d.max())


# --- spatial binning -------------------------------------------------------

def radius_neighbors(queries: np.ndarray, data: np.ndarray, radius: float):
    """All ``(q, j, |x_q - x_j|)`` with distance strictly below ``radius``.

    Uses a uniform bin grid of size ``radius`` over ``data``; each query scans
    the 3x3 block of bins around it. Returns arrays sorted by ``(q, j)``.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    data = np.atleast_2d(np.asarray(data, dtype=float))
    dim = data.shape[1]
    if dim > 3:
        raise ValueError("binning supports dimensions up to 3")
    if not radius > 0:
        raise ConfigurationError("radius must be positive")
    lo = np.minimum(data.min(axis=0), queries.min(axis=0)) - radius
    cells_d = np.floor((data - lo) / radius).astype(np.int64)
    cells_q = np.floor((queries - lo) / radius).astype(np.int64)
    shape = np.maximum(cells_d.max(axis=0), cells_q.max(axis=0)) + 2
    strides = np.cumprod(np.concatenate([[1], shape[::-1][:-1]]))[::-1]
    key_d = cells_d @ strides
    order = np.argsort(key_d, kind="stable")
    keys_sorted = key_d[order]
    ukeys, starts, counts = np.unique(keys_sorted, return_index=True, return_counts=True)

    offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij")).reshape(dim, -1).T
    qs, js = [], []
    for off in offsets:
        key_q = (cells_q + off) @ strides
        pos = np.searchsorted(ukeys, key_q)
        pos = np.minimum(pos, len(ukeys) - 1)
        hit = ukeys[pos] == key_q
        qi = np.flatnonzero(hit)
        st, ct = starts[pos[hit]], counts[pos[hit]]
        total = int(ct.sum())
        if total == 0:
            continue
        rep_q = np.repeat(qi, ct)
        within = np.arange(total) - np.repeat(np.cumsum(ct) - ct, ct)
        cand = order[np.repeat(st, ct) + within]
        qs.append(rep_q)
        js.append(cand)
    if not qs:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    q = np.concatenate(qs)
    j = np.concatenate(js)
    dist = np.linalg.norm(queries[q] - data[j], axis=1)
    keep = dist < radius
    q, j, dist = q[keep], j[keep], dist[keep]
    srt = np.lexsort((j, q))
    return q[srt], j[srt], dist[srt]


@dataclass
class CloudGraph:
    """Epsilon-ball graph: ``edges`` holds each unordered pair once with i < j."""

    radius: float
    edges: np.ndarray
    n_vertices: int
    indptr: np.ndarray = field(repr=False, default=None)
    indices: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.indptr is None:
            adj = self.adjacency_matrix()
            self.indptr, self.indices = adj.indptr, adj.indices

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency_matrix(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        adj = sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])),
                            shape=(self.n_vertices, self.n_vertices))
        adj.sort_indices()
        return adj

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def is_connected(self) -> bool:
        if self.n_vertices == 0:
            return True
        adj = sp.csr_matrix((np.ones(len(self.indices)), self.indices, self.indptr),
                            shape=(self.n_vertices, self.n_vertices))
        order = breadth_first_order(adj, 0, directed=False, return_predecessors=False)
        return len(order) == self.n_vertices


def build_graph(points, radius: float, check_connected: bool = True) -> CloudGraph:
    """Exact epsilon-ball graph ``|x_i - x_j| < radius`` via uniform binning."""
    pts = points.points if isinstance(points, PointCloud) else np.atleast_2d(np.asarray(points, dtype=float))
    if not radius > 0:
        raise ConfigurationError("graph radius must be positive")
    q, j, _ = radius_neighbors(pts, pts, radius)
    keep = q < j
    edges = np.column_stack([q[keep], j[keep]]).astype(np.int64)
    graph = CloudGraph(radius=float(radius), edges=edges, n_vertices=len(pts))
    if check_connected and not graph.is_connected():
        raise DisconnectedGraphError(
            f"epsilon-ball graph with radius {radius:g} is disconnected; increase the radius")
    return graph


def brute_force_edges(points, radius: float) -> np.ndarray:
    """O(p^2) reference edge list, for testing the binned construction."""
    pts = np.asarray(points, dtype=float)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    i, j = np.nonzero(np.triu(d < radius, k=1))
    return np.column_stack([i, j])


def write_cloud_csv(cloud: PointCloud, path, extra: dict | None = None) -> None:
    """Point dump: id, x, y, kind, segment_id (+ optional per-point columns)."""
    extra = extra or {}
    pts = cloud.points
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "kind", "segment_id", *extra])
        for i, (x, y) in enumerate(pts):
            boundary = i >= cloud.n_interior
            seg = i - cloud.n_interior if boundary else -1
            row = [i, repr(float(x)), repr(float(y)), "boundary" if boundary else "interior", seg]
            row += [repr(float(np.asarray(v)[i])) for v in extra.values()]
            w.writerow(row)
