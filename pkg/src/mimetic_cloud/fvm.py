"""Virtual finite-volume scheme for ``-div(eps grad u - a u) = f``.

Unknowns are point values on interior and flux-boundary particles; Dirichlet
particles carry prescribed values and are eliminated. Row ``i`` of the
operator is the linear map ``u -> mu_i (DIV sigma(u))_i`` of the meshless MMD,
with the diffusive and advective flux moments built from GMLS stencils.
"""
from __future__ import annotations

import enum
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import CompatibilityWarning, ConfigurationError
from .geometry import BcTag, CoefficientField
from .gmls import DIM, Stencil, upwind_p1_stencil, vector_stencil
from .linalg import SolveReport, SparseOperator, bicgstab_solve, bordered_solve
from .metric import scalar_basis_at
from .mmd import MeshlessContext

log = logging.getLogger(__name__)
N1 = DIM * (DIM + 1)


class AdvectiveMode(enum.Enum):
    CENTERED = "centered"
    UPWIND = "upwind"


class DiffusivityMean(enum.Enum):
    ARITHMETIC = "arithmetic"
    HARMONIC = "harmonic"


@dataclass
class FluxConfig:
    advective: AdvectiveMode = AdvectiveMode.UPWIND
    mean: DiffusivityMean = DiffusivityMean.HARMONIC

    def __post_init__(self):
        self.advective = AdvectiveMode(self.advective)
        self.mean = DiffusivityMean(self.mean)


def face_diffusivity(eps_i, eps_j, mean) -> np.ndarray:
    eps_i, eps_j = np.asarray(eps_i, dtype=float), np.asarray(eps_j, dtype=float)
    if DiffusivityMean(mean) is DiffusivityMean.ARITHMETIC:
        return 0.5 * (eps_i + eps_j)
    return 2.0 * eps_i * eps_j / (eps_i + eps_j)


@dataclass
class FvProblem:
    """Coefficients, source and boundary data.

    ``neumann(points, normals)`` returns ``n . sigma`` at segment midpoints;
    ``neumann_integrals`` (one value per segment) overrides it. Segments
    flagged in ``outflow`` must be flux segments; their flux is
    ``-(n . a) u_i`` instead of prescribed data.
    """

    coefficients: CoefficientField
    source: Callable
    dirichlet: Callable = None
    neumann: Callable = None
    neumann_integrals: np.ndarray = None
    outflow: np.ndarray = None


# --- flux moments -----------------------------------------------------------

@dataclass
class FluxStencils:
    """Nodal stencils for the diffusive (``eps_i g_i``) and advective coefficients."""

    diffusive: Stencil
    advective: Stencil
    upwind_fallback: np.ndarray
    eps: np.ndarray
    velocity: np.ndarray
    velocity_field: Callable = None


def flux_stencils(ctx: MeshlessContext, coefficients: CoefficientField, config: FluxConfig) -> FluxStencils:
    if ctx.grad is None:
        raise ConfigurationError("context was built without gradient stencils (need_gradient=True)")
    pts = ctx.points
    eps = coefficients.epsilon(pts)
    a = coefficients.a(pts)
    if config.advective is AdvectiveMode.UPWIND:
        scalar, fallback = upwind_p1_stencil(pts, ctx.nbhd, ctx.kernel, ctx.origin, a)
    else:
        scalar, fallback = ctx.p1, np.zeros(len(pts), dtype=bool)
    adv = vector_stencil(scalar, -a)
    return FluxStencils(ctx.grad, adv, fallback, eps, a, coefficients.a)


def _edge_velocity_sign(ctx: MeshlessContext, coefficients: CoefficientField) -> np.ndarray:
    """True where the i-side coefficients are upwind, i.e. ``a(x_ij) . (x_j - x_i) >= 0``."""
    pts = ctx.points
    i, j = ctx.graph.edges[:, 0], ctx.graph.edges[:, 1]
    a_mid = coefficients.a(0.5 * (pts[i] + pts[j]))
    return np.einsum("ek,ek->e", a_mid, pts[j] - pts[i]) >= 0


def diffusive_flux_moments(ctx: MeshlessContext, u, eps, mean=DiffusivityMean.HARMONIC):
    """``(eps_ij / 2)(g_i + g_j)`` per edge, and ``eps_i g_i`` per boundary particle."""
    g = ctx.grad.apply(u)
    i, j = ctx.graph.edges[:, 0], ctx.graph.edges[:, 1]
    e_ij = face_diffusivity(eps[i], eps[j], mean)
    edge = 0.5 * e_ij[:, None] * (g[i] + g[j])
    nodal = eps[:, None] * g
    return edge, nodal[ctx.cloud.n_interior:]


def advective_flux_moments(ctx: MeshlessContext, u, stencils: FluxStencils, mode, i_side=None):
    """Centered or upwind advective moments per edge, and nodal ones per boundary particle."""
    c = stencils.advective.apply(u)
    i, j = ctx.graph.edges[:, 0], ctx.graph.edges[:, 1]
    if AdvectiveMode(mode) is AdvectiveMode.CENTERED:
        edge = 0.5 * (c[i] + c[j])
    else:
        if i_side is None:
            raise ValueError("upwind moments need the edge orientation test")
        edge = np.where(i_side[:, None], c[i], c[j])
    return edge, c[ctx.cloud.n_interior:]


def nodal_flux(ctx: MeshlessContext, u, eps) -> np.ndarray:
    """GMLS diffusive flux ``eps_i grad u(x_i)`` at every point, shape ``(p, 2)``."""
    g = ctx.grad.apply(u)
    phi = scalar_basis_at(ctx.points, ctx.origin)
    m = DIM + 1
    return eps[:, None] * np.column_stack([np.einsum("ar,ar->a", g[:, k * m:(k + 1) * m], phi)
                                           for k in range(DIM)])


# --- assembly ---------------------------------------------------------------

def _contract(moments: np.ndarray, st: Stencil, rows: np.ndarray) -> np.ndarray:
    """``moments[e] @ weights[rows[e]]`` for every ``e``, shape ``(E, K)``."""
    out = np.zeros((len(rows), st.weights.shape[2]))
    for s in range(N1):
        out += moments[:, s, None] * st.weights[rows, s, :]
    return out


def _stencil_triplets(row, owner, values, st: Stencil):
    return (np.repeat(row, values.shape[1]), st.index[owner].ravel(), values.ravel())


def _segment_tags(cloud):
    dirichlet = np.array([s.bc_tag is BcTag.DIRICHLET for s in cloud.segments], dtype=bool)
    return dirichlet


def assemble_operator(ctx: MeshlessContext, stencils: FluxStencils, config: FluxConfig,
                      i_side=None, outflow=None) -> sp.csr_matrix:
    """Sparse ``p x p`` matrix of ``u -> mu_i (DIV sigma(u))_i`` over all cells.

    Data-driven flux pieces (Neumann) are excluded; outflow pieces are included.
    """
    cloud = ctx.cloud
    p = cloud.n_points
    edges = ctx.graph.edges
    i, j = edges[:, 0], edges[:, 1]
    m = ctx.metric.edge_moments
    rows, cols, vals = [], [], []

    def add(r, owner, v, st):
        a, b, c = _stencil_triplets(r, owner, v, st)
        rows.append(a), cols.append(b), vals.append(c)

    # diffusive: (eps_ij / 2)(g_i + g_j) . mu_ij, +row i, -row j
    e_ij = face_diffusivity(stencils.eps[i], stencils.eps[j], config.mean)
    G = stencils.diffusive
    for side in (i, j):
        v = 0.5 * e_ij[:, None] * _contract(m, G, side)
        add(i, side, v, G)
        add(j, side, -v, G)

    A = stencils.advective
    if config.advective is AdvectiveMode.CENTERED:
        for side in (i, j):
            v = 0.5 * _contract(m, A, side)
            add(i, side, v, A)
            add(j, side, -v, A)
    else:
        side = np.where(i_side, i, j)
        v = _contract(m, A, side)
        add(i, side, v, A)
        add(j, side, -v, A)

    # Dirichlet pieces use the owning particle's nodal coefficients
    dirichlet = _segment_tags(cloud)
    owners = cloud.boundary_indices
    if np.any(dirichlet):
        own = owners[dirichlet]
        mb = ctx.metric.boundary_moments[dirichlet]
        add(own, own, stencils.eps[own, None] * _contract(mb, G, own), G)
        add(own, own, _contract(mb, A, own), A)

    if outflow is not None and np.any(outflow):
        c, n, length = cloud.segment_data()
        own = owners[outflow]
        a_mid = stencils.velocity_field(c[outflow])
        w = -np.einsum("bk,bk->b", a_mid, n[outflow]) * length[outflow]
        rows.append(own), cols.append(own), vals.append(w)

    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(p, p)).tocsr()
    M.sum_duplicates()
    return M


@dataclass
class FvSystem:
    """Reduced system ``A u_free = rhs`` plus what is needed to rebuild the full solution."""

    A: SparseOperator
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    full_operator: sp.csr_matrix
    source_terms: np.ndarray
    flux_terms: np.ndarray
    constraint: np.ndarray = None
    stencils: FluxStencils = None
    i_side: np.ndarray = None
    outflow: np.ndarray = None
    config: FluxConfig = None
    compatibility_residual: float = 0.0

    @property
    def pure_neumann(self) -> bool:
        return self.constraint is not None


def neumann_integrals(ctx: MeshlessContext, problem: FvProblem) -> np.ndarray:
    cloud = ctx.cloud
    c, n, length = cloud.segment_data()
    if problem.neumann_integrals is not None:
        h = np.asarray(problem.neumann_integrals, dtype=float)
        if h.shape != (len(c),):
            raise ConfigurationError("neumann_integrals needs one value per boundary segment")
        return h
    if problem.neumann is None:
        return np.zeros(len(c))
    return np.asarray(problem.neumann(c, n), dtype=float) * length


def assemble_system(ctx: MeshlessContext, problem: FvProblem, config: FluxConfig | None = None) -> FvSystem:
    config = config or FluxConfig()
    cloud = ctx.cloud
    p = cloud.n_points
    pts = ctx.points
    stencils = flux_stencils(ctx, problem.coefficients, config)
    if np.any(stencils.upwind_fallback):
        log.info("upwind fits fell back to full neighborhoods at %d points",
                 int(stencils.upwind_fallback.sum()))

    dirichlet = _segment_tags(cloud)
    outflow = np.zeros(cloud.n_boundary, dtype=bool) if problem.outflow is None \
        else np.asarray(problem.outflow, dtype=bool)
    if np.any(outflow & dirichlet):
        raise ConfigurationError("outflow segments must be flux (Neumann) segments")
    i_side = _edge_velocity_sign(ctx, problem.coefficients) \
        if config.advective is AdvectiveMode.UPWIND else None
    M = assemble_operator(ctx, stencils, config, i_side, outflow)

    mu = ctx.metric.volumes.mu
    source = mu * np.asarray(problem.source(pts), dtype=float)
    flux = np.zeros(p)
    h = neumann_integrals(ctx, problem)
    data = ~dirichlet & ~outflow
    flux[cloud.boundary_indices[data]] = h[data]

    fixed = cloud.boundary_indices[dirichlet]
    if len(fixed) and problem.dirichlet is None:
        raise ConfigurationError("Dirichlet segments present but no Dirichlet data given")
    free = np.setdiff1d(np.arange(p), fixed)
    g = np.asarray(problem.dirichlet(pts[fixed]), dtype=float) if len(fixed) else np.zeros(0)

    # mu_i DIV sigma = -mu_i f  with the prescribed flux moved to the right
    rhs_full = -source - flux
    A = M[free][:, free]
    rhs = rhs_full[free] - (M[free][:, fixed] @ g if len(fixed) else 0.0)
    constraint = None
    compat = 0.0
    if len(fixed) == 0:
        constraint = mu[free]
        compat = float(abs(rhs.sum()) / max(np.abs(rhs).sum(), 1e-300))
        if compat > 1e-8:
            warnings.warn(f"pure-Neumann data violate global compatibility (relative {compat:.2e}); "
                          "the bordered solve absorbs the mismatch", CompatibilityWarning, stacklevel=2)
    return FvSystem(SparseOperator(A), rhs, free, fixed, g, M, source, flux, constraint,
                    stencils, i_side, outflow, config, compat)


@dataclass
class FvSolution:
    u: np.ndarray
    report: SolveReport
    multiplier: float = 0.0
    dirichlet_mask: np.ndarray = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.report.converged


def solve(system: FvSystem, tol: float = 1e-8, max_iter: int = 5000) -> FvSolution:
    """Bordered direct solve for pure-Neumann systems, Jacobi BiCGStab otherwise."""
    p = len(system.free) + len(system.fixed)
    u = np.zeros(p)
    u[system.fixed] = system.fixed_values
    lam = 0.0
    if system.pure_neumann:
        x, lam, rep = bordered_solve(system.A, system.rhs, system.constraint)
        rep.converged = bool(np.all(np.isfinite(x)))
    else:
        # start from the mean boundary value so constant solutions need no iterations
        x0 = np.full(len(system.free), system.fixed_values.mean()) if len(system.fixed) else None
        x, rep = bicgstab_solve(system.A, system.rhs, tol=tol, max_iter=max_iter, x0=x0)
        if not rep.converged:
            log.info("BiCGStab did not converge (residual %.2e after %d iterations)",
                     rep.residual, rep.iterations)
    u[system.free] = x
    mask = np.zeros(p, dtype=bool)
    mask[system.fixed] = True
    return FvSolution(u, rep, lam, mask)


def apply_matrix_free(ctx: MeshlessContext, system: FvSystem, u) -> np.ndarray:
    """``mu_i DIV sigma(u)`` built from explicit flux moments, for checking the assembly."""
    u = np.asarray(u, dtype=float)
    st, cfg = system.stencils, system.config
    ed, bd = diffusive_flux_moments(ctx, u, st.eps, cfg.mean)
    ea, ba = advective_flux_moments(ctx, u, st, cfg.advective, system.i_side)
    edge = ed + ea
    t = np.einsum("es,es->e", edge, ctx.metric.edge_moments)
    p = ctx.cloud.n_points
    i, j = ctx.graph.edges[:, 0], ctx.graph.edges[:, 1]
    out = np.bincount(i, t, p) - np.bincount(j, t, p)
    dirichlet = _segment_tags(ctx.cloud)
    owners = ctx.cloud.boundary_indices
    bm = ctx.metric.boundary_moments
    piece = np.einsum("bs,bs->b", bd + ba, bm)
    out += np.bincount(owners[dirichlet], piece[dirichlet], p)
    if system.outflow is not None and np.any(system.outflow):
        c, n, length = ctx.cloud.segment_data()
        o = system.outflow
        a_mid = st.velocity_field(c[o])
        out += np.bincount(owners[o], -np.einsum("bk,bk->b", a_mid, n[o]) * length[o] * u[owners[o]], p)
    return out


def solve_problem(ctx: MeshlessContext, problem: FvProblem, config: FluxConfig | None = None,
                  tol: float = 1e-8, max_iter: int = 5000):
    """Assemble and solve; returns ``(solution, system)``."""
    t0 = time.perf_counter()
    system = assemble_system(ctx, problem, config)
    sol = solve(system, tol=tol, max_iter=max_iter)
    log.debug("fv solve: %d unknowns, %.3fs", len(system.free), time.perf_counter() - t0)
    return sol, system


# --- output -----------------------------------------------------------------

def write_solution_csv(path, ctx: MeshlessContext, u, eps=None) -> None:
    """Point dump with GMLS-reconstructed diffusive flux: id, x, y, u, sigma_x, sigma_y."""
    import csv
    eps = np.ones(ctx.cloud.n_points) if eps is None else np.asarray(eps, dtype=float)
    sigma = nodal_flux(ctx, u, eps)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "u", "sigma_x", "sigma_y"])
        for k, ((x, y), val, (sx, sy)) in enumerate(zip(ctx.points, u, sigma)):
            w.writerow([k, repr(float(x)), repr(float(y)), repr(float(val)), repr(float(sx)), repr(float(sy))])


def write_vtk_points(path, points, fields: dict) -> None:
    """Legacy ASCII VTK unstructured grid of vertex cells with point scalars."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    lines = ["# vtk DataFile Version 3.0", "mimetic_cloud point data", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in pts]
    lines.append(f"CELLS {n} {2 * n}")
    lines += [f"1 {k}" for k in range(n)]
    lines.append(f"CELL_TYPES {n}")
    lines += ["1"] * n
    lines.append(f"POINT_DATA {n}")
    for name, vals in fields.items():
        v = np.asarray(vals, dtype=float)
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(x)) for x in v]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
