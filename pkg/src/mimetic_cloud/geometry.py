"""Planar domains, boundary segmentation and coefficient fields.

Domains are polygons. Curved boundaries (the disk) are replaced by an
inscribed regular polygon, so the divergence theorem holds exactly for linear
fields and the boundary quadrature below is exact for them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError


class DomainKind(enum.Enum):
    UNIT_SQUARE = "unit_square"
    UNIT_DISK = "unit_disk"
    PERFORATED_SQUARE = "perforated_square"


class BcTag(enum.Enum):
    DIRICHLET = "dirichlet"  # gamma'
    NEUMANN = "neumann"  # gamma


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class Domain:
    """Polygonal domain; ``loops[0]`` is the outer loop (CCW), the rest are holes (CW).

    Loops are stored without repeating the first vertex.
    """

    kind: DomainKind
    loops: tuple

    def __post_init__(self):
        loops = tuple(np.asarray(l, dtype=float) for l in self.loops)
        if not loops:
            raise ConfigurationError("domain needs at least one boundary loop")
        if _signed_area(loops[0]) <= 0:
            raise ConfigurationError("outer loop must be counterclockwise")
        for hole in loops[1:]:
            if _signed_area(hole) >= 0:
                raise ConfigurationError("hole loops must be clockwise")
        object.__setattr__(self, "loops", loops)

    @property
    def measure(self) -> float:
        return sum(_signed_area(l) for l in self.loops)

    @property
    def boundary_polyline(self):
        """Closed loops with the first vertex repeated at the end."""
        return [np.vstack([l, l[:1]]) for l in self.loops]

    @property
    def perimeter(self) -> float:
        return sum(float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))
                   for p in self.boundary_polyline)

    @property
    def bounding_box(self):
        outer = self.loops[0]
        return outer.min(axis=0), outer.max(axis=0)

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box
        return float(np.linalg.norm(hi - lo))

    def edges(self):
        """All boundary edges as ``(loop, edge, start, end)`` tuples."""
        out = []
        for li, loop in enumerate(self.loops):
            n = len(loop)
            for e in range(n):
                out.append((li, e, loop[e], loop[(e + 1) % n]))
        return out

    def _edge_arrays(self):
        a = np.array([e[2] for e in self.edges()])
        b = np.array([e[3] for e in self.edges()])
        return a, b

    def boundary_distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the polygonal boundary."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self._edge_arrays()
        ab = b - a
        ab2 = np.einsum("ek,ek->e", ab, ab)
        out = np.empty(len(p))
        for s in _blocks(len(p), len(a)):
            ap = p[s, None, :] - a[None, :, :]
            t = np.clip(np.einsum("pek,ek->pe", ap, ab) / ab2, 0.0, 1.0)
            out[s] = np.min(np.linalg.norm(ap - t[..., None] * ab[None], axis=2), axis=1)
        return out

    def contains(self, points, tol: float | None = 1e-12) -> np.ndarray:
        """Strict interior test; points within ``tol`` of the boundary are outside.

        ``tol=None`` skips the distance check and returns the raw crossing-parity result.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        a, b = self._edge_arrays()
        # crossing parity of a ray towards +x; each edge only visits points in its y-band
        order = np.argsort(p[:, 1], kind="stable")
        ys, xs = p[order, 1], p[order, 0]
        parity = np.zeros(len(p), dtype=bool)
        for (ax, ay), (bx, by) in zip(a, b):
            if ay == by:
                continue
            lo, hi = (ay, by) if ay < by else (by, ay)
            # half-open band [lo, hi) matches the (ay > py) != (by > py) straddle rule
            k0, k1 = np.searchsorted(ys, lo, "left"), np.searchsorted(ys, hi, "left")
            if k0 == k1:
                continue
            xcross = ax + (ys[k0:k1] - ay) * (bx - ax) / (by - ay)
            parity[k0:k1] ^= xs[k0:k1] < xcross
        inside = np.empty(len(p), dtype=bool)
        inside[order] = parity
        if tol is None:
            return inside
        # a segment is no closer than its midpoint minus half its length
        mid, half = 0.5 * (a + b), 0.5 * np.linalg.norm(b - a, axis=1)
        d_mid, _ = cKDTree(mid).query(p)
        near = np.flatnonzero(inside & (d_mid <= half.max() + tol))
        inside[near] = self.boundary_distance(p[near]) > tol
        return inside


def _blocks(n_points: int, n_edges: int, budget: int = 1 << 20):
    """Slices over points keeping point-by-edge temporaries near ``budget`` entries."""
    step = max(1, budget // max(n_edges, 1))
    return [slice(k, min(k + step, n_points)) for k in range(0, n_points, step)]


def unit_square() -> Domain:
    return Domain(DomainKind.UNIT_SQUARE, ([[0, 0], [1, 0], [1, 1], [0, 1]],))


def unit_disk(n_edges: int = 64) -> Domain:
    """Regular ``n_edges``-gon inscribed in the unit circle centered at the origin."""
    if n_edges < 3:
        raise ConfigurationError("disk polygon needs at least 3 edges")
    t = 2 * np.pi * np.arange(n_edges) / n_edges
    return Domain(DomainKind.UNIT_DISK, (np.column_stack([np.cos(t), np.sin(t)]),))


def unit_disk_for_spacing(h_target: float) -> Domain:
    """Disk polygon with the most edges that are still at least ``h_target`` long."""
    n = max(3, math.ceil(2 * math.pi / h_target))
    while n > 3 and 2 * math.sin(math.pi / n) < h_target * (1 - 1e-9):
        n -= 1
    return unit_disk(n)


def perforated_square(holes=((0.3, 0.3), (0.7, 0.7)), hole_side: float = 0.2) -> Domain:
    """Unit square minus axis-aligned square holes.

    The hole layout is a stand-in chosen for this package; it is configurable.
    """
    loops = [np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)]
    r = 0.5 * hole_side
    for cx, cy in holes:
        # clockwise
        loops.append(np.array([[cx - r, cy - r], [cx - r, cy + r],
                               [cx + r, cy + r], [cx + r, cy - r]]))
    dom = Domain(DomainKind.PERFORATED_SQUARE, tuple(loops))
    for hole in loops[1:]:
        if not np.all(dom.contains(hole, tol=0.0) | (dom.boundary_distance(hole) <= 1e-14)):
            raise ConfigurationError("hole leaves the unit square")
    return dom


def make_domain(kind: str | DomainKind, h_target: float | None = None, **kwargs) -> Domain:
    kind = DomainKind(kind)
    if kind is DomainKind.UNIT_SQUARE:
        return unit_square()
    if kind is DomainKind.PERFORATED_SQUARE:
        return perforated_square(**kwargs)
    if "n_edges" in kwargs:
        return unit_disk(kwargs["n_edges"])
    if h_target is None:
        raise ConfigurationError("unit disk needs n_edges or h_target")
    return unit_disk_for_spacing(h_target)


@dataclass(frozen=True)
class BoundarySegment:
    index: int
    endpoints: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray
    measure: float
    loop: int = 0
    edge: int = 0
    bc_tag: BcTag | None = None

    def with_tag(self, tag: BcTag) -> "BoundarySegment":
        return BoundarySegment(self.index, self.endpoints, self.centroid, self.normal,
                               self.measure, self.loop, self.edge, tag)


def segment_boundary(domain: Domain, h_target: float) -> list[BoundarySegment]:
    """Split every polygon edge into equal straight segments of length close to ``h_target``."""
    if not h_target > 0:
        raise ConfigurationError("h_target must be positive")
    edges = domain.edges()
    shortest = min(float(np.linalg.norm(b - a)) for _, _, a, b in edges)
    if h_target > shortest * (1 + 1e-9):
        raise ConfigurationError(
            f"h_target={h_target:g} exceeds the shortest boundary edge ({shortest:g})")
    segments = []
    for loop, edge, a, b in edges:
        length = float(np.linalg.norm(b - a))
        n = max(1, int(round(length / h_target)))
        tangent = (b - a) / length
        # outward normal of a CCW outer loop / CW hole is the tangent rotated clockwise
        normal = np.array([tangent[1], -tangent[0]])
        nodes = a[None, :] + np.linspace(0.0, 1.0, n + 1)[:, None] * (b - a)[None, :]
        for s in range(n):
            p, q = nodes[s].copy(), nodes[s + 1].copy()
            segments.append(BoundarySegment(
                index=len(segments), endpoints=np.array([p, q]), centroid=0.5 * (p + q),
                normal=normal.copy(), measure=float(np.linalg.norm(q - p)),
                loop=loop, edge=edge))
    return segments


def segment_arrays(segments: Sequence[BoundarySegment]):
    """Stack segment centroids, normals and lengths into arrays."""
    c = np.array([s.centroid for s in segments]).reshape(-1, 2)
    n = np.array([s.normal for s in segments]).reshape(-1, 2)
    m = np.array([s.measure for s in segments], dtype=float)
    return c, n, m


# --- boundary-condition specifications -------------------------------------

SegmentPredicate = Callable[[BoundarySegment], bool]


@dataclass
class BcSpec:
    """Ordered list of ``(predicate, tag)`` rules; each segment must match exactly one."""

    rules: list = field(default_factory=list)

    def add(self, predicate: SegmentPredicate, tag: BcTag) -> "BcSpec":
        self.rules.append((predicate, BcTag(tag)))
        return self


def tag_boundary(segments: Sequence[BoundarySegment], spec: BcSpec) -> list[BoundarySegment]:
    tagged = []
    for seg in segments:
        hits = [tag for pred, tag in spec.rules if pred(seg)]
        if len(hits) != 1:
            what = "untagged" if not hits else "tagged more than once"
            raise ConfigurationError(f"segment {seg.index} at {seg.centroid} is {what}")
        tagged.append(seg.with_tag(hits[0]))
    return tagged


def everywhere(seg: BoundarySegment) -> bool:
    return True


def on_side(side: str, tol: float = 1e-12) -> SegmentPredicate:
    """Predicate for one side of the unit square's outer loop."""
    def pred(seg):
        if seg.loop != 0:
            return False
        x, y = seg.centroid
        return {"bottom": abs(y) < tol, "top": abs(y - 1) < tol,
                "left": abs(x) < tol, "right": abs(x - 1) < tol}[side]
    return pred


def all_tagged(tag: BcTag) -> BcSpec:
    return BcSpec().add(everywhere, tag)


def skew_advection_spec() -> BcSpec:
    """Dirichlet on bottom/left; top/right are flux (outflow) segments."""
    spec = BcSpec()
    spec.add(lambda s: on_side("bottom")(s) or on_side("left")(s), BcTag.DIRICHLET)
    spec.add(lambda s: on_side("top")(s) or on_side("right")(s), BcTag.NEUMANN)
    return spec


# --- coefficient fields ----------------------------------------------------

@dataclass
class CoefficientField:
    """Piecewise-constant diffusivity plus a velocity field."""

    pieces: list
    velocity: Callable = None

    def epsilon(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(p), np.nan)
        hits = np.zeros(len(p), dtype=int)
        for pred, value in self.pieces:
            if value <= 0:
                raise ConfigurationError("diffusivity must be positive")
            mask = np.asarray(pred(p), dtype=bool)
            out[mask] = value
            hits += mask
        if np.any(hits != 1):
            bad = np.flatnonzero(hits != 1)[0]
            raise ConfigurationError(
                f"diffusivity pieces do not partition the domain at {p[bad]}")
        return out

    def a(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.velocity is None:
            return np.zeros_like(p)
        return np.broadcast_to(np.asarray(self.velocity(p), dtype=float), p.shape).copy()


def constant_field(eps: float, velocity=None) -> CoefficientField:
    vel = None
    if velocity is not None:
        v = np.asarray(velocity, dtype=float)
        vel = lambda p: np.tile(v, (len(p), 1))
    return CoefficientField([(lambda p: np.ones(len(p), dtype=bool), float(eps))], vel)
