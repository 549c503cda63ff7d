"""Planar domains with circular cores, graded triangulations, and element-wise
quadrature over meshes and their tagged boundaries.

Triangulation is a constrained Delaunay mesh with Ruppert refinement (via
Shewchuk's Triangle), driven by a sizing field that grades toward the holes.
Boundary edges are stored oriented with the meshed region on their left, so
the outward normal of an edge ``a -> b`` is ``(b - a)`` rotated clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np
import triangle as _triangle

from .errors import GeometryError, MeshError, NonFiniteIntegrand, NotBoundary
from .quadrature import QuadratureSpec, gauss_legendre01, triangle_rule

OUTER = -1
MIN_HOLE_EDGES = 16


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def centroid(self) -> np.ndarray:
        return np.array(self.center)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.hypot(p[..., 0] - self.center[0], p[..., 1] - self.center[1]) < self.radius

    def distance_to_boundary(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.abs(self.radius - np.hypot(p[..., 0] - self.center[0], p[..., 1] - self.center[1]))

    def sample(self, n: int, clockwise: bool = False) -> np.ndarray:
        # half-step phase: an edge, not a vertex, is centered on each axis
        th = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        if clockwise:
            th = -th
        return np.asarray(self.center) + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def ray_exit(self, origin, dirs) -> np.ndarray:
        """Distance from interior ``origin`` along unit ``dirs`` to the circle."""
        q = np.asarray(origin, dtype=float) - np.asarray(self.center)
        b = dirs @ q
        c = q @ q - self.radius ** 2
        return -b + np.sqrt(b * b - c)

    def to_dict(self) -> dict:
        return {"disc": {"center": list(self.center), "radius": self.radius}}


@dataclass(frozen=True)
class Polygon:
    """Simple polygon; vertices must be listed counterclockwise."""

    vertices: tuple

    def __post_init__(self):
        v = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", v)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def signed_area(self) -> float:
        v = self.array
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    @property
    def centroid(self) -> np.ndarray:
        v = self.array
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a = 0.5 * cr.sum()
        return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * a)

    @property
    def diameter(self) -> float:
        v = self.array
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.array
        return v, np.roll(v, -1, axis=0)

    def is_simple(self) -> bool:
        a, b = self.edges()
        n = len(a)
        if n < 3:
            return False
        for i in range(n):
            j = np.arange(i + 2, n)
            if i == 0:
                j = j[j != n - 1]
            if len(j) == 0:
                continue
            if np.any(_segments_cross(a[i], b[i], a[j], b[j])):
                return False
        return True

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0][..., None], p[..., 1][..., None]
        a, b = self.edges()
        cond = (a[:, 1] > y) != (b[:, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
        return (np.sum(cond & (x < xint), axis=-1) % 2) == 1

    def distance_to_boundary(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        a, b = self.edges()
        ab = b - a
        ap = p[..., None, :] - a
        t = np.clip(np.sum(ap * ab, -1) / np.sum(ab * ab, -1), 0.0, 1.0)
        d = ap - t[..., None] * ab
        return np.sqrt(np.sum(d * d, -1)).min(axis=-1)

    def ray_exit(self, origin, dirs) -> np.ndarray:
        """Distance along each ray to the boundary; the polygon must be
        star-shaped with respect to ``origin``."""
        o = np.asarray(origin, dtype=float)
        a, b = self.edges()
        e = b - a
        ao = a - o
        den = dirs[:, 0:1] * e[None, :, 1] - dirs[:, 1:2] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ao[None, :, 0] * e[None, :, 1] - ao[None, :, 1] * e[None, :, 0]) / den
            s = (ao[None, :, 0] * dirs[:, 1:2] - ao[None, :, 1] * dirs[:, 0:1]) / den
        ok = (t > 0) & (s >= -1e-12) & (s <= 1 + 1e-12) & np.isfinite(t)
        t = np.where(ok, t, np.inf)
        hits = np.sum(ok & (s > 1e-9) & (s < 1 - 1e-9), axis=1)
        if np.any(hits > 1):
            raise GeometryError(f"polygon is not star-shaped about {tuple(o)}")
        return t.min(axis=1)

    def to_dict(self) -> dict:
        return {"polygon": {"vertices": [list(v) for v in self.vertices]}}


Outer = Union[Disc, Polygon]


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


@dataclass(frozen=True)
class Domain:
    """Outer region minus circular cores ``holes``."""

    outer: Outer
    holes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))

    @property
    def diameter(self) -> float:
        return self.outer.diameter

    @property
    def centroid(self) -> np.ndarray:
        return self.outer.centroid

    @property
    def area(self) -> float:
        return self.outer.area - sum(hl.area for hl in self.holes)

    def validate(self) -> "Domain":
        if isinstance(self.outer, Polygon):
            if len(self.outer.vertices) < 3:
                raise GeometryError("polygon needs at least three vertices")
            if self.outer.signed_area <= 0:
                raise GeometryError("polygon must be counterclockwise")
            if not self.outer.is_simple():
                raise GeometryError("polygon is self-intersecting")
        elif not self.outer.radius > 0:
            raise GeometryError("outer disc radius must be positive")
        for i, hl in enumerate(self.holes):
            if not hl.radius > 0:
                raise GeometryError(f"hole {i} has non-positive radius")
            c = np.asarray(hl.center)
            if not bool(self.outer.contains(c)) or not float(self.outer.distance_to_boundary(c)) > hl.radius:
                raise GeometryError(f"hole {i} touches or crosses the outer boundary")
            for j in range(i):
                other = self.holes[j]
                if math.dist(hl.center, other.center) <= hl.radius + other.radius:
                    raise GeometryError(f"holes {j} and {i} overlap")
        return self

    def without_holes(self) -> "Domain":
        return Domain(self.outer)

    def with_holes(self, centers, radius: float) -> "Domain":
        return Domain(self.outer, tuple(Disc(tuple(c), radius) for c in centers))

    def polygonized(self, h: float) -> "Domain":
        """Replace a disc outer boundary by the inscribed polygon that
        :func:`triangulate` would use at size ``h``."""
        if isinstance(self.outer, Polygon):
            return self
        n = max(MIN_HOLE_EDGES, math.ceil(2.0 * math.pi * self.outer.radius / h))
        return Domain(Polygon(tuple(map(tuple, self.outer.sample(n)))), self.holes)

    def contains(self, p) -> np.ndarray:
        inside = self.outer.contains(p)
        for hl in self.holes:
            inside &= ~hl.contains(p)
        return inside

    def clearance(self, p) -> np.ndarray:
        """Distance from interior points to the nearest boundary component."""
        d = self.outer.distance_to_boundary(p)
        for hl in self.holes:
            d = np.minimum(d, hl.distance_to_boundary(p))
        return d

    def to_dict(self) -> dict:
        return self.outer.to_dict()


def log_mean_radius(vertices, center) -> float:
    """Radius of the circle whose single-dislocation energy matches that of the
    polygon: ``exp(mean over angle of ln rho(phi))`` seen from ``center``."""
    v = np.asarray(vertices, dtype=float) - np.asarray(center, dtype=float)
    poly = Polygon(tuple(map(tuple, v if _signed_area(v) > 0 else v[::-1])))
    return math.exp(angular_mean(lambda dirs: np.log(poly.ray_exit((0.0, 0.0), dirs)),
                                 vertex_angles(poly.array)))


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def vertex_angles(v: np.ndarray, center=(0.0, 0.0)) -> np.ndarray:
    c = np.asarray(center, dtype=float)
    return np.sort(np.mod(np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0]), 2.0 * np.pi))


def angular_mean(func: Callable, breaks: Optional[np.ndarray] = None, order: int = 16,
                 panels: int = 64) -> float:
    """Mean of ``func(dirs)`` over the full circle of directions.

    ``breaks`` are angles where the integrand has kinks (polygon vertices);
    between breaks the integrand is analytic, so Gauss-Legendre panels are
    used.  Without breaks, ``panels`` equal panels are used.
    """
    if breaks is None or len(breaks) == 0:
        edges = np.linspace(0.0, 2.0 * np.pi, panels + 1)
    else:
        b = np.unique(np.mod(breaks, 2.0 * np.pi))
        edges = np.concatenate([b, [b[0] + 2.0 * np.pi]])
    x, w = gauss_legendre01(order)
    lo, hi = edges[:-1], edges[1:]
    phi = (lo[:, None] + (hi - lo)[:, None] * x[None, :]).ravel()
    wts = ((hi - lo)[:, None] * w[None, :]).ravel()
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    return float(np.dot(wts, func(dirs))) / (2.0 * np.pi)


# --------------------------------------------------------------------------
# meshes
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    tris: np.ndarray
    bedges: np.ndarray
    btags: np.ndarray
    h: float = float("nan")
    grade: float = float("nan")
    hole_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    hole_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_holes(self) -> int:
        return len(self.hole_radii)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.tris]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.tris]
        return np.linalg.norm(p[:, [1, 2, 0]] - p, axis=-1)

    @cached_property
    def bedge_normals(self) -> np.ndarray:
        d = self.nodes[self.bedges[:, 1]] - self.nodes[self.bedges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @cached_property
    def bedge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.nodes[self.bedges[:, 1]] - self.nodes[self.bedges[:, 0]], axis=-1)

    @cached_property
    def _bedge_index(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.bedges)}

    def tag_mask(self, tag) -> np.ndarray:
        return self.btags == parse_tag(tag)

    def tags(self) -> list[str]:
        return [tag_name(t) for t in np.unique(self.btags)]

    def hole_polygon(self, i: int) -> np.ndarray:
        """Vertices of hole ``i`` in counterclockwise order."""
        e = self.bedges[self.btags == i]
        nxt = {int(b): int(a) for a, b in e}
        start = int(e[0, 1])
        order = [start]
        while len(order) < len(e):
            order.append(nxt[order[-1]])
        return self.nodes[order]

    def outer_polygon(self) -> np.ndarray:
        e = self.bedges[self.btags == OUTER]
        nxt = {int(a): int(b) for a, b in e}
        start = int(e[0, 0])
        order = [start]
        while len(order) < len(e):
            order.append(nxt[order[-1]])
        return self.nodes[order]

    def audit(self) -> "Mesh":
        """Structural checks: positive areas, boundary edges each owned by one
        triangle, tags covering every boundary edge, holes resolved."""
        if np.any(self.signed_areas <= 0):
            raise MeshError("mesh has non-positive signed areas")
        t = self.tris
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.minimum(directed[:, 0], directed[:, 1]) * self.n_nodes + np.maximum(directed[:, 0], directed[:, 1])
        uniq, counts = np.unique(key, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge")
        boundary = set(uniq[counts == 1].tolist())
        be = self.bedges
        bkey = np.minimum(be[:, 0], be[:, 1]) * self.n_nodes + np.maximum(be[:, 0], be[:, 1])
        if set(bkey.tolist()) != boundary or len(bkey) != len(boundary):
            raise MeshError("tagged boundary edges do not match the mesh boundary")
        dset = {(int(a), int(b)) for a, b in directed}
        if not all((int(a), int(b)) in dset for a, b in be):
            raise MeshError("boundary edge orientation is inconsistent")
        for i in range(self.n_holes):
            if np.count_nonzero(self.btags == i) < MIN_HOLE_EDGES:
                raise MeshError(f"hole {i} resolved with fewer than {MIN_HOLE_EDGES} edges")
        return self

    @cached_property
    def _centroid_tree(self):
        from scipy.spatial import cKDTree
        return cKDTree(self.nodes[self.tris].mean(axis=1))

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates for each point.

        Points slightly outside the mesh snap to the nearest candidate
        triangle (barycentrics may then be marginally negative).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(16, len(self.tris))
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = np.atleast_2d(cand).reshape(len(pts), k)
        lam = self._barycentric(pts[:, None, :], cand)
        score = lam.min(axis=-1)
        best = np.argmax(score, axis=1)
        tri = cand[np.arange(len(pts)), best]
        lam_best = lam[np.arange(len(pts)), best]
        miss = score[np.arange(len(pts)), best] < -1e-9
        if np.any(miss):
            for idx in np.flatnonzero(miss):
                all_lam = self._barycentric(pts[idx][None, :], np.arange(len(self.tris))[None, :])[0]
                j = int(np.argmax(all_lam.min(axis=-1)))
                tri[idx] = j
                lam_best[idx] = all_lam[j]
        return tri, lam_best

    def _barycentric(self, pts, cand) -> np.ndarray:
        p = self.nodes[self.tris[cand]]
        a, b, c = p[..., 0, :], p[..., 1, :], p[..., 2, :]
        det = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
        l1 = ((pts[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (pts[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])) / det
        l2 = ((b[..., 0] - a[..., 0]) * (pts[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (pts[..., 0] - a[..., 0])) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def parse_tag(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    if tag == "OUTER":
        return OUTER
    if isinstance(tag, str) and tag.startswith("HOLE:"):
        return int(tag[5:])
    raise ValueError(f"unknown boundary tag {tag!r}")


def tag_name(tag: int) -> str:
    return "OUTER" if tag == OUTER else f"HOLE:{int(tag)}"


def sizing_function(domain: Domain, h: float, grade: float, growth: float = 0.25):
    """Target edge length: ``h`` far from holes, ``h * grade`` (and small
    enough to give each hole >= 16 edges and >= 4 elements across every gap)
    within three radii of a hole center, growing linearly beyond that."""
    centers = np.array([hl.center for hl in domain.holes]).reshape(-1, 2)
    radii = np.array([hl.radius for hl in domain.holes])
    near = []
    for i, hl in enumerate(domain.holes):
        gap = float(domain.outer.distance_to_boundary(np.asarray(hl.center))) - hl.radius
        for j, other in enumerate(domain.holes):
            if j != i:
                gap = min(gap, math.dist(hl.center, other.center) - hl.radius - other.radius)
        near.append(min(h * grade, 2.0 * math.pi * hl.radius / MIN_HOLE_EDGES, gap / 4.0))
    near = np.array(near)

    def size(p):
        p = np.asarray(p, dtype=float)
        s = np.full(p.shape[:-1], float(h))
        for c, r, sn in zip(centers, radii, near):
            dist = np.hypot(p[..., 0] - c[0], p[..., 1] - c[1])
            s = np.minimum(s, sn + growth * np.maximum(dist - 3.0 * r, 0.0))
        return s

    return size, near


def _sample_polygon(poly: Polygon, size) -> np.ndarray:
    pts = []
    for a, b in zip(*poly.edges()):
        probe = a + np.linspace(0.0, 1.0, 17)[:, None] * (b - a)
        s = float(size(probe).min())
        n = max(1, math.ceil(np.hypot(*(b - a)) / s - 1e-9))
        t = np.arange(n)[:, None] / n
        pts.append(a + t * (b - a))
    return np.concatenate(pts)


def triangulate(domain: Domain, h: float, grade: float = 0.25, max_passes: int = 20) -> Mesh:
    """Graded conforming triangulation of ``domain``.

    Disc boundaries become inscribed polygons: the outer disc with
    ``ceil(2 pi R / h)`` vertices (at least 16), each hole with enough vertices
    to meet the near-hole size.  ``Mesh.hole_radii`` stores the log-mean
    radius of each hole polygon, the radius to use in energy formulas.
    """
    domain.validate()
    if not h > 0 or not 0 < grade <= 1:
        raise GeometryError("need h > 0 and 0 < grade <= 1")
    size, near = sizing_function(domain, h, grade)

    if isinstance(domain.outer, Disc):
        outer_pts = domain.polygonized(h).outer.array
    else:
        outer_pts = _sample_polygon(domain.outer, size)
    verts = [outer_pts]
    segs = [np.c_[np.arange(len(outer_pts)), (np.arange(len(outer_pts)) + 1) % len(outer_pts)]]
    tags = [np.full(len(outer_pts), OUTER)]
    offset = len(outer_pts)
    hole_radii = []
    for i, hl in enumerate(domain.holes):
        n = max(MIN_HOLE_EDGES, math.ceil(2.0 * math.pi * hl.radius / near[i] - 1e-9))
        pts = hl.sample(n, clockwise=True)
        verts.append(pts)
        segs.append(offset + np.c_[np.arange(n), (np.arange(n) + 1) % n])
        tags.append(np.full(n, i))
        offset += n
        hole_radii.append(log_mean_radius(pts, hl.center))
    vertices = np.concatenate(verts)
    segments = np.concatenate(segs)
    markers = np.concatenate(tags) + 2
    pslg = {"vertices": vertices, "segments": segments, "segment_markers": markers}
    if domain.holes:
        pslg["holes"] = np.array([hl.center for hl in domain.holes])
    try:
        mesh = _triangle.triangulate(pslg, f"pq30zQa{0.433 * h * h:.17g}")
        for _ in range(max_passes):
            pts = mesh["vertices"]
            p = pts[mesh["triangles"]]
            e = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=-1).max(axis=1)
            s = size(p.mean(axis=1))
            bad = e > s
            if not np.any(bad):
                break
            area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                                - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
            mesh = _triangle.triangulate(
                {"vertices": pts, "triangles": mesh["triangles"], "segments": mesh["segments"],
                 "segment_markers": mesh["segment_markers"],
                 "triangle_max_area": np.where(bad, np.minimum(0.5 * area, 0.433 * s * s), -1.0)},
                "rpq30zQa",
            )
        else:
            raise MeshError(f"size refinement did not converge in {max_passes} passes")
    except MeshError:
        raise
    except Exception as exc:  # Triangle signals failure with generic errors
        raise MeshError(f"triangulation failed: {exc}") from exc

    nodes = np.asarray(mesh["vertices"], dtype=float)
    tris = np.asarray(mesh["triangles"], dtype=np.int64)
    if not np.allclose(nodes[: len(vertices)], vertices):
        raise MeshError("input vertices were not preserved")
    p = nodes[tris]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    nn = len(nodes)
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    dkeys = directed[:, 0] * nn + directed[:, 1]
    bedges = np.asarray(mesh["segments"], dtype=np.int64).copy()
    seg_tags = np.asarray(mesh["segment_markers"], dtype=np.int64).ravel() - 2
    if np.any(seg_tags < OUTER):
        raise MeshError("triangulation produced untagged boundary segments")
    forward = np.isin(bedges[:, 0] * nn + bedges[:, 1], dkeys)
    bedges[~forward] = bedges[~forward][:, ::-1]
    out = Mesh(
        nodes=nodes,
        tris=tris,
        bedges=bedges,
        btags=seg_tags,
        h=float(h),
        grade=float(grade),
        hole_centers=np.array([hl.center for hl in domain.holes], dtype=float).reshape(-1, 2),
        hole_radii=np.array(hole_radii, dtype=float),
    )
    return out.audit()


def outward_normal(mesh: Mesh, edge) -> np.ndarray:
    """Unit normal of a boundary edge pointing out of the meshed region.

    ``edge`` is either an index into ``mesh.bedges`` or a node pair in any
    order.  On hole boundaries the result points toward the hole center.
    """
    if isinstance(edge, (int, np.integer)):
        if not 0 <= edge < len(mesh.bedges):
            raise NotBoundary(f"no boundary edge with index {edge}")
        return mesh.bedge_normals[int(edge)].copy()
    a, b = (int(v) for v in edge)
    k = mesh._bedge_index.get((a, b), mesh._bedge_index.get((b, a)))
    if k is None:
        raise NotBoundary(f"edge {(a, b)} is not a boundary edge")
    return mesh.bedge_normals[k].copy()


# --------------------------------------------------------------------------
# quadrature over meshes
# --------------------------------------------------------------------------

def quadrature_points(mesh: Mesh, q: QuadratureSpec) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points ``(M*P, 2)`` and weights ``(M*P,)``."""
    lam, w = triangle_rule(q.order)
    p = mesh.nodes[mesh.tris]
    pts = np.einsum("qk,mkd->mqd", lam, p)
    wts = np.abs(mesh.signed_areas)[:, None] * w[None, :]
    return pts.reshape(-1, 2), wts.reshape(-1)


def _checked(values, pts) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    bad = ~np.isfinite(v)
    if np.any(bad):
        raise NonFiniteIntegrand(pts[np.flatnonzero(bad)[0]])
    return v


def integrate_domain(mesh: Mesh, integrand: Callable, q: QuadratureSpec = QuadratureSpec()) -> float:
    """Composite element-wise quadrature of ``integrand(points) -> values``."""
    pts, wts = quadrature_points(mesh, q)
    return float(np.sum(wts * _checked(integrand(pts), pts)))


def boundary_quadrature(mesh: Mesh, tag=None, q: QuadratureSpec = QuadratureSpec()):
    """Points, weights, normals, edge ids and local coordinates on boundary
    edges (all edges when ``tag`` is None)."""
    idx = np.arange(len(mesh.bedges)) if tag is None else np.flatnonzero(mesh.tag_mask(tag))
    if tag is not None and len(idx) == 0:
        raise NotBoundary(f"no boundary edges tagged {tag!r}")
    t, w = gauss_legendre01(q.order)
    a = mesh.nodes[mesh.bedges[idx, 0]]
    b = mesh.nodes[mesh.bedges[idx, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    wts = mesh.bedge_lengths[idx][:, None] * w[None, :]
    nrm = np.broadcast_to(mesh.bedge_normals[idx][:, None, :], pts.shape)
    return (pts.reshape(-1, 2), wts.reshape(-1), nrm.reshape(-1, 2),
            np.repeat(idx, len(t)), np.tile(t, len(idx)))


def integrate_boundary(mesh: Mesh, tag, integrand: Callable, q: QuadratureSpec = QuadratureSpec(),
                       with_normals: bool = False) -> float:
    """Line integral over the boundary edges carrying ``tag``.

    ``integrand(points)`` or, with ``with_normals``, ``integrand(points,
    normals)``.
    """
    pts, wts, nrm, _, _ = boundary_quadrature(mesh, tag, q)
    vals = integrand(pts, nrm) if with_normals else integrand(pts)
    return float(np.sum(wts * _checked(vals, pts)))


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

def write_mesh(path, mesh: Mesh, field: Optional[np.ndarray] = None) -> None:
    lines = ["qcmesh 1", f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"tris {len(mesh.tris)}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.tris]
    lines.append(f"bedges {len(mesh.bedges)}")
    lines += [f"{i} {j} {tag_name(t)}" for (i, j), t in zip(mesh.bedges, mesh.btags)]
    if field is not None:
        lines.append(f"field {len(field)}")
        lines += [f"{v:.17g}" for v in field]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> tuple[Mesh, Optional[np.ndarray]]:
    """Parse a ``qcmesh 1`` file; returns the mesh and the optional field."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "qcmesh 1":
        raise MeshError(f"unsupported mesh header {lines[0] if lines else ''!r}")
    pos = 1

    def section(name):
        nonlocal pos
        head = lines[pos].split()
        if head[0] != name or len(head) != 2:
            raise MeshError(f"expected section {name!r}, got {lines[pos]!r}")
        n = int(head[1])
        body = lines[pos + 1: pos + 1 + n]
        if len(body) != n:
            raise MeshError(f"section {name!r} is truncated")
        pos += n + 1
        return body

    nodes = np.array([[float(v) for v in ln.split()] for ln in section("nodes")]).reshape(-1, 2)
    tris = np.array([[int(v) for v in ln.split()] for ln in section("tris")], dtype=np.int64).reshape(-1, 3)
    be = [ln.split() for ln in section("bedges")]
    bedges = np.array([[int(a), int(b)] for a, b, _ in be], dtype=np.int64).reshape(-1, 2)
    btags = np.array([parse_tag(t) for _, _, t in be], dtype=np.int64)
    fld = None
    if pos < len(lines):
        fld = np.array([float(v) for v in section("field")])
    n_holes = int(btags.max()) + 1 if len(btags) and btags.max() >= 0 else 0
    mesh = Mesh(nodes=nodes, tris=tris, bedges=bedges, btags=btags)
    centers, radii = [], []
    for i in range(n_holes):
        poly = mesh.hole_polygon(i)
        c = Polygon(tuple(map(tuple, poly))).centroid
        centers.append(c)
        radii.append(log_mean_radius(poly, c))
    mesh = Mesh(nodes=nodes, tris=tris, bedges=bedges, btags=btags,
                hole_centers=np.array(centers).reshape(-1, 2), hole_radii=np.array(radii))
    return mesh, fld
