"""Energies of dislocation systems: the regularised total energy on the domain
with cores removed, the logarithmic core energy, the renormalised pieces
(self, interaction, elastic) and fits of the expansion

    J_eps = E0 ln(1/eps) + F + o(1).

Singular single-dislocation densities scale like ``1/rho^2`` about their own
core and are integrated in polar coordinates centred there; everything else
goes through element-wise mesh quadrature.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BadCutoff, BadRadii, DegenerateFit
from .fields import Dislocation, singular_field
from .geometry import (Disc, Domain, Mesh, Polygon, angular_mean, quadrature_points, triangulate,
                       vertex_angles)
from .material import MaterialConstants, energy_density, validate
from .quadrature import QuadratureSpec, gauss_legendre01
from .solver import CorrectiveSolution, corrective_fields_eps, corrective_fields_limit

logger = logging.getLogger(__name__)

MESH_QUADRATURE = QuadratureSpec(order=4)
INTERACTION_QUADRATURE = QuadratureSpec(order=6)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def core_energy(m: MaterialConstants, ds: Sequence[Dislocation]) -> float:
    """Coefficient of ln(1/eps): sum of ``(C bu^2 + K bw^2 + 2R bu bw) / 4 pi``."""
    return sum(m.burgers_form(d.b_u, d.b_w) for d in ds) / (4.0 * math.pi)


def annulus_energy_exact(m: MaterialConstants, b_u: float, b_w: float, r: float, eps: float) -> float:
    """Energy of one dislocation in the annulus ``eps < |x - d| < r``."""
    if not 0 < eps < r:
        raise BadRadii(f"need 0 < eps < r (eps={eps!r}, r={r!r})")
    return m.burgers_form(b_u, b_w) * math.log(r / eps) / (4.0 * math.pi)


def interaction_coefficient(m: MaterialConstants, a: Dislocation, b: Dislocation) -> float:
    """Prefactor of ln(1/|d_a - d_b|) in the pair interaction energy."""
    return m.cross_form(a.b_u, a.b_w, b.b_u, b.b_w) / (2.0 * math.pi)


# --------------------------------------------------------------------------
# polar quadrature
# --------------------------------------------------------------------------

def _ray_function(shape, center) -> tuple[Callable, Optional[np.ndarray]]:
    """Distance-to-boundary along rays from ``center`` and kink angles."""
    if isinstance(shape, Disc):
        return (lambda dirs: shape.ray_exit(center, dirs)), None
    verts = shape.array if isinstance(shape, Polygon) else np.asarray(shape, dtype=float)
    poly = shape if isinstance(shape, Polygon) else Polygon(tuple(map(tuple, verts)))
    return (lambda dirs: poly.ray_exit(center, dirs)), vertex_angles(verts, center)


def polar_integral(center, density: Callable, outer, inner=None, n_ang: int = 12, n_rad: int = 12,
                   log_radial: bool = False) -> float:
    """Integral of ``density(points)`` over the star-shaped region between
    ``inner`` and ``outer`` as seen from ``center``.

    ``outer``/``inner`` are a :class:`Disc`, a :class:`Polygon` or a vertex
    array; ``inner`` may also be a float radius or ``None`` (the center
    itself).  With ``log_radial`` the radial Gauss rule is applied in
    ``ln rho``, which integrates ``1/rho^2`` densities exactly.
    """
    c = np.asarray(center, dtype=float)
    rho_out, breaks = _ray_function(outer, c)
    if inner is None or isinstance(inner, (int, float)):
        r_in = float(inner or 0.0)
        rho_in = lambda dirs: np.full(len(dirs), r_in)  # noqa: E731
    else:
        rho_in, b2 = _ray_function(inner, c)
        breaks = b2 if breaks is None else (breaks if b2 is None else np.concatenate([breaks, b2]))
    x, w = gauss_legendre01(n_rad)

    def radial(dirs):
        lo, hi = rho_in(dirs), rho_out(dirs)
        if log_radial:
            s_lo, s_hi = np.log(lo), np.log(hi)
            s = s_lo[:, None] + (s_hi - s_lo)[:, None] * x[None, :]
            rho = np.exp(s)
            jac = (s_hi - s_lo)[:, None] * w[None, :] * rho * rho
        else:
            rho = lo[:, None] + (hi - lo)[:, None] * x[None, :]
            jac = (hi - lo)[:, None] * w[None, :] * rho
        pts = c + rho[..., None] * dirs[:, None, :]
        vals = np.asarray(density(pts.reshape(-1, 2))).reshape(rho.shape)
        return np.sum(jac * vals, axis=1)

    return 2.0 * math.pi * angular_mean(radial, breaks, order=n_ang)


def _self_density(m: MaterialConstants, d: Dislocation, scale: float) -> Callable:
    def dens(p):
        u, w = singular_field(d, p, scale)
        return energy_density(m, u, w)
    return dens


def _pair_density(m: MaterialConstants, a: Dislocation, b: Dislocation, scale: float) -> Callable:
    def dens(p):
        ua, wa = singular_field(a, p, scale)
        ub, wb = singular_field(b, p, scale)
        return (m.C * np.sum(ua * ub, -1) + m.K * np.sum(wa * wb, -1)
                + m.R * (np.sum(ua * wb, -1) + np.sum(ub * wa, -1)))
    return dens


# --------------------------------------------------------------------------
# renormalised pieces
# --------------------------------------------------------------------------

def _check_inside(domain: Domain, ds: Sequence[Dislocation]):
    for d in ds:
        if not bool(domain.outer.contains(d.xy)):
            raise ValueError(f"dislocation at {d.position} lies outside the domain")


def max_cutoff(domain: Domain, ds: Sequence[Dislocation]) -> float:
    """Half the smallest pairwise distance or distance to the boundary."""
    lim = min(float(domain.outer.distance_to_boundary(d.xy)) for d in ds)
    for a, b in combinations(ds, 2):
        lim = min(lim, math.dist(a.position, b.position))
    return 0.5 * lim


def f_self(m: MaterialConstants, ds: Sequence[Dislocation], domain: Domain, r: float,
           n_ang: int = 12, n_rad: int = 12) -> float:
    """Self energies outside radius-``r`` balls plus the ``ln r`` counterterm.

    The result does not depend on ``r`` (within ``r <=`` :func:`max_cutoff`).
    """
    validate(m)
    if not ds:
        return 0.0
    _check_inside(domain, ds)
    if not 0 < r <= max_cutoff(domain, ds) * (1.0 + 1e-12):
        raise BadCutoff(f"cutoff r={r!r} must lie in (0, {max_cutoff(domain, ds)!r}]")
    scale = domain.diameter
    total = 0.0
    for d in ds:
        total += polar_integral(d.xy, _self_density(m, d, scale), domain.outer, r,
                                n_ang=n_ang, n_rad=n_rad, log_radial=True)
        total += m.burgers_form(d.b_u, d.b_w) * math.log(r) / (4.0 * math.pi)
    return total


def interaction_mesh(domain: Domain, ds: Sequence[Dislocation], h: Optional[float] = None,
                     grade: float = 0.25, patch_fraction: float = 0.05) -> Mesh:
    """Mesh of the domain with small polygonal patches cut out around every
    dislocation, graded toward them."""
    delta = min(math.dist(a.position, b.position) for a, b in combinations(ds, 2))
    rp = patch_fraction * delta
    h = h or domain.diameter / 40.0
    return triangulate(domain.without_holes().with_holes([d.position for d in ds], rp), h, grade)


def f_int(m: MaterialConstants, ds: Sequence[Dislocation], domain: Domain, h: Optional[float] = None,
          grade: float = 0.25, q: QuadratureSpec = INTERACTION_QUADRATURE,
          patch_fraction: float = 0.05, mesh: Optional[Mesh] = None) -> float:
    """Sum over unordered pairs of the cross-term energy integrated over the
    domain.

    The integrand is unbounded (``1/|x - d_i|``) at every core, so the mesh
    excludes a polygonal patch of radius ``patch_fraction * delta`` around each
    dislocation and grades toward it; each patch is integrated in polar
    coordinates about its dislocation, where ``rho * integrand`` is smooth.
    """
    validate(m)
    if len(ds) < 2:
        return 0.0
    _check_inside(domain, ds)
    scale = domain.diameter
    mesh = mesh or interaction_mesh(domain, ds, h, grade, patch_fraction)
    pts, wts = quadrature_points(mesh, q)
    dens = [(_pair_density(m, a, b, scale)) for a, b in combinations(ds, 2)]
    total = 0.0
    for g in dens:
        total += float(np.sum(wts * g(pts)))
    for i, d in enumerate(ds):
        poly = mesh.hole_polygon(i)
        for g in dens:
            total += polar_integral(d.xy, g, poly, None, n_ang=q.order + 2, n_rad=q.order + 2)
    return total


def f_elastic(m: MaterialConstants, ds: Sequence[Dislocation], domain: Domain,
              corrective: CorrectiveSolution, q: QuadratureSpec = QuadratureSpec(order=4)) -> float:
    """Energy of the corrective gradients plus the boundary work of the
    singular stresses against the corrective potentials."""
    validate(m)
    mesh = corrective.mesh
    gu = corrective.u.element_gradient
    gw = corrective.w.element_gradient
    bulk = float(np.sum(np.abs(mesh.signed_areas) * energy_density(m, gu, gw)))
    from .geometry import boundary_quadrature
    pts, wts, nrm, eid, t = boundary_quadrature(mesh, "OUTER", q)
    e = mesh.bedges[eid]
    u0 = (1.0 - t) * corrective.u.values[e[:, 0]] + t * corrective.u.values[e[:, 1]]
    w0 = (1.0 - t) * corrective.w.values[e[:, 0]] + t * corrective.w.values[e[:, 1]]
    work = 0.0
    scale = domain.diameter
    for d in ds:
        ui, wi = singular_field(d, pts, scale)
        s = np.einsum("ij,ij->i", m.C * ui + m.R * wi, nrm)
        r = np.einsum("ij,ij->i", m.K * wi + m.R * ui, nrm)
        work += float(np.sum(wts * (u0 * s + w0 * r)))
    return bulk + work


def total_energy_eps(m: MaterialConstants, ds: Sequence[Dislocation], mesh: Mesh,
                     corrective: Optional[CorrectiveSolution] = None,
                     q: QuadratureSpec = MESH_QUADRATURE, scale: float = 1.0,
                     subtract_singular: bool = True) -> float:
    """Energy of ``sum u_i + grad u_eps`` over the meshed domain with cores.

    With ``subtract_singular`` each dislocation's own ``1/rho^2`` density is
    integrated in polar coordinates over the exact meshed region (outer
    polygon minus all hole polygons) and only the remaining, milder part of
    the density goes through mesh quadrature.
    """
    validate(m)
    pts, wts = quadrature_points(mesh, q)
    u = np.zeros_like(pts)
    w = np.zeros_like(pts)
    self_part = np.zeros(len(pts))
    for d in ds:
        ui, wi = singular_field(d, pts, scale)
        u += ui
        w += wi
        if subtract_singular:
            self_part += energy_density(m, ui, wi)
    if corrective is not None:
        per_tri = len(pts) // len(mesh.tris)
        u += np.repeat(corrective.u.element_gradient, per_tri, axis=0)
        w += np.repeat(corrective.w.element_gradient, per_tri, axis=0)
    total = float(np.sum(wts * (energy_density(m, u, w) - self_part)))
    if not subtract_singular or not ds:
        return total
    outer = mesh.outer_polygon()
    holes = [mesh.hole_polygon(i) for i in range(mesh.n_holes)]
    centers = mesh.hole_centers
    for d in ds:
        dens = _self_density(m, d, scale)
        own = [k for k in range(mesh.n_holes) if np.allclose(centers[k], d.xy, atol=1e-12 * scale)]
        inner = holes[own[0]] if own else None
        if inner is None:
            raise ValueError(f"no hole of the mesh surrounds dislocation {d.position}")
        total += polar_integral(d.xy, dens, outer, inner, log_radial=True)
        for k in range(mesh.n_holes):
            if k != own[0]:
                total -= polar_integral(centers[k], dens, holes[k], None)
    return total


# --------------------------------------------------------------------------
# fits and studies
# --------------------------------------------------------------------------

@dataclass
class FitResult:
    E0: float
    F: float
    residual: float


def asymptotic_fit(samples: Sequence[tuple[float, float]]) -> FitResult:
    """Least-squares fit of ``J = a ln(1/eps) + b``; residual is the largest
    absolute deviation."""
    eps = np.array([s[0] for s in samples], dtype=float)
    J = np.array([s[1] for s in samples], dtype=float)
    if len(eps) < 3 or len(np.unique(eps)) != len(eps):
        raise DegenerateFit("need at least three samples with distinct eps")
    X = np.c_[np.log(1.0 / eps), np.ones_like(eps)]
    (a, b), *_ = np.linalg.lstsq(X, J, rcond=None)
    return FitResult(E0=float(a), F=float(b), residual=float(np.max(np.abs(X @ [a, b] - J))))


@dataclass
class EnergyBreakdown:
    E0: float
    F_self: float
    F_int: float
    F_elastic: float
    F: float = field(init=False)
    J_eps: dict = field(default_factory=dict)
    fit: Optional[FitResult] = None
    remainders: dict = field(default_factory=dict)
    committed_eps: dict = field(default_factory=dict)
    meshes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.F = self.F_self + self.F_int + self.F_elastic


def renormalized_energy(m: MaterialConstants, ds: Sequence[Dislocation], domain: Domain,
                        h: float = 0.05, grade: float = 0.25, r: Optional[float] = None,
                        limit_mesh: Optional[Mesh] = None, tol: float = 1e-10,
                        corrective: Optional[CorrectiveSolution] = None) -> EnergyBreakdown:
    """E0 and the three renormalised pieces for one configuration."""
    validate(m)
    r = r if r is not None else 0.5 * max_cutoff(domain, ds)
    fs = f_self(m, ds, domain, r)
    fi = f_int(m, ds, domain, h=h, grade=grade)
    if corrective is None:
        limit_mesh = limit_mesh or triangulate(domain.without_holes(), h, grade)
        corrective = corrective_fields_limit(domain, ds, m, limit_mesh, tol)
    fe = f_elastic(m, ds, domain, corrective)
    return EnergyBreakdown(E0=core_energy(m, ds), F_self=fs, F_int=fi, F_elastic=fe)


def regularized_energy(m: MaterialConstants, ds: Sequence[Dislocation], domain: Domain, eps: float,
                       h: float, grade: float = 0.25, tol: float = 1e-10) -> tuple[float, float, Mesh]:
    """Total energy of the minimiser with radius-``eps`` cores removed.

    Returns ``(J_eps, committed eps, mesh)``; the committed radius is the
    log-mean radius of the hole polygons.
    """
    holed = domain.without_holes().with_holes([d.position for d in ds], eps)
    mesh = triangulate(holed, h, grade)
    sol = corrective_fields_eps(holed, ds, m, mesh, tol)
    J = total_energy_eps(m, ds, mesh, sol, scale=domain.diameter)
    return J, float(np.mean(mesh.hole_radii)), mesh


def energy_sweep(m: MaterialConstants, ds: Sequence[Dislocation], domain: Domain,
                 eps_ladder: Sequence[float] = (0.1, 0.05, 0.025, 0.0125), h: float = 0.02,
                 grade: float = 0.25, tol: float = 1e-10, threads: int = 1,
                 keep_meshes: bool = False) -> EnergyBreakdown:
    """Regularised energies over a ladder of core radii, the renormalised
    energy, the asymptotic fit and the remainders ``J - E0 ln(1/eps) - F``.

    A disc outer boundary is replaced by its meshing polygon first so that
    every quantity refers to the same region.
    """
    validate(m)
    dom = domain.polygonized(h)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        jobs = [pool.submit(regularized_energy, m, ds, dom, e, h, grade, tol) for e in eps_ladder]
        base = renormalized_energy(m, ds, dom, h=h, grade=grade, tol=tol)
        results = [j.result() for j in jobs]
    base.J_eps = {float(e): J for e, (J, _, _) in zip(eps_ladder, results)}
    committed = [ec for (_, ec, _) in results]
    base.fit = asymptotic_fit([(ec, J) for (J, ec, _) in results])
    base.remainders = {
        float(e): abs(J - base.E0 * math.log(1.0 / ec) - base.F)
        for e, (J, ec, _) in zip(eps_ladder, results)
    }
    base.committed_eps = {float(e): ec for e, ec in zip(eps_ladder, committed)}
    if keep_meshes:
        base.meshes = {float(e): mesh for e, (_, _, mesh) in zip(eps_ladder, results)}
    return base


@dataclass
class InteractionFit:
    slope: float
    expected: float
    deviation: float
    separations: list
    values: list


def pair_at(template: Sequence[Dislocation], center, delta: float, axis=(1.0, 0.0)) -> list[Dislocation]:
    """Place two dislocations symmetrically about ``center`` at distance
    ``delta`` along ``axis`` with the Burgers moduli of ``template``."""
    c = np.asarray(center, dtype=float)
    a = np.asarray(axis, dtype=float) / np.hypot(*axis)
    p1, p2 = c - 0.5 * delta * a, c + 0.5 * delta * a
    return [Dislocation(tuple(p1), template[0].b_u, template[0].b_w),
            Dislocation(tuple(p2), template[1].b_u, template[1].b_w)]


def interaction_log_fit(m: MaterialConstants, pair: Sequence[Dislocation], domain: Domain,
                        separations: Sequence[float] = (0.2, 0.1, 0.05), center=None,
                        h: Optional[float] = None, threads: int = 1) -> InteractionFit:
    """Slope of the pair interaction energy against ln(1/delta)."""
    validate(m)
    center = domain.centroid if center is None else np.asarray(center, dtype=float)
    ladder = [float(s) for s in separations]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        vals = list(pool.map(lambda s: f_int(m, pair_at(pair, center, s), domain, h=h), ladder))
    slope = float(np.polyfit(np.log(1.0 / np.array(ladder)), vals, 1)[0])
    expected = interaction_coefficient(m, pair[0], pair[1])
    dev = abs(slope - expected) / abs(expected) if expected != 0 else abs(slope)
    return InteractionFit(slope=slope, expected=expected, deviation=dev, separations=ladder, values=vals)
