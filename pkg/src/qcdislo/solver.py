"""Corrective potentials: pure-Neumann Laplace problems on triangular meshes.

The corrective fields satisfy the coupled system

    div(C grad u + R grad w) = div(R grad u + K grad w) = 0

with prescribed normal stresses.  Because the modulus matrix is invertible
the system splits into two Laplace problems whose Neumann data are obtained
by applying its inverse to the coupled data.  Each Laplace problem is
discretised with continuous piecewise-linear elements and solved by
preconditioned conjugate gradients with the constant nullspace projected out.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleFlux, NotPositiveDefinite, SolverDiverged
from .fields import Dislocation, total_singular_field
from .geometry import OUTER, Disc, Domain, Mesh, boundary_quadrature, quadrature_points, write_mesh
from .material import MaterialConstants, validate
from .quadrature import QuadratureSpec

logger = logging.getLogger(__name__)

FLUX_QUADRATURE = QuadratureSpec(order=4)
COMPATIBILITY_TOL = 1e-8


# --------------------------------------------------------------------------
# finite-element scalar fields
# --------------------------------------------------------------------------

def element_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the three P1 shape functions on every triangle
    ``(M, 3, 2)`` and the triangle areas ``(M,)``."""
    p = mesh.nodes[mesh.tris]
    area = mesh.signed_areas
    # grad phi_k = rot90(opposite edge) / (2A)
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    g = np.stack([e0, e1, e2], axis=1)
    g = np.stack([-g[..., 1], g[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    return g, area


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    g, area = element_gradients(mesh)
    ke = np.einsum("mid,mjd->mij", g, g) * area[:, None, None]
    rows = np.repeat(mesh.tris, 3, axis=1).ravel()
    cols = np.tile(mesh.tris, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


@dataclass(eq=False)
class ScalarFieldFE:
    """Continuous piecewise-linear field on ``mesh``."""

    mesh: Mesh
    values: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    @cached_property
    def element_gradient(self) -> np.ndarray:
        g, _ = element_gradients(self.mesh)
        return np.einsum("mkd,mk->md", g, self.values[self.mesh.tris])

    @cached_property
    def nodal_gradient(self) -> np.ndarray:
        """Area-weighted average of the gradients of the adjacent triangles."""
        area = np.abs(self.mesh.signed_areas)
        acc = np.zeros((self.mesh.n_nodes, 2))
        wsum = np.zeros(self.mesh.n_nodes)
        for k in range(3):
            np.add.at(acc, self.mesh.tris[:, k], self.element_gradient * area[:, None])
            np.add.at(wsum, self.mesh.tris[:, k], area)
        return acc / wsum[:, None]

    def value_at(self, points) -> np.ndarray:
        tri, lam = self.mesh.locate(points)
        return np.einsum("pk,pk->p", lam, self.values[self.mesh.tris[tri]])

    def gradient_at(self, points, recovered: bool = True) -> np.ndarray:
        """Gradient at arbitrary points: linear interpolation of the recovered
        nodal gradient, or the raw piecewise-constant element gradient."""
        tri, lam = self.mesh.locate(points)
        if not recovered:
            return self.element_gradient[tri]
        return np.einsum("pk,pkd->pd", lam, self.nodal_gradient[self.mesh.tris[tri]])

    def mean_over(self, ball: Disc) -> float:
        pts, wts = quadrature_points(self.mesh, QuadratureSpec(order=2))
        inside = ball.contains(pts)
        if not np.any(inside):
            return float(self.value_at(np.asarray(ball.center)[None, :])[0])
        lam = _point_barycentrics(self.mesh, 2)
        vals = np.einsum("qk,mk->mq", lam, self.values[self.mesh.tris]).ravel()
        return float(np.sum(wts[inside] * vals[inside]) / np.sum(wts[inside]))

    def shifted(self, c: float) -> "ScalarFieldFE":
        return ScalarFieldFE(self.mesh, self.values + c, self.residual, self.iterations)


def _point_barycentrics(mesh: Mesh, order: int) -> np.ndarray:
    from .quadrature import triangle_rule
    return triangle_rule(order)[0]


# --------------------------------------------------------------------------
# Neumann problems
# --------------------------------------------------------------------------

FluxFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class NeumannProblem:
    """``-Lap v = 0`` with ``dv/dn = flux(points, normals, tags)`` and zero mean
    over ``ball``."""

    mesh: Mesh
    flux: FluxFunction
    ball: Optional[Disc] = None


def neumann_load(mesh: Mesh, flux: FluxFunction, q: QuadratureSpec = FLUX_QUADRATURE):
    """Load vector ``b_a = oint g phi_a ds`` and compatibility diagnostics
    ``(total flux, boundary measure, max |g|)``."""
    pts, wts, nrm, eid, t = boundary_quadrature(mesh, None, q)
    g = np.asarray(flux(pts, nrm, mesh.btags[eid]), dtype=float)
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.bedges[eid, 0], wts * g * (1.0 - t))
    np.add.at(b, mesh.bedges[eid, 1], wts * g * t)
    total = float(np.sum(wts * g))
    measure = float(mesh.bedge_lengths.sum())
    gmax = float(np.max(np.abs(g))) if len(g) else 0.0
    return b, total, measure, gmax


def pcg_projected(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-10, maxiter: Optional[int] = None,
                  x0: Optional[np.ndarray] = None) -> tuple[np.ndarray, float, int]:
    """Jacobi-preconditioned CG for a symmetric positive semidefinite ``A``
    whose nullspace is the constant vector.

    Residuals and preconditioned residuals are projected onto the orthogonal
    complement of the constants at every iteration.  Returns the solution,
    the final relative residual and the iteration count.
    """
    n = A.shape[0]
    maxiter = maxiter or max(2000, 20 * int(math.sqrt(n)) * 10)

    def proj(v):
        return v - v.mean()

    b = proj(np.asarray(b, dtype=float))
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else proj(np.asarray(x0, dtype=float))
    if bnorm == 0.0:
        return x, 0.0, 0
    dinv = 1.0 / A.diagonal()
    r = proj(b - A @ x)
    z = proj(dinv * r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        r = proj(r)
        rel = float(np.linalg.norm(r)) / bnorm
        if rel <= tol:
            x = proj(x)
            true_rel = float(np.linalg.norm(proj(b - A @ x))) / bnorm
            if true_rel <= 10.0 * tol:
                return x, true_rel, it
            r = proj(b - A @ x)
        z = proj(dinv * r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(f"CG did not reach relative residual {tol:g} in {maxiter} iterations (at {rel:.3g})")


def solve_neumann(p: NeumannProblem, tol: float = 1e-10, A: Optional[sp.spmatrix] = None) -> ScalarFieldFE:
    """Discrete harmonic function with the prescribed normal derivative.

    Raises :class:`IncompatibleFlux` when the data's total flux exceeds
    ``1e-8 * boundary measure * max|g|``.
    """
    b, total, measure, gmax = neumann_load(p.mesh, p.flux)
    if abs(total) > COMPATIBILITY_TOL * measure * gmax:
        raise IncompatibleFlux(f"total boundary flux {total:.6g} does not vanish")
    A = assemble_stiffness(p.mesh) if A is None else A
    x, rel, its = pcg_projected(A, b, tol)
    field_ = ScalarFieldFE(p.mesh, x, rel, its)
    if p.ball is not None:
        field_ = field_.shifted(-field_.mean_over(p.ball))
    return field_


# --------------------------------------------------------------------------
# coupled corrective problems
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Decoupling:
    """Inverse of the modulus matrix and its 2-norm condition number."""

    inverse: np.ndarray
    condition: float


def decouple(m: MaterialConstants) -> Decoupling:
    validate(m)
    M = m.matrix
    inv = np.array([[m.K, -m.R], [-m.R, m.C]]) / m.determinant
    return Decoupling(inverse=inv, condition=float(np.linalg.cond(M)))


@dataclass
class CorrectiveSolution:
    u: ScalarFieldFE
    w: ScalarFieldFE
    ball: Optional[Disc] = None
    coupled_residual: float = 0.0
    stiffness: Optional[sp.spmatrix] = field(default=None, repr=False)
    loads: Optional[tuple] = field(default=None, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.u.mesh


def singular_traction(m: MaterialConstants, ds: Sequence[Dislocation], pts, nrm, tags, scale=1.0):
    """Normal phonon and phason stresses of the singular superposition on the
    boundary: the full sum on OUTER, every dislocation except ``i`` on HOLE i.
    """
    pts = np.asarray(pts, dtype=float)
    su = np.zeros(len(pts))
    sw = np.zeros(len(pts))
    tags = np.asarray(tags)
    for tag in np.unique(tags):
        sel = tags == tag
        skip = None if tag == OUTER else int(tag)
        u, w = total_singular_field(ds, pts[sel], scale, skip=skip)
        un = np.einsum("ij,ij->i", u, nrm[sel])
        wn = np.einsum("ij,ij->i", w, nrm[sel])
        su[sel] = m.C * un + m.R * wn
        sw[sel] = m.R * un + m.K * wn
    return su, sw


def default_ball(domain: Domain, ds: Sequence[Dislocation], eps: float = 0.0) -> Disc:
    """Largest ball centered at the domain centroid that stays inside the outer
    boundary and ``3 eps`` away from every core (a ``2 eps`` margin beyond the
    core radius).  When a core sits at or near the centroid, the best center
    on a coarse grid of interior points is used instead."""

    def clearance(c):
        c = np.atleast_2d(c)
        r = domain.outer.distance_to_boundary(c) * domain.outer.contains(c)
        for d in ds:
            r = np.minimum(r, np.hypot(c[:, 0] - d.position[0], c[:, 1] - d.position[1]) - 3.0 * eps)
        return r

    c0 = np.asarray(domain.centroid, dtype=float)
    r0 = float(clearance(c0)[0])
    if r0 >= 0.1 * float(domain.outer.distance_to_boundary(c0)):
        return Disc(tuple(c0), r0)
    lo = c0 - domain.diameter
    g = np.linspace(0.0, 1.0, 61)
    X, Y = np.meshgrid(lo[0] + 2 * domain.diameter * g, lo[1] + 2 * domain.diameter * g)
    cand = np.c_[X.ravel(), Y.ravel()]
    cl = clearance(cand)
    k = int(np.argmax(cl))
    return Disc(tuple(cand[k]), float(cl[k]))


def _solve_corrective(mesh: Mesh, ds: Sequence[Dislocation], m: MaterialConstants, ball: Disc,
                      tol: float, scale: float) -> CorrectiveSolution:
    dec = decouple(m)
    inv = dec.inverse

    def data(which):
        def flux(pts, nrm, tags):
            su, sw = singular_traction(m, ds, pts, nrm, tags, scale)
            return -(inv[which, 0] * su + inv[which, 1] * sw)
        return flux

    A = assemble_stiffness(mesh)
    u = solve_neumann(NeumannProblem(mesh, data(0), ball), tol, A)
    w = solve_neumann(NeumannProblem(mesh, data(1), ball), tol, A)
    sol = CorrectiveSolution(u=u, w=w, ball=ball, stiffness=A)
    sol.coupled_residual = coupled_residual(m, ds, sol, scale)
    logger.debug("corrective solve: %d nodes, CG its %d/%d, coupled residual %.3g",
                 mesh.n_nodes, u.iterations, w.iterations, sol.coupled_residual)
    return sol


def coupled_residual(m: MaterialConstants, ds: Sequence[Dislocation], sol: CorrectiveSolution,
                     scale: float = 1.0) -> float:
    """Relative residual of the ORIGINAL coupled weak form at ``(u, w)``.

    Rows: ``int (C grad u + R grad w).grad phi + oint phi sigma_s.n`` and the
    phason analogue, with ``sigma_s`` the singular normal stresses.
    """
    mesh = sol.mesh
    A = sol.stiffness if sol.stiffness is not None else assemble_stiffness(mesh)

    def load(which):
        def flux(pts, nrm, tags):
            return singular_traction(m, ds, pts, nrm, tags, scale)[which]
        return neumann_load(mesh, flux)[0]

    bs, br = load(0), load(1)
    Au = A @ sol.u.values
    Aw = A @ sol.w.values
    r1 = m.C * Au + m.R * Aw + bs
    r2 = m.R * Au + m.K * Aw + br
    r1 -= r1.mean()
    r2 -= r2.mean()
    ref = math.hypot(np.linalg.norm(bs - bs.mean()), np.linalg.norm(br - br.mean()))
    res = math.hypot(np.linalg.norm(r1), np.linalg.norm(r2))
    return res / ref if ref > 0 else res


def corrective_fields_limit(domain: Domain, ds: Sequence[Dislocation], m: MaterialConstants, mesh: Mesh,
                            tol: float = 1e-10, ball: Optional[Disc] = None) -> CorrectiveSolution:
    """Corrective potentials on the whole domain (no cores removed)."""
    if mesh.n_holes:
        raise ValueError("the limit problem needs a mesh without holes")
    for d in ds:
        if not bool(domain.outer.contains(d.xy)):
            raise ValueError(f"dislocation at {d.position} is outside the domain")
    ball = ball or default_ball(domain, ds, 0.0)
    return _solve_corrective(mesh, ds, m, ball, tol, domain.diameter)


def corrective_fields_eps(domain: Domain, ds: Sequence[Dislocation], m: MaterialConstants, mesh: Mesh,
                          tol: float = 1e-10, ball: Optional[Disc] = None) -> CorrectiveSolution:
    """Corrective potentials on the domain with a core removed around every
    dislocation; hole ``i`` of ``mesh`` must surround ``ds[i]``."""
    if mesh.n_holes != len(ds):
        raise ValueError("mesh must have exactly one hole per dislocation")
    for i, d in enumerate(ds):
        if math.dist(tuple(mesh.hole_centers[i]), d.position) > 1e-12 * domain.diameter:
            raise ValueError(f"hole {i} is not centered on dislocation {i}")
    eps = float(mesh.hole_radii.max()) if mesh.n_holes else 0.0
    ball = ball or default_ball(domain, ds, eps)
    return _solve_corrective(mesh, ds, m, ball, tol, domain.diameter)


def corrective_functional(m: MaterialConstants, ds: Sequence[Dislocation], mesh: Mesh,
                          u: np.ndarray, w: np.ndarray, scale: float = 1.0,
                          A: Optional[sp.spmatrix] = None) -> float:
    """Discrete functional ``J[grad u, grad w] + boundary work`` minimised by
    the corrective potentials (hole terms use the other dislocations only)."""
    A = assemble_stiffness(mesh) if A is None else A

    def load(which):
        def flux(pts, nrm, tags):
            return singular_traction(m, ds, pts, nrm, tags, scale)[which]
        return neumann_load(mesh, flux)[0]

    Au, Aw = A @ u, A @ w
    energy = 0.5 * (m.C * (u @ Au) + m.K * (w @ Aw) + 2.0 * m.R * (u @ Aw))
    return float(energy + u @ load(0) + w @ load(1))


def dump_solution(path, sol: CorrectiveSolution, which: str = "u") -> None:
    """Write the mesh plus nodal values of one potential in the text format."""
    fld = sol.u if which == "u" else sol.w
    write_mesh(path, sol.mesh, fld.values)
