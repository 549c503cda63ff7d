"""Eshelby stress and Peach-Koehler forces on dislocations.

The force on dislocation ``k`` is the negative gradient of the renormalised
energy with respect to its position.  It is evaluated as the flux of the
energy-momentum tensor through a small contour around the core, with the
singular fields taken analytically and the corrective gradients from the
finite-element solution; a central finite difference of the full energy
pipeline serves as an independent check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .energy import EnergyBreakdown, renormalized_energy
from .errors import BadContour
from .fields import Dislocation, total_singular_field
from .geometry import Domain, Mesh, triangulate
from .material import MaterialConstants, energy_density, validate
from .quadrature import gauss_legendre01
from .solver import CorrectiveSolution, corrective_fields_limit


def eshelby(m: MaterialConstants, u0, w0) -> np.ndarray:
    """Eshelby tensor ``-(f I - T)`` with ``T = C u(x)u + K w(x)w + R(u(x)w + w(x)u)``.

    Broadcasts over leading axes of ``(..., 2)`` inputs and returns
    ``(..., 2, 2)``.
    """
    validate(m)
    u = np.asarray(u0, dtype=float)
    w = np.asarray(w0, dtype=float)
    f = np.asarray(energy_density(m, u, w))
    # dyads first, moduli after: keeps T bitwise symmetric
    uu = u[..., :, None] * u[..., None, :]
    ww = w[..., :, None] * w[..., None, :]
    uw = u[..., :, None] * w[..., None, :] + w[..., :, None] * u[..., None, :]
    T = m.C * uu + m.K * ww + m.R * uw
    return T - f[..., None, None] * np.eye(2)


@dataclass
class System:
    """Dislocations in a domain together with their limit corrective fields.

    A disc boundary is replaced by its meshing polygon so that every energy
    and force refers to the same region.
    """

    material: MaterialConstants
    dislocations: Sequence[Dislocation]
    domain: Domain
    h: float = 0.05
    grade: float = 0.25
    tol: float = 1e-10
    mesh: Optional[Mesh] = field(default=None, repr=False)

    def __post_init__(self):
        validate(self.material)
        self.dislocations = list(self.dislocations)
        self.region = self.domain.without_holes().polygonized(self.h)
        if self.mesh is None:
            self.mesh = triangulate(self.region, self.h, self.grade)

    @cached_property
    def corrective(self) -> CorrectiveSolution:
        return corrective_fields_limit(self.region, self.dislocations, self.material, self.mesh, self.tol)

    @property
    def scale(self) -> float:
        return self.region.diameter

    def fields(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Limit phonon and phason fields at ``points``."""
        pts = np.asarray(points, dtype=float)
        u, w = total_singular_field(self.dislocations, pts, self.scale)
        return u + self.corrective.u.gradient_at(pts), w + self.corrective.w.gradient_at(pts)

    def moved(self, k: int, dx: float, dy: float) -> "System":
        """Same system (and mesh) with dislocation ``k`` displaced."""
        ds = list(self.dislocations)
        ds[k] = ds[k].moved(dx, dy)
        return replace(self, dislocations=ds, mesh=self.mesh)

    def energy(self) -> EnergyBreakdown:
        return renormalized_energy(self.material, self.dislocations, self.region, h=self.h,
                                   grade=self.grade, corrective=self.corrective)

    def contour_bound(self, k: int) -> float:
        """Half the distance from ``d_k`` to the boundary or the nearest other core."""
        d = self.dislocations[k]
        lim = float(self.region.outer.distance_to_boundary(d.xy))
        for j, e in enumerate(self.dislocations):
            if j != k:
                lim = min(lim, math.dist(d.position, e.position))
        return 0.5 * lim

    def default_radius(self, k: int) -> float:
        return 0.5 * self.contour_bound(k)


def _contour(center, r: float, n: int, shape: str):
    if shape == "circle":
        t = 2.0 * math.pi * np.arange(n) / n
        nrm = np.c_[np.cos(t), np.sin(t)]
        return center + r * nrm, nrm, np.full(n, 2.0 * math.pi * r / n)
    if shape == "square":
        per = max(8, n // 4)
        x, w = gauss_legendre01(per)
        s = -r + 2.0 * r * x
        pts, nrm, wts = [], [], []
        for nx, ny in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            pts.append(center + np.c_[r * nx - s * ny, r * ny + s * nx])
            nrm.append(np.tile([nx, ny], (per, 1)))
            wts.append(2.0 * r * w)
        return np.vstack(pts), np.vstack(nrm).astype(float), np.concatenate(wts)
    raise BadContour(f"unknown contour shape {shape!r}")


def pk_force(k: int, system: System, r: Optional[float] = None, n: int = 256,
             shape: str = "circle") -> np.ndarray:
    """Peach-Koehler force on dislocation ``k`` as a contour integral.

    ``r`` is the circle radius or the square half-width; it must stay below
    :meth:`System.contour_bound`.
    """
    bound = system.contour_bound(k)
    r = system.default_radius(k) if r is None else float(r)
    reach = r * (math.sqrt(2.0) if shape == "square" else 1.0)
    if not 0 < reach < bound:
        raise BadContour(f"contour size {r!r} must keep within {bound!r} of dislocation {k}")
    pts, nrm, wts = _contour(system.dislocations[k].xy, r, n, shape)
    u, w = system.fields(pts)
    E = eshelby(system.material, u, w)
    return -np.einsum("q,qij,qj->i", wts, E, nrm)


def pk_force_fd(k: int, system: System, h_fd: Optional[float] = None, threads: int = 4) -> np.ndarray:
    """Central difference of ``-F`` in the position of dislocation ``k``.

    Each displaced configuration re-solves the corrective problem on the
    system's fixed mesh and re-meshes the interaction quadrature.
    """
    h_fd = 1e-3 * system.scale if h_fd is None else float(h_fd)
    steps = [(h_fd, 0.0), (-h_fd, 0.0), (0.0, h_fd), (0.0, -h_fd)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        F = list(pool.map(lambda s: system.moved(k, *s).energy().F, steps))
    return -np.array([F[0] - F[1], F[2] - F[3]]) / (2.0 * h_fd)


@dataclass
class ForceReport:
    forces: np.ndarray
    radius: list
    r_deviation: list
    fd_forces: Optional[np.ndarray] = None
    fd_step: Optional[float] = None
    fd_deviation: Optional[list] = None

    def to_dict(self) -> dict:
        out = {
            "forces": np.asarray(self.forces).tolist(),
            "radius": list(self.radius),
            "r_deviation": list(self.r_deviation),
        }
        if self.fd_forces is not None:
            out.update(fd_forces=np.asarray(self.fd_forces).tolist(), fd_step=self.fd_step,
                       fd_deviation=list(self.fd_deviation))
        return out


def _relative(a, b, floor: float = 1e-12) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def force_report(system: System, fd: bool = True, h_fd: Optional[float] = None,
                 threads: int = 4) -> ForceReport:
    """Contour forces on every dislocation with r-independence and, when
    requested, finite-difference cross-checks."""
    forces, radii, rdev, fdf, fdev = [], [], [], [], []
    for k in range(len(system.dislocations)):
        r = system.default_radius(k)
        f1 = pk_force(k, system, r)
        f2 = pk_force(k, system, 0.5 * r)
        forces.append(f1)
        radii.append(r)
        rdev.append(_relative(f2, f1))
        if fd:
            g = pk_force_fd(k, system, h_fd, threads)
            fdf.append(g)
            fdev.append(_relative(f1, g))
    step = (1e-3 * system.scale if h_fd is None else h_fd) if fd else None
    return ForceReport(np.array(forces), radii, rdev, np.array(fdf) if fd else None, step,
                       fdev if fd else None)
