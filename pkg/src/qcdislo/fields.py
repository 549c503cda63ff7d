"""Closed-form singular fields of screw dislocations and circulation checks.

A dislocation at ``d`` with Burgers moduli ``(b_u, b_w)`` carries the fields

    u_i(p) = b_u / (2 pi) * (-(y - y_d), x - x_d) / |p - d|^2

and the same shape for ``w_i`` with ``b_w``.  Only these single-valued
gradients are ever formed; the multivalued angle potential is never stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EvalAtCore, LoopThroughCore
from .quadrature import QuadratureSpec, adaptive_line_integral

# Relative to the domain diameter passed as ``scale``.
EXCLUSION = 1e-12


@dataclass(frozen=True)
class Dislocation:
    position: tuple[float, float]
    b_u: float
    b_w: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position, dtype=float)

    def moved(self, dx: float, dy: float) -> "Dislocation":
        return Dislocation((self.position[0] + dx, self.position[1] + dy), self.b_u, self.b_w)

    def scaled(self, lam: float) -> "Dislocation":
        return Dislocation(self.position, lam * self.b_u, lam * self.b_w)

    def swapped(self) -> "Dislocation":
        return Dislocation(self.position, self.b_w, self.b_u)

    def to_dict(self) -> dict:
        return {"x": self.position[0], "y": self.position[1], "bu": self.b_u, "bw": self.b_w}


def _kernel(d: Dislocation, p, scale: float) -> np.ndarray:
    """(-(y-y0), x-x0) / (2 pi r^2) for points ``p`` of shape (..., 2)."""
    p = np.asarray(p, dtype=float)
    dx = p[..., 0] - d.position[0]
    dy = p[..., 1] - d.position[1]
    r2 = dx * dx + dy * dy
    lim = EXCLUSION * scale
    if np.any(r2 <= lim * lim):
        bad = np.flatnonzero(np.ravel(r2) <= lim * lim)[0]
        raise EvalAtCore(f"field evaluated at {np.reshape(p, (-1, 2))[bad]} on core {d.position}")
    k = np.empty(p.shape, dtype=float)
    k[..., 0] = -dy / (2.0 * np.pi * r2)
    k[..., 1] = dx / (2.0 * np.pi * r2)
    return k


def singular_field(d: Dislocation, p, scale: float = 1.0):
    """Phonon and phason fields ``(u_i, w_i)`` of one dislocation at ``p``."""
    k = _kernel(d, p, scale)
    return d.b_u * k, d.b_w * k


def total_singular_field(ds: Sequence[Dislocation], p, scale: float = 1.0,
                         skip: Optional[int] = None):
    """Superposition over ``ds``; ``skip`` leaves out one dislocation by index."""
    p = np.asarray(p, dtype=float)
    u = np.zeros(p.shape)
    w = np.zeros(p.shape)
    for i, d in enumerate(ds):
        if i == skip:
            continue
        k = _kernel(d, p, scale)
        u += d.b_u * k
        w += d.b_w * k
    return u, w


@dataclass
class FieldPair:
    """Total strain fields: singular superposition plus optional corrective
    gradients.

    ``corrective_u`` / ``corrective_w`` map points ``(n, 2)`` to gradients
    ``(n, 2)``; :class:`qcdislo.solver.ScalarFieldFE` provides such a method.
    """

    dislocations: Sequence[Dislocation] = field(default_factory=tuple)
    corrective_u: Optional[Callable] = None
    corrective_w: Optional[Callable] = None
    scale: float = 1.0

    def __call__(self, p):
        u, w = total_singular_field(self.dislocations, p, self.scale)
        if self.corrective_u is not None:
            u = u + np.reshape(self.corrective_u(np.reshape(p, (-1, 2))), u.shape)
        if self.corrective_w is not None:
            w = w + np.reshape(self.corrective_w(np.reshape(p, (-1, 2))), w.shape)
        return u, w


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


def _as_field(field_or_ds) -> FieldPair:
    if isinstance(field_or_ds, FieldPair):
        return field_or_ds
    return FieldPair(tuple(field_or_ds))


def _loop_pieces(loop):
    """Yield parametrisations ``t -> (points, tangent * ds/dt)`` on [0, 1]."""
    if isinstance(loop, Circle):
        c = np.asarray(loop.center, dtype=float)
        r = float(loop.radius)

        def arc(t, c=c, r=r):
            th = 2.0 * np.pi * t
            pts = c + r * np.stack([np.cos(th), np.sin(th)], axis=-1)
            tan = 2.0 * np.pi * r * np.stack([-np.sin(th), np.cos(th)], axis=-1)
            return pts, tan

        yield arc
        return
    v = np.asarray(loop, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("a polyline loop needs at least three vertices")
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        def seg(t, a=a, b=b):
            pts = a + np.multiply.outer(t, b - a)
            tan = np.broadcast_to(b - a, pts.shape)
            return pts, tan

        yield seg


def _loop_clearance(loop, x: np.ndarray) -> float:
    if isinstance(loop, Circle):
        return abs(np.hypot(*(x - np.asarray(loop.center))) - loop.radius)
    v = np.asarray(loop, dtype=float)
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", x - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.min(np.hypot(*(proj - x).T)))


def _check_loop(fp: FieldPair, loop):
    for d in fp.dislocations:
        if _loop_clearance(loop, d.xy) <= EXCLUSION * fp.scale:
            raise LoopThroughCore(f"loop passes through core at {d.position}")


def burgers_loop(field, loop, quadrature: QuadratureSpec = QuadratureSpec(order=8, tol=1e-12)):
    """Circulations ``(oint u.t ds, oint w.t ds)`` around a closed loop.

    ``loop`` is a :class:`Circle` or a closed polyline given by its vertices;
    counterclockwise orientation gives positive circulation for enclosed
    positive Burgers moduli.
    """
    fp = _as_field(field)
    _check_loop(fp, loop)
    gu = gw = 0.0
    for piece in _loop_pieces(loop):
        def tang(t, which, piece=piece):
            pts, tan = piece(np.asarray(t))
            u, w = fp(pts)
            return np.einsum("ij,ij->i", u if which == 0 else w, tan)

        gu += adaptive_line_integral(lambda t: tang(t, 0), 0.0, 1.0, quadrature)
        gw += adaptive_line_integral(lambda t: tang(t, 1), 0.0, 1.0, quadrature)
    return gu, gw


def loop_flux(field, loop, quadrature: QuadratureSpec = QuadratureSpec(order=8, tol=1e-12)):
    """Outward fluxes ``(oint u.n ds, oint w.n ds)`` through a CCW loop."""
    fp = _as_field(field)
    _check_loop(fp, loop)
    fu = fw = 0.0
    for piece in _loop_pieces(loop):
        def normal(t, which, piece=piece):
            pts, tan = piece(np.asarray(t))
            nrm = np.stack([tan[..., 1], -tan[..., 0]], axis=-1)
            u, w = fp(pts)
            return np.einsum("ij,ij->i", u if which == 0 else w, nrm)

        fu += adaptive_line_integral(lambda t: normal(t, 0), 0.0, 1.0, quadrature)
        fw += adaptive_line_integral(lambda t: normal(t, 1), 0.0, 1.0, quadrature)
    return fu, fw
