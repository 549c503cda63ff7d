"""Hexagonal quasi-crystal constitutive law in the reduced anti-plane setting.

The phonon strain ``u`` and the phason strain ``w`` are planar vectors.  Three
scalar moduli couple them::

    sigma = C u + R w
    rho   = R u + K w
    f     = (C|u|^2 + K|w|^2 + 2R u.w) / 2

All helpers broadcast over leading axes, so ``u`` and ``w`` may be arrays of
shape ``(..., 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite


@dataclass(frozen=True)
class MaterialConstants:
    """Phonon modulus ``C``, phason modulus ``K`` and coupling ``R``."""

    C: float
    K: float
    R: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.C, self.R], [self.R, self.K]], dtype=float)

    @property
    def determinant(self) -> float:
        return self.C * self.K - self.R * self.R

    def swapped(self) -> "MaterialConstants":
        """Exchange the roles of the phonon and phason moduli."""
        return MaterialConstants(C=self.K, K=self.C, R=self.R)

    def burgers_form(self, b_u: float, b_w: float) -> float:
        """Quadratic form ``C b_u^2 + K b_w^2 + 2 R b_u b_w``."""
        return self.C * b_u * b_u + self.K * b_w * b_w + 2.0 * self.R * b_u * b_w

    def cross_form(self, bu1: float, bw1: float, bu2: float, bw2: float) -> float:
        """Bilinear form ``C bu1 bu2 + K bw1 bw2 + R (bu1 bw2 + bw1 bu2)``."""
        return self.C * bu1 * bu2 + self.K * bw1 * bw2 + self.R * (bu1 * bw2 + bw1 * bu2)

    def to_dict(self) -> dict:
        return {"C": self.C, "K": self.K, "R": self.R}


@dataclass(frozen=True)
class StressPair:
    sigma: np.ndarray
    rho: np.ndarray


def validate(m: MaterialConstants) -> MaterialConstants:
    """Return ``m`` unchanged if it is admissible, raise otherwise.

    The comparison is exact; there is deliberately no tolerance on ``CK - R^2``.
    """
    if not m.C > 0:
        raise NotPositiveDefinite(f"C > 0 violated (C={m.C!r})")
    if not m.K > 0:
        raise NotPositiveDefinite(f"K > 0 violated (K={m.K!r})")
    if not m.C * m.K - m.R * m.R > 0:
        raise NotPositiveDefinite(
            f"CK > R^2 violated (CK - R^2 = {m.C * m.K - m.R * m.R!r})"
        )
    return m


def hooke(m: MaterialConstants, u, w) -> StressPair:
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    return StressPair(sigma=m.C * u + m.R * w, rho=m.R * u + m.K * w)


def energy_density(m: MaterialConstants, u, w):
    """Free energy density; returns a float for single vectors, else an array."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    uu = np.sum(u * u, axis=-1)
    ww = np.sum(w * w, axis=-1)
    uw = np.sum(u * w, axis=-1)
    f = 0.5 * (m.C * uu + m.K * ww + 2.0 * m.R * uw)
    return float(f) if np.ndim(f) == 0 else f
