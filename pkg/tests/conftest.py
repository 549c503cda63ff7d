import math

import numpy as np
import pytest

from qcdislo.geometry import Disc, Domain, triangulate
from qcdislo.material import MaterialConstants

UNIT = MaterialConstants(1.0, 1.0, 0.0)
COUPLED = MaterialConstants(2.0, 3.0, 1.0)


@pytest.fixture(scope="session")
def unit_disc():
    return Domain(Disc((0.0, 0.0), 1.0))


@pytest.fixture(scope="session")
def disc_mesh(unit_disc):
    return triangulate(unit_disc, 0.05, 0.25)


def image_gradient(d, b, pts):
    """Corrective field of a unit disc: an opposite-sign dislocation at d/|d|^2."""
    d = np.asarray(d, dtype=float)
    star = d / (d @ d)
    rel = pts - star
    r2 = np.sum(rel * rel, axis=1)
    return -b / (2.0 * math.pi) * np.c_[-rel[:, 1], rel[:, 0]] / r2[:, None]
