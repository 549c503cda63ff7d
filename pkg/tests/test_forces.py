import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import COUPLED, UNIT
from qcdislo.errors import BadContour
from qcdislo.fields import Dislocation
from qcdislo.forces import System, eshelby, force_report, pk_force, pk_force_fd
from qcdislo.geometry import Disc, Domain
from qcdislo.material import MaterialConstants, energy_density


@pytest.fixture(scope="module")
def centered(unit_disc):
    return System(COUPLED, [Dislocation((0, 0), 1.0, 0.5)], unit_disc)


@pytest.fixture(scope="module")
def pair(unit_disc):
    return System(COUPLED, [Dislocation((-0.2, 0.1), 1.0, 0.5), Dislocation((0.3, -0.1), -1.0, 1.0)],
                  unit_disc)


@pytest.fixture(scope="module")
def symmetric(unit_disc):
    return System(UNIT, [Dislocation((-0.15, 0), 1.0), Dislocation((0.15, 0), 1.0)], unit_disc)


def test_eshelby_examples():
    np.testing.assert_array_equal(eshelby(UNIT, (0, 0), (0, 0)), np.zeros((2, 2)))
    np.testing.assert_allclose(eshelby(UNIT, (1, 0), (0, 0)), np.diag([0.5, -0.5]))


@settings(max_examples=300, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-0.99, 0.99),
       st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_eshelby_trace_free_symmetric(C, K, rfrac, v):
    m = MaterialConstants(C, K, rfrac * math.sqrt(C * K))
    u, w = np.array(v[:2]), np.array(v[2:])
    E = eshelby(m, u, w)
    scale = max(1.0, energy_density(m, u, w))
    assert abs(np.trace(E)) <= 1e-14 * scale
    assert np.array_equal(E, E.T)


def test_eshelby_broadcast():
    rng = np.random.default_rng(0)
    u, w = rng.normal(size=(2, 7, 2))
    E = eshelby(COUPLED, u, w)
    assert E.shape == (7, 2, 2)
    np.testing.assert_allclose(E[3], eshelby(COUPLED, u[3], w[3]))


def test_centered_force_vanishes(centered):
    assert np.linalg.norm(pk_force(0, centered)) <= 1e-6
    assert np.linalg.norm(pk_force(0, centered, 0.1, shape="square")) <= 1e-6


def test_repulsion_large_disc():
    delta = 0.2
    s = System(UNIT, [Dislocation((-delta / 2, 0), 1.0), Dislocation((delta / 2, 0), 1.0)],
               Domain(Disc((0, 0), 5.0)), h=0.1)
    f = pk_force(1, s)
    assert math.isclose(f[0], 1 / (2 * math.pi * delta), rel_tol=0.02)
    assert abs(f[1]) <= 1e-3 * abs(f[0])


def test_off_center_image_force(unit_disc):
    # single dislocation at distance a: -dF/da = e a / (2 pi (1 - a^2)), pointing outward
    a = 0.5
    s = System(UNIT, [Dislocation((a, 0), 1.0)], unit_disc)
    f = pk_force(0, s)
    assert math.isclose(f[0], a / (2 * math.pi * (1 - a * a)), rel_tol=2e-3)


def test_radius_and_shape_independence(pair):
    for k in range(2):
        r = pair.default_radius(k)
        f = pk_force(k, pair, r)
        assert np.linalg.norm(pk_force(k, pair, r / 2) - f) <= 1e-3 * np.linalg.norm(f)
        assert np.linalg.norm(pk_force(k, pair, r, shape="square") - f) <= 1e-3 * np.linalg.norm(f)


def test_newton_pair(symmetric):
    f0, f1 = pk_force(0, symmetric), pk_force(1, symmetric)
    assert np.linalg.norm(f0 + f1) <= 1e-3 * np.linalg.norm(f0)
    assert f1[0] > 0 > f0[0]


def test_bad_contour(pair):
    with pytest.raises(BadContour):
        pk_force(0, pair, pair.contour_bound(0))
    with pytest.raises(BadContour):
        pk_force(0, pair, 0.9 * pair.contour_bound(0), shape="square")
    with pytest.raises(BadContour):
        pk_force(0, pair, 0.01, shape="hexagon")


def test_fd_oracle(pair, centered):
    for k in range(2):
        f = pk_force(k, pair)
        g = pk_force_fd(k, pair)
        assert np.linalg.norm(f - g) <= 0.02 * np.linalg.norm(g)
    h = 1e-3 * centered.scale
    assert np.linalg.norm(pk_force_fd(0, centered, h)) <= 2 * h * h


def test_fd_richardson(symmetric):
    h = 2e-3
    g1 = pk_force_fd(1, symmetric, h)
    g2 = pk_force_fd(1, symmetric, h / 2)
    assert np.linalg.norm(g1 - g2) <= 1e-3 * np.linalg.norm(g1)


def test_force_report(symmetric):
    rep = force_report(symmetric, fd=False)
    d = rep.to_dict()
    assert len(d["forces"]) == 2 and len(d["radius"]) == 2
    assert max(d["r_deviation"]) <= 1e-2
    assert "fd_forces" not in d
