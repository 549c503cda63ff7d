import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcdislo.errors import EvalAtCore, LoopThroughCore
from qcdislo.fields import (Circle, Dislocation, FieldPair, burgers_loop, loop_flux, singular_field,
                            total_singular_field)

TWO_PI = 2.0 * math.pi


def square(center, half):
    cx, cy = center
    return [(cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half), (cx - half, cy + half)]


def star(center, rng, n=11, rmin=0.3, rmax=0.9):
    th = np.sort(rng.uniform(0, TWO_PI, n))
    r = rng.uniform(rmin, rmax, n)
    return np.asarray(center) + np.c_[r * np.cos(th), r * np.sin(th)]


@pytest.mark.parametrize("d,p,u,w", [
    (Dislocation((0, 0), TWO_PI, 0), (1, 0), (0, 1), (0, 0)),
    (Dislocation((0, 0), TWO_PI, 0), (0, 1), (-1, 0), (0, 0)),
    (Dislocation((0, 0), 0, 2 * TWO_PI), (2, 0), (0, 0), (0, 1)),
])
def test_singular_field_examples(d, p, u, w):
    ui, wi = singular_field(d, np.array(p, dtype=float))
    np.testing.assert_allclose(ui, u, atol=1e-15)
    np.testing.assert_allclose(wi, w, atol=1e-15)


def test_total_field_examples():
    u, w = total_singular_field([], np.array([0.3, 0.2]))
    assert not np.any(u) and not np.any(w)
    pair = [Dislocation((-1, 0), TWO_PI), Dislocation((1, 0), TWO_PI)]
    u, w = total_singular_field(pair, np.array([0.0, 0.0]))
    np.testing.assert_allclose(u, 0, atol=1e-15)
    np.testing.assert_allclose(w, 0, atol=1e-15)
    u, _ = singular_field(Dislocation((0, 0), 1), np.array([1e6, 0.0]))
    assert abs(np.hypot(*u) - 1 / (TWO_PI * 1e6)) < 1e-18


def test_eval_at_core():
    d = Dislocation((0.2, 0.3), 1)
    with pytest.raises(EvalAtCore):
        singular_field(d, np.array([0.2, 0.3]))
    with pytest.raises(EvalAtCore):
        singular_field(d, np.array([0.2 + 1e-13, 0.3]), scale=2.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(-4, 4))
def test_tangential_magnitude_linear(x, y, bu, bw, px, py, lam):
    d = Dislocation((x, y), bu, bw)
    p = np.array([x + px + 0.01, y + py])
    u, w = singular_field(d, p)
    r = np.hypot(*(p - d.xy))
    assert abs(u @ (p - d.xy)) <= 1e-14 * np.hypot(*u) * r + 1e-300
    assert math.isclose(np.hypot(*u), abs(bu) / (TWO_PI * r), rel_tol=1e-14, abs_tol=1e-300)
    ul, wl = singular_field(d.scaled(lam), p)
    np.testing.assert_allclose(ul, lam * u, rtol=1e-14, atol=1e-300)
    np.testing.assert_allclose(wl, lam * w, rtol=1e-14, atol=1e-300)


def test_burgers_examples():
    d = [Dislocation((0, 0), 1, 0)]
    gu, gw = burgers_loop(d, Circle((0, 0), 0.5))
    assert abs(gu - 1) < 1e-10 and abs(gw) < 1e-10
    gu, gw = burgers_loop(d, square((5, 5), 0.5))
    assert abs(gu) < 1e-10 and abs(gw) < 1e-10
    two = [Dislocation((0.1, 0), 1), Dislocation((-0.2, 0.1), 2)]
    gu, _ = burgers_loop(two, Circle((0, 0), 0.5))
    assert abs(gu - 3) < 1e-9


def test_loop_shape_independence():
    rng = np.random.default_rng(7)
    ds = [Dislocation((0.05, -0.02), 0.7, -1.3), Dislocation((3.0, 3.0), 5, 5)]
    loops = [Circle((0, 0), 0.25), square((0, 0), 0.2), star((0, 0), rng), star((0, 0), rng)]
    vals = np.array([burgers_loop(ds, loop) for loop in loops])
    np.testing.assert_allclose(vals, [[0.7, -1.3]] * len(loops), atol=1e-9)


def test_loop_through_core():
    with pytest.raises(LoopThroughCore):
        burgers_loop([Dislocation((0.5, 0), 1)], Circle((0, 0), 0.5))
    with pytest.raises(LoopThroughCore):
        burgers_loop([Dislocation((0.5, 0), 1)], square((0, 0), 0.5))


def test_divergence_free():
    rng = np.random.default_rng(3)
    ds = [Dislocation((0.0, 0.0), 1.0, 0.4), Dislocation((0.3, 0.1), -2.0, 1.0)]
    for loop in (Circle((0, 0), 0.6), square((0.1, 0.1), 0.6), star((0.1, 0), rng, rmin=0.55),
                 Circle((2, 2), 0.5)):
        fu, fw = loop_flux(ds, loop)
        assert abs(fu) < 1e-9 and abs(fw) < 1e-9


def test_field_pair_adds_corrective():
    d = [Dislocation((0, 0), 1, 2)]
    fp = FieldPair(d, lambda p: np.ones_like(p), None)
    u, w = fp(np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(u, [[1.0, 1.0 + 1 / TWO_PI]])
    np.testing.assert_allclose(w, [[0.0, 2 / TWO_PI]])
