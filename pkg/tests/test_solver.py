import math

import numpy as np
import pytest

from conftest import COUPLED, UNIT, image_gradient
from qcdislo.errors import IncompatibleFlux, NotPositiveDefinite, SolverDiverged
from qcdislo.fields import Dislocation
from qcdislo.geometry import Disc, Domain, read_mesh, triangulate
from qcdislo.material import MaterialConstants
from qcdislo.solver import (NeumannProblem, assemble_stiffness, corrective_fields_eps,
                            corrective_fields_limit, corrective_functional, coupled_residual, decouple,
                            default_ball, dump_solution, neumann_load, pcg_projected, solve_neumann)

BALL = Disc((0.0, 0.0), 0.5)


def cos_theta(pts, nrm, tags):
    return pts[:, 0] / np.hypot(pts[:, 0], pts[:, 1])


def l2_error_mod_constant(mesh, values, exact):
    """L2 norm of (values - exact) after removing the best-fit constant."""
    area = np.abs(mesh.signed_areas)
    e = (values - exact)[mesh.tris]
    c = np.sum(area * e.mean(axis=1)) / area.sum()
    e = e - c
    # exact for piecewise-linear error: |T|/12 (sum e_k^2 + (sum e_k)^2)
    return math.sqrt(np.sum(area / 12.0 * (np.sum(e * e, axis=1) + np.sum(e, axis=1) ** 2)))


def l2_gradient(mesh, grad):
    return math.sqrt(np.sum(np.abs(mesh.signed_areas) * np.sum(grad * grad, axis=1)))


def test_zero_data(disc_mesh):
    v = solve_neumann(NeumannProblem(disc_mesh, lambda p, n, t: np.zeros(len(p)), BALL))
    assert not np.any(v.values) and v.residual == 0.0


def test_cos_theta_nodal(disc_mesh):
    v = solve_neumann(NeumannProblem(disc_mesh, cos_theta, BALL))
    err = v.values - disc_mesh.nodes[:, 0]
    err -= np.median(err)
    assert np.max(np.abs(err)) <= 0.02
    assert abs(v.mean_over(BALL)) <= 1e-10
    assert v.residual <= 1e-10


def test_incompatible_flux(disc_mesh):
    with pytest.raises(IncompatibleFlux):
        solve_neumann(NeumannProblem(disc_mesh, lambda p, n, t: np.ones(len(p)), BALL))


def test_cg_divergence_reported(disc_mesh):
    A = assemble_stiffness(disc_mesh)
    b = neumann_load(disc_mesh, cos_theta)[0]
    with pytest.raises(SolverDiverged):
        pcg_projected(A, b, 1e-10, maxiter=2)


def test_neumann_convergence_order():
    errs = []
    for h in (0.2, 0.1, 0.05):
        mesh = triangulate(Domain(Disc((0, 0), 1.0)), h)
        v = solve_neumann(NeumannProblem(mesh, cos_theta, BALL))
        errs.append(l2_error_mod_constant(mesh, v.values, mesh.nodes[:, 0]))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.8), orders


def test_decouple_examples():
    d = decouple(UNIT)
    np.testing.assert_allclose(d.inverse, np.eye(2))
    assert math.isclose(d.condition, 1.0)
    d = decouple(COUPLED)
    np.testing.assert_allclose(d.inverse, np.array([[3, -1], [-1, 2]]) / 5, rtol=1e-14)
    assert math.isclose(d.condition, np.linalg.cond(COUPLED.matrix), rel_tol=1e-12)
    with pytest.raises(NotPositiveDefinite):
        decouple(MaterialConstants(1, 1, 1))


@pytest.mark.parametrize("m", [UNIT, COUPLED, MaterialConstants(1.0, 4.0, -1.9)])
def test_centered_needs_no_correction(unit_disc, disc_mesh, m):
    ds = [Dislocation((0, 0), 1.0, 0.7)]
    sol = corrective_fields_limit(unit_disc, ds, m, disc_mesh)
    assert np.max(np.abs(sol.u.nodal_gradient)) <= 1e-10
    assert np.max(np.abs(sol.w.nodal_gradient)) <= 1e-10


def test_image_oracle(unit_disc, disc_mesh):
    d = (0.5, 0.0)
    # the image construction really is traction free on the circle
    th = np.linspace(0, 2 * np.pi, 64)
    circ = np.c_[np.cos(th), np.sin(th)]
    u_sing = np.c_[-(circ[:, 1] - d[1]), circ[:, 0] - d[0]] / (2 * math.pi * np.sum((circ - d) ** 2, 1))[:, None]
    total = u_sing + image_gradient(d, 1.0, circ)
    assert np.max(np.abs(np.sum(total * circ, axis=1))) < 1e-12

    sol = corrective_fields_limit(unit_disc, [Dislocation(d, 1.0)], UNIT, disc_mesh)
    centroids = disc_mesh.nodes[disc_mesh.tris].mean(axis=1)
    exact = image_gradient(d, 1.0, centroids)
    rel = l2_gradient(disc_mesh, sol.u.element_gradient - exact) / l2_gradient(disc_mesh, exact)
    assert rel <= 0.02
    assert np.max(np.abs(sol.w.values)) <= 1e-12


def test_point_reflection_symmetry(unit_disc, disc_mesh):
    ds = [Dislocation((-0.3, 0.1), 1.0, 0.5), Dislocation((0.3, -0.1), 1.0, 0.5)]
    sol = corrective_fields_limit(unit_disc, ds, COUPLED, disc_mesh, ball=Disc((0, 0), 0.2))
    inner = disc_mesh.nodes[np.hypot(*disc_mesh.nodes.T) < 0.95]
    for f in (sol.u, sol.w):
        scale = np.max(np.abs(f.values))
        assert np.max(np.abs(f.value_at(inner) - f.value_at(-inner))) <= 2e-3 * scale


def test_coupled_residual(unit_disc, disc_mesh):
    ds = [Dislocation((0.4, 0.1), 1.0, -0.5), Dislocation((-0.2, -0.3), 0.3, 1.0)]
    for m in (COUPLED, MaterialConstants(1.0, 4.0, -1.9)):
        sol = corrective_fields_limit(unit_disc, ds, m, disc_mesh)
        assert sol.coupled_residual <= 1e-9
        assert coupled_residual(m, ds, sol) <= 1e-9


def test_uniqueness_up_to_constant(unit_disc, disc_mesh):
    ds = [Dislocation((0.4, 0.1), 1.0, -0.5)]
    a = corrective_fields_limit(unit_disc, ds, COUPLED, disc_mesh, ball=Disc((0, 0), 0.3))
    b = corrective_fields_limit(unit_disc, ds, COUPLED, disc_mesh, ball=Disc((-0.5, 0.2), 0.2))
    for fa, fb in ((a.u, b.u), (a.w, b.w)):
        diff = fa.values - fb.values
        assert np.max(np.abs(diff - diff.mean())) <= 1e-8
        assert abs(fb.mean_over(Disc((-0.5, 0.2), 0.2))) <= 1e-10


def test_discrete_minimality(unit_disc, disc_mesh):
    ds = [Dislocation((0.4, 0.1), 1.0, -0.5), Dislocation((-0.2, -0.3), 0.3, 1.0)]
    sol = corrective_fields_limit(unit_disc, ds, COUPLED, disc_mesh)
    A = sol.stiffness
    base = corrective_functional(COUPLED, ds, disc_mesh, sol.u.values, sol.w.values, A=A)
    rng = np.random.default_rng(11)
    for _ in range(20):
        du, dw = rng.normal(size=(2, disc_mesh.n_nodes)) * 1e-3
        for s in (1.0, -1.0):
            pert = corrective_functional(COUPLED, ds, disc_mesh, sol.u.values + s * du,
                                         sol.w.values + s * dw, A=A)
            assert pert >= base - 1e-12 * abs(base)


def test_eps_centered_zero(unit_disc):
    dom = unit_disc.with_holes([(0, 0)], 0.1)
    mesh = triangulate(dom, 0.05)
    sol = corrective_fields_eps(dom, [Dislocation((0, 0), 1.0, 1.0)], COUPLED, mesh)
    assert np.max(np.abs(sol.u.nodal_gradient)) <= 1e-10
    assert np.max(np.abs(sol.w.nodal_gradient)) <= 1e-10


def test_eps_converges_to_limit(unit_disc):
    ds = [Dislocation((0.5, 0.0), 1.0, 0.0)]
    limit_mesh = triangulate(unit_disc, 0.02)
    limit = corrective_fields_limit(unit_disc, ds, UNIT, limit_mesh)
    diffs = []
    for eps in (0.08, 0.04, 0.02):
        dom = unit_disc.with_holes([ds[0].position], eps)
        mesh = triangulate(dom, 0.02)
        sol = corrective_fields_eps(dom, ds, UNIT, mesh)
        centroids = mesh.nodes[mesh.tris].mean(axis=1)
        diffs.append(l2_gradient(mesh, sol.u.element_gradient - limit.u.gradient_at(centroids)))
    assert diffs[0] > diffs[1] > diffs[2], diffs


def test_flux_compatibility_audit(unit_disc):
    ds = [Dislocation((0.3, 0.2), 1.0, -2.0), Dislocation((-0.4, 0.1), -0.5, 1.0),
          Dislocation((0.0, -0.5), 2.0, 0.3)]
    dom = unit_disc.with_holes([d.position for d in ds], 0.05)
    mesh = triangulate(dom, 0.05)
    sol = corrective_fields_eps(dom, ds, COUPLED, mesh)
    from qcdislo.solver import singular_traction
    for which in (0, 1):
        _, total, measure, gmax = neumann_load(
            mesh, lambda p, n, t: singular_traction(COUPLED, ds, p, n, t)[which])
        assert abs(total) <= 1e-8 * measure * gmax
    assert sol.coupled_residual <= 1e-9


def test_default_ball_avoids_cores(unit_disc):
    b = default_ball(unit_disc, [Dislocation((0.5, 0), 1)], 0.1)
    assert b.radius > 0 and math.dist(b.center, (0.5, 0)) >= b.radius + 0.3 - 1e-12
    b = default_ball(unit_disc, [Dislocation((0, 0), 1)], 0.1)
    assert b.radius > 0.1 and math.dist(b.center, (0, 0)) >= b.radius + 0.3 - 1e-12


def test_dump_solution(tmp_path, unit_disc, disc_mesh):
    sol = corrective_fields_limit(unit_disc, [Dislocation((0.5, 0), 1.0)], UNIT, disc_mesh)
    dump_solution(tmp_path / "u.qcmesh", sol, "u")
    mesh, fld = read_mesh(tmp_path / "u.qcmesh")
    np.testing.assert_array_equal(fld, sol.u.values)
    np.testing.assert_array_equal(mesh.tris, disc_mesh.tris)
