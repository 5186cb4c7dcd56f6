import io
from math import factorial

import numpy as np
import pytest

from conftest import eval_at_points, random_points_in
from pheat.fespace import (FeFunction, UnsupportedDegree, build_space, eval_function,
                           eval_gradient, quadrature)
from pheat.mesh import locate_point, make_initial_mesh, refine_to_level


def test_ndof_counts():
    mesh = make_initial_mesh("unit_square")
    assert build_space(mesh, 1).ndof == 4
    assert build_space(mesh, 2).ndof == 4 + 5   # four boundary edges + diagonal
    assert build_space(mesh, 3).ndof == 4 + 2 * 5 + 2


def test_unsupported_degree():
    mesh = make_initial_mesh("unit_square")
    with pytest.raises(UnsupportedDegree):
        build_space(mesh, 4)
    with pytest.raises(UnsupportedDegree):
        quadrature(0)
    with pytest.raises(UnsupportedDegree):
        quadrature(21)


def test_slit_duplicated_dofs_are_distinct():
    mesh = refine_to_level("slit", 1)
    space = build_space(mesh, 1)
    assert space.ndof == mesh.num_vertices  # duplicated vertices kept separate
    coords = [tuple(c) for c in space.dof_coords]
    assert coords.count((-0.5, 0.0)) == 2


def test_centroid_rule():
    rule = quadrature(1)
    assert rule.num_points == 1
    assert np.allclose(rule.points, [[1 / 3, 1 / 3, 1 / 3]])
    assert np.allclose(rule.weights, [1.0])


@pytest.mark.parametrize("degree", [1, 2, 3, 5, 8, 11, 14, 17, 20])
def test_quadrature_monomial_exactness(degree):
    rule = quadrature(degree)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 1.0) < 1e-13
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            # int_T x^a y^b over the reference triangle = a! b! / (a+b+2)!,
            # divided by the area 1/2 for the normalized weights
            exact = 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
            got = float(np.sum(rule.weights * x ** a * y ** b))
            assert abs(got - exact) < 5e-15, (a, b)


def test_eval_constant_and_hat():
    mesh = refine_to_level("unit_square", 1)
    space = build_space(mesh, 1)
    const = FeFunction(space, np.full(space.ndof, 7.25))
    for tri in range(mesh.num_triangles):
        assert eval_function(const, tri, [1 / 3, 1 / 3, 1 / 3]) == pytest.approx(7.25)

    hat = FeFunction(space, np.zeros(space.ndof))
    node = space.interior_dofs[0] if space.interior_dofs.size else 0
    hat.coeffs[node] = 1.0
    for i in range(space.ndof):
        tri, lam = locate_point(mesh, space.dof_coords[i])
        val = eval_function(hat, tri, lam)
        assert val == pytest.approx(1.0 if i == node else 0.0, abs=1e-13)


def test_linear_reproduction_at_centroids():
    mesh = refine_to_level("unit_square", 2)
    space = build_space(mesh, 1)
    f = FeFunction(space, space.dof_coords[:, 0])
    for tri in range(mesh.num_triangles):
        centroid = mesh.vertices[mesh.triangles[tri]].mean(axis=0)
        assert abs(eval_function(f, tri, [1 / 3, 1 / 3, 1 / 3]) - centroid[0]) < 1e-14


def test_gradients():
    mesh = refine_to_level("unit_square", 2)
    s1 = build_space(mesh, 1)
    f = FeFunction(s1, s1.dof_coords[:, 0])
    for tri in (0, 5, 11):
        g = eval_gradient(f, tri, [1 / 3, 1 / 3, 1 / 3])
        assert np.allclose(g, [1.0, 0.0], atol=1e-13)
    zero = FeFunction(s1, np.full(s1.ndof, 3.0))
    assert np.allclose(eval_gradient(zero, 2, [0.2, 0.3, 0.5]), 0.0, atol=1e-13)

    s2 = build_space(mesh, 2)
    f2 = FeFunction(s2, s2.dof_coords[:, 0] ** 2)
    rule = quadrature(4)
    grads = s2.grad_at(rule, f2.coeffs)
    pts = s2.physical_points(rule)
    assert np.max(np.abs(grads[..., 0] - 2 * pts[..., 0])) < 1e-12
    assert np.max(np.abs(grads[..., 1])) < 1e-12


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_lagrange_reproduction_random_polynomials(degree, rng):
    mesh = refine_to_level("unit_square", 2)
    space = build_space(mesh, degree)

    exps = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    coeffs = rng.standard_normal(len(exps))

    def poly(pts):
        return sum(c * pts[:, 0] ** i * pts[:, 1] ** j
                   for c, (i, j) in zip(coeffs, exps))

    f = FeFunction(space, poly(space.dof_coords))
    pts = random_points_in(mesh, 50, rng)
    vals = eval_at_points(f, pts)
    expected = poly(pts)
    scale = np.abs(expected).max()
    assert np.max(np.abs(vals - expected)) < 1e-11 * max(scale, 1.0)


def test_gradient_matches_finite_differences(rng):
    mesh = refine_to_level("unit_square", 3)
    for degree in (1, 2):
        space = build_space(mesh, degree)
        f = FeFunction(space, rng.standard_normal(space.ndof))
        h = 1e-6
        for x in random_points_in(mesh, 10, rng, margin=0.01):
            tri, lam = locate_point(mesh, x)
            g = eval_gradient(f, tri, lam)
            for axis in (0, 1):
                e = np.zeros(2)
                e[axis] = h
                tp, lp = locate_point(mesh, x + e)
                tm, lm = locate_point(mesh, x - e)
                fd = (eval_function(f, tp, lp) - eval_function(f, tm, lm)) / (2 * h)
                # only compare when the stencil stays inside one triangle
                if tp == tri == tm:
                    assert abs(fd - g[axis]) < 1e-5 * max(1.0, abs(g[axis]))


def test_single_valued_on_shared_edges(rng):
    mesh = refine_to_level("unit_square", 2)
    space = build_space(mesh, 2)
    f = FeFunction(space, rng.standard_normal(space.ndof))
    counts = mesh.edge_use_counts()
    shared = [e for e, c in counts.items() if c == 2][:10]
    for i, j in shared:
        x = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
        owners = [t for t in range(mesh.num_triangles)
                  if i in mesh.triangles[t] and j in mesh.triangles[t]]
        vals = []
        for t in owners:
            from pheat.mesh import barycentric_coordinates
            lam = barycentric_coordinates(mesh, t, x)
            vals.append(eval_function(f, t, lam))
        assert abs(vals[0] - vals[1]) < 1e-13 * max(1.0, abs(vals[0]))


def test_jump_across_slit(rng):
    mesh = refine_to_level("slit", 2)
    space = build_space(mesh, 1)
    f = FeFunction(space, rng.standard_normal(space.ndof))
    x = np.array([-0.5, 0.0])
    up = eval_at_points(f, [x], slit_side="above")[0]
    dn = eval_at_points(f, [x], slit_side="below")[0]
    assert abs(up - dn) > 1e-6  # generic coefficients jump across the cut


def test_function_dump_format():
    mesh = refine_to_level("unit_square", 1)
    space = build_space(mesh, 2)
    f = FeFunction(space, np.arange(space.ndof, dtype=float))
    buf = io.StringIO()
    f.dump(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == f"ndof {space.ndof} degree 2 level 1"
    assert len(lines) == 1 + space.ndof
    assert float(lines[1]) == 0.0
