import numpy as np
import pytest

from conftest import p1_callable
from powerlaw_fem.manufactured import case_M1
from powerlaw_fem.mesh import refined_unit_square
from powerlaw_fem.quadrature import triangle_rule
from powerlaw_fem.spaces import (
    coarse_divergence_moments,
    evaluate_p1,
    fortin_interpolate,
    fortin_rho_M,
    jump_seminorm_bound_check,
    macro_facet_normals,
    mean_zero,
    p0_norm,
    p1_divergence,
    p1_gradient,
    p1_seminorm,
    project_pi_H,
    project_pi_h,
    prolong_macro,
    quasi_interpolate,
)
from powerlaw_fem.verify import PolynomialField, fortin_defect


@pytest.fixture(scope="module")
def mesh():
    return refined_unit_square(2)


def barycentric(tri, p):
    T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    st = np.linalg.solve(T, p - tri[0])
    return np.array([1 - st.sum(), st[0], st[1]])


def test_gradient_of_identity_field(mesh):
    G = p1_gradient(mesh, mesh.nodes)
    assert np.allclose(G, np.eye(2), atol=1e-13)


def test_gradient_of_shear_field(mesh):
    u = np.column_stack([mesh.nodes[:, 1], np.zeros(mesh.n_nodes)])
    assert np.allclose(p1_gradient(mesh, u, element=5), [[0, 1], [0, 0]], atol=1e-13)


def test_gradient_matches_finite_differences(mesh, rng):
    u = rng.standard_normal((mesh.n_nodes, 2))
    G = p1_gradient(mesh, u)
    for k in range(mesh.n_elements):
        tri = mesh.vertices[k]
        c = tri.mean(axis=0)
        d = 1e-4 * mesh.h
        for j in range(2):
            e = np.zeros(2)
            e[j] = d
            up = barycentric(tri, c + e) @ u[mesh.elements[k]]
            um = barycentric(tri, c - e) @ u[mesh.elements[k]]
            assert np.allclose((up - um) / (2 * d), G[k, :, j], atol=1e-9)


def test_divergence_and_scalar_gradient(mesh):
    assert np.allclose(p1_divergence(mesh, mesh.nodes), 2.0)
    g = p1_gradient(mesh, 3 * mesh.nodes[:, 0] - mesh.nodes[:, 1])
    assert g.shape == (mesh.n_elements, 2)
    assert np.allclose(g, [3, -1])


def test_evaluate_p1_reproduces_affine(mesh):
    bary = triangle_rule(7).points
    vals = evaluate_p1(mesh, mesh.nodes, bary)
    pts = np.einsum("qa,kad->kqd", bary, mesh.vertices)
    assert np.allclose(vals, pts)


def test_pi_h_of_affine_is_centroid_value(mesh):
    q = project_pi_h(mesh, lambda x: 2 * x[:, 0] - x[:, 1] + 1)
    c = mesh.vertices.mean(axis=1)
    assert np.allclose(q, 2 * c[:, 0] - c[:, 1] + 1, atol=1e-14)


def test_pi_H_examples(mesh, rng):
    assert np.allclose(project_pi_H(mesh, np.full(mesh.n_elements, 2.5)), 2.5)
    assert np.allclose(project_pi_H(mesh, np.ones(mesh.n_elements)), 1.0)
    q = rng.standard_normal(mesh.n_elements)
    assert mesh.macro_areas @ project_pi_H(mesh, q) == pytest.approx(mesh.areas @ q, abs=1e-14)


def test_pi_H_is_least_squares_projection(mesh, rng):
    q = rng.standard_normal(mesh.n_elements)
    nM = len(mesh.macro.elements)
    P = np.zeros((mesh.n_elements, nM))
    P[np.arange(mesh.n_elements), mesh.parent] = 1.0
    w = np.sqrt(mesh.areas)[:, None]
    oracle, *_ = np.linalg.lstsq(w * P, w[:, 0] * q, rcond=None)
    assert np.abs(project_pi_H(mesh, q) - oracle).max() <= 1e-12


def test_pi_H_idempotent(mesh, rng):
    q = rng.standard_normal(mesh.n_elements)
    once = project_pi_H(mesh, q)
    assert np.abs(project_pi_H(mesh, prolong_macro(mesh, once)) - once).max() <= 1e-15


def test_mean_zero(mesh, rng):
    q = rng.standard_normal(mesh.n_elements) + 3.0
    z = mean_zero(mesh, q)
    assert abs(mesh.areas @ z) <= 1e-12 * np.linalg.norm(z)


def test_jump_bound_macro_constant_is_exact(mesh, rng):
    q = prolong_macro(mesh, rng.standard_normal(len(mesh.macro.elements)))
    rep = jump_seminorm_bound_check(mesh, q)
    assert np.all(rep.numerators == 0.0) or np.abs(rep.numerators).max() <= 1e-15
    assert len(rep.exact_macros) == len(mesh.macro.elements)
    assert rep.max_ratio == 0.0


def checkerboard(mesh):
    # -1 on corner children, +1 on the middle child, sign alternating per macro
    child = np.arange(mesh.n_elements) % 4
    return np.where(child == 3, 1.0, -1.0) * (-1.0) ** mesh.parent


def test_jump_bound_checkerboard_regression(mesh):
    # per macro of area 1/8: deviation mass 3/4 * 1/8, jump sum 4 * (2 * 1/16 + 1/8) = 1
    rep = jump_seminorm_bound_check(mesh, checkerboard(mesh))
    assert np.allclose(rep.denominators, 1.0, atol=1e-14)
    assert np.allclose(rep.ratios, np.sqrt(3 / 32), atol=1e-14)
    assert rep.max_ratio == pytest.approx(0.30618621784789724, abs=1e-14)


def test_jump_bound_scale_invariant(mesh, rng):
    q = rng.standard_normal(mesh.n_elements)
    a = jump_seminorm_bound_check(mesh, q, s=3.0)
    b = jump_seminorm_bound_check(mesh, -7.5 * q, s=3.0)
    assert np.allclose(a.ratios, b.ratios, rtol=1e-13)


def test_quasi_interpolate_pointwise(mesh):
    v = quasi_interpolate(mesh, lambda x: np.column_stack([x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1]),
                                                           np.zeros(len(x))]))
    centre = np.flatnonzero(np.all(np.isclose(mesh.nodes, 0.5), axis=1))[0]
    assert np.allclose(v[centre], [0.0625, 0.0])


def test_quasi_interpolate_reproduces_affine(mesh):
    affine = lambda x: np.column_stack([1 + 2 * x[:, 0], x[:, 1] - x[:, 0]])  # noqa: E731
    v = quasi_interpolate(mesh, affine)
    inner = ~mesh.boundary_nodes
    assert np.array_equal(v[inner], affine(mesh.nodes)[inner])
    assert np.all(v[mesh.boundary_nodes] == 0)
    assert np.array_equal(quasi_interpolate(mesh, affine, dirichlet=False), affine(mesh.nodes))


def test_quasi_interpolate_converges():
    case = case_M1()
    errs = []
    for n in (4, 8, 16):
        m = refined_unit_square(n)
        v = quasi_interpolate(m, case.velocity)
        rule = triangle_rule(7)
        pts = rule.physical_points(m.vertices).reshape(-1, 2)
        G = case.gradient(pts).reshape(m.n_elements, -1, 2, 2) - p1_gradient(m, v)[:, None]
        errs.append(np.sqrt(m.areas @ (np.sum(G**2, axis=(-2, -1)) @ rule.weights)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)


def test_rho_M_of_zero(mesh):
    assert np.all(fortin_rho_M(mesh, lambda x: np.zeros_like(x), 3) == 0)


def test_rho_M_flux_of_constant(mesh):
    c = np.array([0.7, -1.3])
    edge_nodes, element_edges, edge_elements = mesh.macro.topology
    normals = macro_facet_normals(mesh)
    for m in range(len(mesh.macro.elements)):
        rho = fortin_rho_M(mesh, lambda x: np.tile(c, (len(x), 1)), m)
        support = set(np.flatnonzero(np.any(rho != 0, axis=1)))
        interior = [e for e in element_edges[m] if len(edge_elements[e]) == 2]
        assert support <= {int(mesh.macro_facet_midnode[e]) for e in interior}
        for e in interior:
            a, b = edge_nodes[e]
            mid = mesh.macro_facet_midnode[e]
            length = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a])
            # exact flux of the P1 field along the two halves (trapezoid on linear data)
            flux = 0.25 * length * ((rho[a] + 2 * rho[mid] + rho[b]) @ normals[e])
            assert flux == pytest.approx(c @ normals[e] * length, abs=1e-14)


def test_fortin_reproduces_discrete_fields(mesh, rng):
    vh = rng.standard_normal((mesh.n_nodes, 2))
    vh[mesh.boundary_nodes] = 0.0
    Iv = fortin_interpolate(mesh, p1_callable(mesh, vh))
    assert np.abs(Iv - vh).max() <= 1e-13


def sine_field():
    pi = np.pi

    def parts(x):
        X, Y = x[:, 0], x[:, 1]
        a, b = np.sin(pi * X) * X * (1 - X), np.sin(pi * Y) * Y * (1 - Y)
        da = pi * np.cos(pi * X) * X * (1 - X) + np.sin(pi * X) * (1 - 2 * X)
        db = pi * np.cos(pi * Y) * Y * (1 - Y) + np.sin(pi * Y) * (1 - 2 * Y)
        return a, b, da, db

    def v(x):
        a, b, _, _ = parts(x)
        return np.column_stack([a * b, a * b])

    def grad(x):
        a, b, da, db = parts(x)
        G = np.empty((len(x), 2, 2))
        G[:, :, 0] = (da * b)[:, None]
        G[:, :, 1] = (a * db)[:, None]
        return G

    return v, grad


@pytest.mark.parametrize("n", [4, 8])
def test_fortin_identity_smooth_field(n):
    v, grad = sine_field()
    div = lambda x: grad(x)[:, 0, 0] + grad(x)[:, 1, 1]  # noqa: E731
    assert fortin_defect(refined_unit_square(n), v, div, grad).max() <= 1e-10


def test_fortin_identity_polynomial_fields(rng):
    m = refined_unit_square(3)
    for _ in range(5):
        v = PolynomialField.random(rng)
        assert fortin_defect(m, v, v.divergence, v.gradient).max() <= 1e-12


def test_fortin_of_divergence_free_field():
    case = case_M1()
    for n in (2, 4):
        m = refined_unit_square(n)
        Iv = fortin_interpolate(m, case.velocity)
        moments = coarse_divergence_moments(m, Iv)
        assert np.abs(moments).max() <= 1e-12 * p1_seminorm(m, Iv)


def test_norms(mesh):
    assert p1_seminorm(mesh, mesh.nodes, 2.0) == pytest.approx(np.sqrt(2.0), abs=1e-14)
    assert p0_norm(mesh, np.full(mesh.n_elements, 2.0), 3.0) == pytest.approx(2.0, abs=1e-14)
