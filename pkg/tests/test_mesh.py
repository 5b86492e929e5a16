import numpy as np
import pytest

from powerlaw_fem.mesh import (
    BOUNDARY,
    MACRO_INTERFACE,
    MACRO_INTERIOR,
    MacroMesh,
    MeshError,
    build_unit_square_macro,
    classify_facets,
    read_mesh,
    red_refine,
    refined_unit_square,
    write_mesh,
)
from powerlaw_fem.params import PowerLawParams
from powerlaw_fem.spaces import p0_jumps
from powerlaw_fem.stabilisation import lift


def edge_enumeration(elements):
    """Brute-force edge -> adjacent elements map."""
    edges = {}
    for k, tri in enumerate(elements):
        for i in range(3):
            key = tuple(sorted((int(tri[i]), int(tri[(i + 1) % 3]))))
            edges.setdefault(key, []).append(k)
    return edges


def single_triangle():
    return MacroMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


@pytest.mark.parametrize("n, nodes, tris", [(1, 4, 2), (2, 9, 8), (4, 25, 32)])
def test_unit_square_counts(n, nodes, tris):
    m = build_unit_square_macro(n)
    assert m.nodes.shape == (nodes, 2)
    assert m.elements.shape == (tris, 3)
    assert np.allclose(np.sort(np.unique(m.nodes[:, 0])), np.linspace(0, 1, n + 1))


@pytest.mark.parametrize("n", [0, -1, 1.5])
def test_unit_square_rejects_bad_n(n):
    with pytest.raises(MeshError):
        build_unit_square_macro(n)


def test_unit_square_is_deterministic_and_counter_clockwise():
    a, b = build_unit_square_macro(3), build_unit_square_macro(3)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.elements, b.elements)
    p = a.nodes[a.elements]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    assert np.allclose(cross, 1 / 9)


def test_red_refine_two_triangle_square():
    fine = refined_unit_square(1)
    assert fine.n_elements == 8 and fine.n_nodes == 9
    assert np.array_equal(fine.nodes[:4], fine.macro.nodes)


def test_children_areas_sum_to_parent():
    fine = refined_unit_square(3)
    macro_area = 0.5 / 9
    sums = np.bincount(fine.parent, weights=fine.areas)
    assert np.abs(sums - macro_area).max() <= 1e-14
    assert np.all(np.bincount(fine.parent) == 4)
    assert abs(fine.areas.sum() - 1.0) <= 1e-13


def test_h_halves_under_refinement():
    h = [refined_unit_square(n).h for n in (2, 4, 8)]
    H = build_unit_square_macro(2).H
    assert h[0] == pytest.approx(H / 2, abs=1e-15)
    assert h[1] == pytest.approx(h[0] / 2, abs=1e-15)
    assert h[2] == pytest.approx(h[1] / 2, abs=1e-15)


def test_midpoints_are_deduplicated():
    fine = refined_unit_square(4)
    assert len(np.unique(fine.nodes, axis=0)) == fine.n_nodes
    # Euler: V - E + F = 1 for a disc
    assert fine.n_nodes - len(fine.facets) + fine.n_elements == 1


def test_single_triangle_facets():
    fine = red_refine(single_triangle())
    kinds = fine.facets.kind
    assert np.sum(kinds == MACRO_INTERIOR) == 3
    assert np.sum(kinds == BOUNDARY) == 6
    assert np.sum(kinds == MACRO_INTERFACE) == 0


def test_unit_square_n1_facet_counts():
    fine = refined_unit_square(1)
    edges = edge_enumeration(fine.elements)
    assert len(fine.facets) == len(edges) == 16
    assert np.sum(fine.facets.kind == BOUNDARY) == sum(len(v) == 1 for v in edges.values()) == 8


def test_three_interior_facets_per_macro():
    fine = refined_unit_square(2)
    for m in range(len(fine.macro.elements)):
        ids = fine.interior_facets_of(m)
        assert len(ids) == 3
        assert np.all(fine.parent[fine.facets.elements[ids]] == m)


def test_classification_matches_enumeration():
    fine = refined_unit_square(3)
    fs = fine.facets
    edges = edge_enumeration(fine.elements)
    for f in range(len(fs)):
        adj = edges[tuple(sorted(fs.nodes[f]))]
        if len(adj) == 1:
            assert fs.kind[f] == BOUNDARY and fs.elements[f, 1] == -1
        else:
            assert set(fs.elements[f]) == set(adj)
            same = fine.parent[adj[0]] == fine.parent[adj[1]]
            assert fs.kind[f] == (MACRO_INTERIOR if same else MACRO_INTERFACE)


def test_normals_unit_and_oriented():
    fine = refined_unit_square(3)
    fs = fine.facets
    assert np.abs(np.linalg.norm(fs.normals, axis=1) - 1).max() <= 1e-14
    centroids = fine.vertices.mean(axis=1)
    mids = fine.nodes[fs.nodes].mean(axis=1)
    # K+ lies behind the facet, K- in front of it
    assert np.all(np.einsum("fd,fd->f", mids - centroids[fs.elements[:, 0]], fs.normals) > 0)
    inner = fs.elements[:, 1] >= 0
    assert np.all(np.einsum("fd,fd->f", centroids[fs.elements[inner, 1]] - mids[inner], fs.normals[inner]) > 0)
    bnd = fs.kind == BOUNDARY
    out = mids[bnd] + 1e-3 * fs.normals[bnd]
    assert np.all(np.any((out < 0) | (out > 1), axis=1))


def test_interior_normals_follow_node_order():
    fine = refined_unit_square(2)
    fs = fine.facets
    inner = fs.kind != BOUNDARY
    t = fine.nodes[fs.nodes[inner, 1]] - fine.nodes[fs.nodes[inner, 0]]
    assert np.all(fs.nodes[:, 0] < fs.nodes[:, 1])
    rotated = np.column_stack([t[:, 1], -t[:, 0]]) / np.linalg.norm(t, axis=1)[:, None]
    assert np.allclose(rotated, fs.normals[inner])


def test_facet_view():
    fine = refined_unit_square(1)
    f = int(np.flatnonzero(fine.facets.kind == MACRO_INTERIOR)[0])
    view = fine.facet(f)
    assert len(view.elements) == 2 and view.macro >= 0
    b = int(np.flatnonzero(fine.facets.kind == BOUNDARY)[0])
    assert len(fine.facet(b).elements) == 1 and fine.facet(b).macro == -1


def test_rejects_hanging_node():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]], dtype=float)
    # (0,1,2) has the diagonal 1-2 whose midpoint 4 is a vertex of the other two
    elements = np.array([[0, 1, 2], [1, 3, 4], [4, 3, 2]])
    with pytest.raises(MeshError, match="non-conforming"):
        MacroMesh(nodes, elements)


def test_rejects_clockwise_and_degenerate():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [2, 0]], dtype=float)
    with pytest.raises(MeshError, match="area"):
        MacroMesh(nodes, np.array([[0, 2, 1]]))
    with pytest.raises(MeshError, match="area"):
        MacroMesh(nodes, np.array([[0, 1, 3]]))


def test_rejects_edge_shared_three_times():
    nodes = np.array([[0, 0], [1, 0], [0.5, 1], [0.5, 2], [0.5, -1]], dtype=float)
    elements = np.array([[0, 1, 2], [0, 1, 3], [1, 0, 4]])
    with pytest.raises(MeshError):
        MacroMesh(nodes, elements)


def test_classify_facets_rejects_non_conforming():
    nodes = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]], dtype=float)
    elements = np.array([[0, 1, 2], [1, 3, 4], [4, 3, 2]])
    with pytest.raises(MeshError):
        classify_facets(nodes, elements, np.zeros(3, dtype=int))


def test_mesh_file_round_trip(tmp_path):
    macro = build_unit_square_macro(3)
    p1, p2 = tmp_path / "a.mesh", tmp_path / "b.mesh"
    write_mesh(p1, macro.nodes, macro.elements)
    back = read_mesh(p1)
    assert np.array_equal(back.nodes, macro.nodes)
    assert np.array_equal(back.elements, macro.elements)
    write_mesh(p2, back.nodes, back.elements)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text().splitlines()[0] == "nodes 16"


def test_mesh_file_of_irrational_coordinates_round_trips(tmp_path, rng):
    fine = red_refine(MacroMesh(np.array([[0.0, 0.0], [np.sqrt(2), 0.1], [0.3, np.pi]]), np.array([[0, 1, 2]])))
    path = tmp_path / "f.mesh"
    write_mesh(path, fine.nodes, fine.elements)
    back = read_mesh(path)
    assert np.array_equal(back.nodes, fine.nodes)


def test_read_mesh_errors(tmp_path):
    bad = tmp_path / "bad.mesh"
    bad.write_text("elements 1\n0 1 2\n")
    with pytest.raises(MeshError):
        read_mesh(bad)
    bad.write_text("nodes 3\n0 0\n1 0\n")
    with pytest.raises(MeshError):
        read_mesh(bad)


def test_general_polygon_refines(tmp_path):
    # L-shaped domain from three squares
    nodes = np.array([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1], [0, 2], [1, 2]], dtype=float)
    elements = np.array([[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4], [3, 4, 7], [3, 7, 6]])
    fine = red_refine(MacroMesh(nodes, elements))
    assert fine.areas.sum() == pytest.approx(3.0, abs=1e-13)
    assert np.sum(fine.facets.kind == MACRO_INTERIOR) == 18
    # boundary of the L has 8 unit edges, each split in two
    assert np.sum(fine.facets.kind == BOUNDARY) == 16


def test_flipping_normal_flips_jump_but_not_lifting(rng):
    fine = refined_unit_square(2)
    params = PowerLawParams.from_r(1.5)
    inner = np.flatnonzero(fine.facets.kind == MACRO_INTERIOR)
    ids = inner[::3]
    flipped = fine.with_flipped_normals(ids)
    assert np.allclose(flipped.facets.normals[ids], -fine.facets.normals[ids])
    q = rng.standard_normal(fine.n_elements)
    assert np.allclose(p0_jumps(flipped, q)[ids], -p0_jumps(fine, q)[ids])
    v = np.zeros((fine.n_nodes, 2))
    bary = np.array([[0.2, 0.3, 0.5], [1 / 3, 1 / 3, 1 / 3]])
    a = lift(fine, v, q, params).evaluate(bary)
    b = lift(flipped, v, q, params).evaluate(bary)
    assert np.abs(a - b).max() <= 1e-14
    # flipping back restores the original
    again = flipped.with_flipped_normals(ids)
    assert np.array_equal(again.facets.normals, fine.facets.normals)
    with pytest.raises(MeshError):
        fine.with_flipped_normals(np.flatnonzero(fine.facets.kind == BOUNDARY)[:1])
