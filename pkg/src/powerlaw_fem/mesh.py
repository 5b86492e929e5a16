"""Macro triangulations, red refinement and facet topology.

The fine mesh always comes from one red refinement of a macro mesh, so every
fine triangle knows its parent macro triangle and every macro edge carries a
fine node (its midpoint) in its interior.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

# facet classification codes
BOUNDARY = 0
MACRO_INTERIOR = 1
MACRO_INTERFACE = 2


class MeshError(ValueError):
    """Invalid or non-conforming triangulation."""


def signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = nodes[elements]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _edges(elements: np.ndarray):
    """Unique edges with element adjacency.

    Returns (edge_nodes (E, 2) sorted, element_edges (K, 3) where local edge
    i is opposite local vertex i, edge_elements list of lists).
    """
    local = ((1, 2), (2, 0), (0, 1))
    key_to_edge: dict[tuple[int, int], int] = {}
    edge_nodes = []
    edge_elements: list[list[int]] = []
    element_edges = np.empty((len(elements), 3), dtype=np.int64)
    for k, tri in enumerate(elements):
        for i, (a, b) in enumerate(local):
            na, nb = int(tri[a]), int(tri[b])
            key = (na, nb) if na < nb else (nb, na)
            e = key_to_edge.get(key)
            if e is None:
                e = len(edge_nodes)
                key_to_edge[key] = e
                edge_nodes.append(key)
                edge_elements.append([])
            edge_elements[e].append(k)
            element_edges[k, i] = e
    return np.array(edge_nodes, dtype=np.int64).reshape(-1, 2), element_edges, edge_elements


def _check_no_hanging_nodes(nodes, edge_nodes, single):
    """A node strictly inside a single-sided edge means a T-junction."""
    for e in np.flatnonzero(single):
        a, b = nodes[edge_nodes[e, 0]], nodes[edge_nodes[e, 1]]
        t = b - a
        rel = nodes - a
        cross = t[0] * rel[:, 1] - t[1] * rel[:, 0]
        s = rel @ t / (t @ t)
        tol = 1e-12 * np.sqrt(t @ t)
        inside = (np.abs(cross) <= tol * np.sqrt(t @ t)) & (s > 1e-12) & (s < 1 - 1e-12)
        if np.any(inside):
            raise MeshError(
                f"non-conforming mesh: node {int(np.flatnonzero(inside)[0])} lies inside edge "
                f"{tuple(int(v) for v in edge_nodes[e])}"
            )


@dataclass(frozen=True)
class MacroMesh:
    """Coarse triangulation; elements are counter-clockwise node triples."""

    nodes: np.ndarray
    elements: np.ndarray
    d: int = 2

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must have shape (n, 2)")
        if elements.ndim != 2 or elements.shape[1] != 3 or len(elements) == 0:
            raise MeshError("elements must have shape (m, 3) with m >= 1")
        if elements.min() < 0 or elements.max() >= len(nodes):
            raise MeshError("element references a node that does not exist")
        if self.d != 2:
            raise MeshError("only d = 2 meshes are implemented")
        area = signed_areas(nodes, elements)
        bad = np.flatnonzero(area <= 0.0)
        if bad.size:
            raise MeshError(
                f"element {int(bad[0])} has non-positive signed area {area[bad[0]]:.3g}"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        edge_nodes, _, edge_elements = self.topology
        counts = np.array([len(x) for x in edge_elements])
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: an edge is shared by more than two elements")
        _check_no_hanging_nodes(nodes, edge_nodes, counts == 1)

    @cached_property
    def topology(self):
        return _edges(self.elements)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        edge_nodes, _, edge_elements = self.topology
        mask = np.zeros(len(self.nodes), dtype=bool)
        for e, adj in enumerate(edge_elements):
            if len(adj) == 1:
                mask[edge_nodes[e]] = True
        return mask

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.nodes[self.elements]
        lens = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lens.max(axis=1)

    @property
    def H(self) -> float:
        return float(self.diameters.max())


def build_unit_square_macro(n: int) -> MacroMesh:
    """``2 n^2`` right triangles on the unit square, diagonal from (0,0) to (1,1)."""
    if int(n) != n or n < 1:
        raise MeshError(f"cells per side must be a positive integer, got {n}")
    n = int(n)
    c = np.arange(n + 1) / n
    X, Y = np.meshgrid(c, c, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10 = v00 + 1
            v01 = v00 + n + 1
            v11 = v01 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return MacroMesh(nodes, np.array(tris, dtype=np.int64))


@dataclass(frozen=True)
class Facet:
    """View of one facet of a :class:`FineMesh`."""

    index: int
    nodes: tuple[int, int]
    normal: np.ndarray
    length: float
    elements: tuple[int, ...]  # (K+, K-) for interior facets, (K,) on the boundary
    kind: int
    macro: int  # owning macro element for MACRO_INTERIOR facets, else -1


@dataclass(frozen=True)
class FacetSet:
    """Array storage of all facets of a fine mesh.

    ``normals[f]`` points from ``elements[f, 0]`` (K+) to ``elements[f, 1]``
    (K-); on the boundary it points out of the domain and ``elements[f, 1]``
    is -1. ``element_signs[k, i]`` is +1 when the normal of the facet opposite
    local vertex i points out of element k.
    """

    nodes: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    elements: np.ndarray
    kind: np.ndarray
    macro: np.ndarray
    element_facets: np.ndarray
    element_signs: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def interior_of(self, m: int) -> np.ndarray:
        """Indices of the facets whose interior lies inside macro element m."""
        return np.flatnonzero((self.kind == MACRO_INTERIOR) & (self.macro == m))


def classify_facets(
    nodes: np.ndarray,
    elements: np.ndarray,
    parent: np.ndarray,
    flip: np.ndarray | None = None,
) -> FacetSet:
    """Facet topology, normals and macro classification.

    Interior normals run from the smaller to the larger node index, rotated
    clockwise; boundary normals point outward. ``flip`` optionally reverses
    the stored orientation of chosen interior facets.
    """
    edge_nodes, element_edges, edge_elements = _edges(elements)
    counts = np.array([len(x) for x in edge_elements])
    if np.any(counts > 2):
        raise MeshError("non-conforming mesh: an edge is shared by more than two elements")
    _check_no_hanging_nodes(nodes, edge_nodes, counts == 1)

    nf = len(edge_nodes)
    t = nodes[edge_nodes[:, 1]] - nodes[edge_nodes[:, 0]]
    lengths = np.hypot(t[:, 0], t[:, 1])
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]

    adj = np.full((nf, 2), -1, dtype=np.int64)
    kind = np.empty(nf, dtype=np.int64)
    macro = np.full(nf, -1, dtype=np.int64)
    centroids = nodes[elements].mean(axis=1)
    flip_mask = np.zeros(nf, dtype=bool)
    if flip is not None:
        flip_mask[np.asarray(flip, dtype=np.int64)] = True

    for f, ks in enumerate(edge_elements):
        mid = 0.5 * (nodes[edge_nodes[f, 0]] + nodes[edge_nodes[f, 1]])
        k0 = ks[0]
        outward_from_k0 = (mid - centroids[k0]) @ normals[f] > 0.0
        if len(ks) == 1:
            if not outward_from_k0:
                normals[f] = -normals[f]
            adj[f, 0] = k0
            kind[f] = BOUNDARY
            continue
        if flip_mask[f]:
            normals[f] = -normals[f]
            outward_from_k0 = not outward_from_k0
        adj[f] = (k0, ks[1]) if outward_from_k0 else (ks[1], k0)
        if parent[ks[0]] == parent[ks[1]]:
            kind[f] = MACRO_INTERIOR
            macro[f] = parent[ks[0]]
        else:
            kind[f] = MACRO_INTERFACE

    element_signs = np.where(adj[element_edges, 0] == np.arange(len(elements))[:, None], 1.0, -1.0)
    return FacetSet(
        nodes=edge_nodes,
        normals=normals,
        lengths=lengths,
        elements=adj,
        kind=kind,
        macro=macro,
        element_facets=element_edges,
        element_signs=element_signs,
    )


@dataclass(frozen=True)
class FineMesh:
    """Red-refined triangulation with macro parent map and facet topology.

    The first ``len(macro.nodes)`` fine nodes coincide with the macro nodes.
    ``macro_facet_midnode[e]`` is the fine node at the midpoint of macro
    edge e (edge numbering of ``macro.topology``).
    """

    macro: MacroMesh
    nodes: np.ndarray
    elements: np.ndarray
    parent: np.ndarray
    facets: FacetSet
    macro_facet_midnode: np.ndarray
    d: int = 2

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.elements)

    @cached_property
    def vertices(self) -> np.ndarray:
        """Element vertex coordinates, shape (K, 3, 2)."""
        return self.nodes[self.elements]

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions on each element, (K, 3, 2)."""
        p = self.vertices
        # grad lambda_i = rot90(edge opposite i) / (2|K|)
        e = np.roll(p, 1, axis=1) - np.roll(p, -1, axis=1)  # x_{i+2} - x_{i+1}
        g = np.stack([e[..., 1], -e[..., 0]], axis=-1)
        return -g / (2.0 * self.areas[:, None, None])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2).max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.facets.nodes[self.facets.kind == BOUNDARY].ravel()] = True
        return mask

    @cached_property
    def macro_areas(self) -> np.ndarray:
        return np.bincount(self.parent, weights=self.areas, minlength=len(self.macro.elements))

    @cached_property
    def macro_children(self) -> np.ndarray:
        """(M, 4) fine element indices of each macro element."""
        order = np.argsort(self.parent, kind="stable")
        return order.reshape(-1, 4)

    def facet(self, f: int) -> Facet:
        fs = self.facets
        adj = tuple(int(k) for k in fs.elements[f] if k >= 0)
        return Facet(
            index=f,
            nodes=(int(fs.nodes[f, 0]), int(fs.nodes[f, 1])),
            normal=fs.normals[f].copy(),
            length=float(fs.lengths[f]),
            elements=adj,
            kind=int(fs.kind[f]),
            macro=int(fs.macro[f]),
        )

    def with_flipped_normals(self, facet_ids) -> "FineMesh":
        """Same mesh with the stored orientation of interior facets reversed."""
        ids = np.asarray(facet_ids, dtype=np.int64)
        if np.any(self.facets.kind[ids] == BOUNDARY):
            raise MeshError("boundary normals must point out of the domain")
        current = _flips_relative_to_default(self)
        flips = np.flatnonzero(current ^ np.isin(np.arange(len(self.facets)), ids))
        return replace(self, facets=classify_facets(self.nodes, self.elements, self.parent, flips))

    def interior_facets_of(self, m: int) -> np.ndarray:
        return self.facets.interior_of(m)


def _flips_relative_to_default(mesh: FineMesh) -> np.ndarray:
    default = classify_facets(mesh.nodes, mesh.elements, mesh.parent)
    same = np.einsum("fd,fd->f", default.normals, mesh.facets.normals) > 0
    return ~same


def red_refine(macro: MacroMesh) -> FineMesh:
    """Split every macro triangle into four by its edge midpoints."""
    edge_nodes, element_edges, _ = macro.topology
    nv = len(macro.nodes)
    mid = nv + np.arange(len(edge_nodes))
    nodes = np.vstack([macro.nodes, 0.5 * (macro.nodes[edge_nodes[:, 0]] + macro.nodes[edge_nodes[:, 1]])])

    tris = np.empty((4 * len(macro.elements), 3), dtype=np.int64)
    parent = np.repeat(np.arange(len(macro.elements)), 4)
    for m, (a, b, c) in enumerate(macro.elements):
        # local edge i is opposite vertex i
        m_bc, m_ca, m_ab = mid[element_edges[m]]
        tris[4 * m + 0] = (a, m_ab, m_ca)
        tris[4 * m + 1] = (m_ab, b, m_bc)
        tris[4 * m + 2] = (m_ca, m_bc, c)
        tris[4 * m + 3] = (m_ab, m_bc, m_ca)

    facets = classify_facets(nodes, tris, parent)
    return FineMesh(
        macro=macro,
        nodes=nodes,
        elements=tris,
        parent=parent,
        facets=facets,
        macro_facet_midnode=mid,
    )


def refined_unit_square(n: int) -> FineMesh:
    return red_refine(build_unit_square_macro(n))


def write_mesh(path, nodes: np.ndarray, elements: np.ndarray) -> None:
    """ASCII mesh file: ``nodes N`` + ``x y`` lines, ``elements M`` + ``i j k`` lines."""
    lines = [f"nodes {len(nodes)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in nodes]
    lines.append(f"elements {len(elements)}")
    lines += [f"{i} {j} {k}" for i, j, k in elements]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> MacroMesh:
    tokens = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in tokens if ln.strip()]
    try:
        if rows[0][0] != "nodes":
            raise MeshError("mesh file must start with 'nodes <count>'")
        nn = int(rows[0][1])
        nodes = np.array([[float(v) for v in row] for row in rows[1 : 1 + nn]])
        head = rows[1 + nn]
        if head[0] != "elements":
            raise MeshError("expected 'elements <count>' after the node block")
        ne = int(head[1])
        elements = np.array([[int(v) for v in row] for row in rows[2 + nn : 2 + nn + ne]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if nodes.shape != (nn, 2) or elements.shape != (ne, 3):
        raise MeshError(f"malformed mesh file {path}: block sizes do not match counts")
    return MacroMesh(nodes, elements)
