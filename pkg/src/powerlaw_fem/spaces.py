"""P1/P0 fields, projections, nodal interpolation and the Fortin operator.

Fields are plain arrays: a P1 vector field is an ``(n_nodes, 2)`` array of
nodal values, a P0 field an ``(n_elements,)`` array of element values.
Vector-valued callables take points of shape ``(n, 2)`` and return values of
shape ``(n, 2)``; scalar callables return ``(n,)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import BOUNDARY, FineMesh
from .quadrature import DATA_DEGREE, line_rule, triangle_rule


def p1_gradient(mesh: FineMesh, field: np.ndarray, element=None) -> np.ndarray:
    """Constant gradient ``G[k, i, j] = d u_i / d x_j`` of a P1 field.

    Returns shape (K, c, 2) for a field of shape (N, c), or (c, 2) when a
    single ``element`` index is given. Scalar fields give (K, 2).
    """
    field = np.asarray(field, dtype=float)
    g = mesh.basis_gradients
    if element is not None:
        vals = field[mesh.elements[element]]
        return np.einsum("id,i...->...d", g[element], vals)
    vals = field[mesh.elements]
    return np.einsum("kid,ki...->k...d", g, vals)


def p1_divergence(mesh: FineMesh, field: np.ndarray) -> np.ndarray:
    G = p1_gradient(mesh, field)
    return G[:, 0, 0] + G[:, 1, 1]


def evaluate_p1(mesh: FineMesh, field: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Values at barycentric points ``bary`` (nq, 3) on every element: (K, nq, ...)."""
    return np.einsum("qa,ka...->kq...", bary, np.asarray(field)[mesh.elements])


def mean_zero(mesh: FineMesh, q: np.ndarray) -> np.ndarray:
    """Remove the area-weighted mean of a P0 field."""
    return q - (mesh.areas @ q) / mesh.areas.sum()


def project_pi_h(mesh: FineMesh, func, degree: int = DATA_DEGREE) -> np.ndarray:
    """Element means of a scalar function."""
    rule = triangle_rule(degree)
    pts = rule.physical_points(mesh.vertices)
    vals = np.asarray(func(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    return vals @ rule.weights


def project_pi_H(mesh: FineMesh, q: np.ndarray) -> np.ndarray:
    """Area-weighted mean of a fine P0 field on each macro element."""
    sums = np.bincount(mesh.parent, weights=mesh.areas * q, minlength=len(mesh.macro.elements))
    return sums / mesh.macro_areas


def prolong_macro(mesh: FineMesh, qH: np.ndarray) -> np.ndarray:
    """Macro-constant field viewed as a fine P0 field."""
    return np.asarray(qH)[mesh.parent]


def p0_jumps(mesh: FineMesh, q: np.ndarray) -> np.ndarray:
    """Jump ``q(K+) - q(K-)`` across each facet (zero on the boundary)."""
    fs = mesh.facets
    jumps = np.zeros(len(fs))
    interior = fs.kind != BOUNDARY
    jumps[interior] = q[fs.elements[interior, 0]] - q[fs.elements[interior, 1]]
    return jumps


@dataclass
class JumpBoundReport:
    ratios: np.ndarray  # per macro element; nan where both sides vanish
    numerators: np.ndarray
    denominators: np.ndarray
    exact_macros: np.ndarray  # macros with zero interior jumps

    @property
    def max_ratio(self) -> float:
        finite = self.ratios[np.isfinite(self.ratios)]
        return float(finite.max()) if finite.size else 0.0


def jump_seminorm_bound_check(mesh: FineMesh, q: np.ndarray, s: float = 2.0) -> JumpBoundReport:
    """Compare ``||q - Pi_H q||_{0,s,M}`` with the h-weighted jump sum on each macro.

    A macro whose interior jumps all vanish is macro-constant; its numerator
    must then be zero and it is reported in ``exact_macros`` instead of
    producing a ratio.
    """
    q = np.asarray(q, dtype=float)
    dev = q - prolong_macro(mesh, project_pi_H(mesh, q))
    nM = len(mesh.macro.elements)
    num = np.bincount(mesh.parent, weights=mesh.areas * np.abs(dev) ** s, minlength=nM) ** (1 / s)

    fs = mesh.facets
    jumps = p0_jumps(mesh, q)
    inner = fs.macro >= 0
    contrib = fs.lengths[inner] * fs.lengths[inner] * np.abs(jumps[inner]) ** s
    den = np.bincount(fs.macro[inner], weights=contrib, minlength=nM) ** (1 / s)

    exact = den == 0.0
    if np.any(num[exact] != 0.0):
        # only roundoff in the mean can make this nonzero
        if np.max(num[exact]) > 1e-12 * max(1.0, np.abs(q).max()):
            raise AssertionError("macro-constant field has a nonzero deviation from its mean")
    ratios = np.full(nM, np.nan)
    ratios[~exact] = num[~exact] / den[~exact]
    if not np.all(np.isfinite(ratios[~exact])):
        raise AssertionError("jump bound ratio is not finite")
    return JumpBoundReport(ratios, num, den, np.flatnonzero(exact))


def quasi_interpolate(mesh: FineMesh, func, dirichlet: bool = True) -> np.ndarray:
    """Nodal interpolant, with boundary nodes zeroed for the Dirichlet space."""
    vals = np.array(func(mesh.nodes), dtype=float)
    if dirichlet:
        vals[mesh.boundary_nodes] = 0.0
    return vals


def _facet_flux(mesh: FineMesh, func, e: int, normal: np.ndarray, npoints: int, remainder=None):
    """``(func . n, 1)`` over macro edge e, integrated on its two fine halves."""
    edge_nodes = mesh.macro.topology[0][e]
    a = mesh.nodes[edge_nodes[0]]
    b = mesh.nodes[edge_nodes[1]]
    mid_node = mesh.macro_facet_midnode[e]
    m = mesh.nodes[mid_node]
    t, w = line_rule(npoints)
    flux = 0.0
    for (p0, n0), (p1, n1) in (((a, edge_nodes[0]), (m, mid_node)), ((m, mid_node), (b, edge_nodes[1]))):
        pts = p0 + t[:, None] * (p1 - p0)
        vals = np.asarray(func(pts), dtype=float)
        if remainder is not None:
            vals = vals - ((1 - t)[:, None] * remainder[n0] + t[:, None] * remainder[n1])
        flux += np.linalg.norm(p1 - p0) * (w @ (vals @ normal))
    return flux


def macro_facet_normals(mesh: FineMesh) -> np.ndarray:
    """One unit normal per macro edge (smaller to larger node index, rotated)."""
    edge_nodes = mesh.macro.topology[0]
    t = mesh.macro.nodes[edge_nodes[:, 1]] - mesh.macro.nodes[edge_nodes[:, 0]]
    n = np.column_stack([t[:, 1], -t[:, 0]])
    return n / np.linalg.norm(n, axis=1)[:, None]


def fortin_rho_M(mesh: FineMesh, func, m: int, interpolant: np.ndarray | None = None,
                 npoints: int = 4) -> np.ndarray:
    """Flux-correcting P1 field of macro element m, as nodal values on M.

    For each macro edge of M interior to the domain, the hat function at the
    edge midpoint times the edge normal is scaled so that its flux through
    the edge equals that of ``func`` (minus ``interpolant`` when given).
    The result is zero at every node except those midpoints.
    """
    edge_nodes, element_edges, edge_elements = mesh.macro.topology
    normals = macro_facet_normals(mesh)
    out = np.zeros((mesh.n_nodes, 2))
    for e in element_edges[m]:
        if len(edge_elements[e]) < 2:
            continue
        x = mesh.macro_facet_midnode[e]
        if x < 0:
            raise ValueError(f"macro edge {e} has no interior fine node")
        length = np.linalg.norm(mesh.nodes[edge_nodes[e, 1]] - mesh.nodes[edge_nodes[e, 0]])
        hat_integral = 0.5 * length  # (1, b)_F for the hat at the midpoint
        flux = _facet_flux(mesh, func, e, normals[e], npoints, interpolant)
        out[x] = flux / hat_integral * normals[e]
    return out


def fortin_interpolate(mesh: FineMesh, func, npoints: int = 4) -> np.ndarray:
    """Nodal interpolant corrected so macro-edge fluxes match those of ``func``.

    Each ``fortin_rho_M`` lives on its own macro element; where two of them
    meet at a shared edge midpoint they carry the same value, so the pieces
    are glued by averaging over the contributing macros.
    """
    s_h = quasi_interpolate(mesh, func)
    total = np.zeros_like(s_h)
    count = np.zeros(mesh.n_nodes)
    for m in range(len(mesh.macro.elements)):
        rho = fortin_rho_M(mesh, func, m, interpolant=s_h, npoints=npoints)
        total += rho
        touched = np.zeros(mesh.n_nodes, dtype=bool)
        touched[mesh.macro_facet_midnode[mesh.macro.topology[1][m]]] = True
        count += touched
    glued = np.divide(total, count[:, None], out=np.zeros_like(total), where=count[:, None] > 0)
    glued[mesh.boundary_nodes] = 0.0
    return s_h + glued


def coarse_divergence_moments(mesh: FineMesh, field: np.ndarray) -> np.ndarray:
    """``(chi_M, div v_h)`` for every macro element M."""
    return np.bincount(
        mesh.parent, weights=mesh.areas * p1_divergence(mesh, field), minlength=len(mesh.macro.elements)
    )


def p1_seminorm(mesh: FineMesh, field: np.ndarray, s: float = 2.0) -> float:
    """``|v_h|_{1,s}`` with the Frobenius norm of the gradient."""
    G = p1_gradient(mesh, field)
    mag = np.sqrt(np.sum(G**2, axis=tuple(range(1, G.ndim))))
    return float((mesh.areas @ mag**s) ** (1 / s))


def p0_norm(mesh: FineMesh, q: np.ndarray, s: float = 2.0) -> float:
    return float((mesh.areas @ np.abs(q) ** s) ** (1 / s))
