"""Pressure-jump stabilisation and the Raviart-Thomas lifting of the jumps.

Jumps are ``q(K+) - q(K-)`` where the stored facet normal points from K+ to
K-. The RT0 basis function of a facet carries the same orientation, so the
product ``jump * phi_F`` does not depend on which orientation was stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import MACRO_INTERIOR, FineMesh
from .params import PowerLawParams
from .quadrature import DATA_DEGREE, line_rule, triangle_rule
from .spaces import evaluate_p1, p0_jumps, p1_divergence, p1_seminorm


def tau_F(h_F, params: PowerLawParams):
    h_F = np.asarray(h_F, dtype=float)
    if np.any(h_F <= 0):
        raise ValueError("facet length must be positive")
    return h_F ** params.alpha


def facet_weights(mesh: FineMesh, params: PowerLawParams) -> np.ndarray:
    """``tau_F * |F|`` on macro-interior facets, zero elsewhere."""
    fs = mesh.facets
    w = np.zeros(len(fs))
    inner = fs.kind == MACRO_INTERIOR
    w[inner] = tau_F(fs.lengths[inner], params) * fs.lengths[inner]
    return w


def stab_form(mesh: FineMesh, q: np.ndarray, t: np.ndarray, params: PowerLawParams) -> float:
    """Sum over macro-interior facets of ``tau_F ([[q]], [[t]])_F``."""
    return float(facet_weights(mesh, params) @ (p0_jumps(mesh, q) * p0_jumps(mesh, t)))


def stab_matrix(mesh: FineMesh, params: PowerLawParams) -> sp.csr_matrix:
    """Symmetric positive semidefinite matrix of the stabilising form on P0."""
    fs = mesh.facets
    inner = np.flatnonzero(fs.kind == MACRO_INTERIOR)
    w = facet_weights(mesh, params)[inner]
    kp, km = fs.elements[inner, 0], fs.elements[inner, 1]
    rows = np.concatenate([kp, km, kp, km])
    cols = np.concatenate([kp, km, km, kp])
    vals = np.concatenate([w, w, -w, -w])
    n = mesh.n_elements
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def rt0_coefficients(mesh: FineMesh) -> np.ndarray:
    """Signed scale ``+-|F|/(d|K|)`` of the RT0 function of local facet i on K.

    On element k, ``phi_F(x) = coeff[k, i] * (x - x_i)`` where x_i is the
    vertex opposite local facet i.
    """
    fs = mesh.facets
    lengths = fs.lengths[fs.element_facets]
    return fs.element_signs * lengths / (mesh.d * mesh.areas[:, None])


def rt0_evaluate(mesh: FineMesh, facet: int, element: int, points: np.ndarray) -> np.ndarray:
    """Value of ``phi_F`` at physical points of one element (zero off its support)."""
    points = np.atleast_2d(points)
    local = np.flatnonzero(mesh.facets.element_facets[element] == facet)
    if local.size == 0:
        return np.zeros_like(points, dtype=float)
    i = int(local[0])
    coeff = rt0_coefficients(mesh)[element, i]
    return coeff * (points - mesh.vertices[element, i])


@dataclass
class LiftedField:
    """P1 velocity plus RT0 combination of scaled pressure jumps.

    ``rt_coeffs`` is indexed by facet and is nonzero only on
    macro-interior facets.
    """

    mesh: FineMesh
    p1_part: np.ndarray
    rt_coeffs: np.ndarray

    def element_rt(self) -> np.ndarray:
        """Per element and local facet: ``rt_coeff * rt0 scale``, shape (K, 3)."""
        return self.rt_coeffs[self.mesh.facets.element_facets] * rt0_coefficients(self.mesh)

    def evaluate(self, bary: np.ndarray) -> np.ndarray:
        """Values at barycentric points on every element, shape (K, nq, 2)."""
        mesh = self.mesh
        vals = evaluate_p1(mesh, self.p1_part, bary)
        pts = np.einsum("qa,kad->kqd", bary, mesh.vertices)
        c = self.element_rt()
        for i in range(3):
            vals += c[:, i, None, None] * (pts - mesh.vertices[:, i, None, :])
        return vals

    def evaluate_at(self, element: int, points: np.ndarray) -> np.ndarray:
        mesh = self.mesh
        points = np.atleast_2d(points)
        lam = _barycentric(mesh.vertices[element], points)
        vals = lam @ self.p1_part[mesh.elements[element]]
        c = self.element_rt()[element]
        for i in range(3):
            vals = vals + c[i] * (points - mesh.vertices[element, i])
        return vals

    def divergence(self) -> np.ndarray:
        return lifted_divergence(self)


def _barycentric(tri: np.ndarray, points: np.ndarray) -> np.ndarray:
    T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    st = np.linalg.solve(T, (points - tri[0]).T).T
    return np.column_stack([1 - st.sum(axis=1), st])


def lift(mesh: FineMesh, v: np.ndarray, q: np.ndarray, params: PowerLawParams) -> LiftedField:
    """``v + sum_M sum_{F in F_I(M)} tau_F [[q]]_F phi_F``."""
    fs = mesh.facets
    coeffs = np.zeros(len(fs))
    inner = fs.kind == MACRO_INTERIOR
    coeffs[inner] = tau_F(fs.lengths[inner], params) * p0_jumps(mesh, q)[inner]
    return LiftedField(mesh, np.asarray(v, dtype=float), coeffs)


def lifted_divergence(L: LiftedField) -> np.ndarray:
    """Elementwise constant divergence; ``div phi_F = +-|F|/|K|`` on K."""
    mesh = L.mesh
    return p1_divergence(mesh, L.p1_part) + mesh.d * L.element_rt().sum(axis=1)


def lifted_normal_flux(L: LiftedField, facet: int, element: int, npoints: int = 2) -> float:
    """``integral_F L . n_F`` evaluated from the trace on one adjacent element."""
    mesh = L.mesh
    a, b = mesh.nodes[mesh.facets.nodes[facet]]
    t, w = line_rule(npoints)
    pts = a + t[:, None] * (b - a)
    vals = L.evaluate_at(element, pts)
    return float(mesh.facets.lengths[facet] * (w @ (vals @ mesh.facets.normals[facet])))


def lebesgue_norm(mesh: FineMesh, values: np.ndarray, weights: np.ndarray, s: float) -> float:
    """``||w||_{0,s}`` of a vector field sampled at quadrature points (K, nq, c)."""
    mag = np.linalg.norm(values, axis=-1) if values.ndim == 3 else np.abs(values)
    return float((mesh.areas @ ((mag**s) @ weights)) ** (1 / s))


@dataclass
class LiftStability:
    lifted_norm: float  # ||L||_{0, 2 r_tilde}
    velocity_seminorm: float  # |v|_{1, r}
    jump_seminorm: float  # s(q, q)^{1/2}

    @property
    def ratio(self) -> float:
        den = self.velocity_seminorm + self.jump_seminorm
        return self.lifted_norm / den if den > 0 else 0.0


def lift_stability_report(L: LiftedField, q: np.ndarray, params: PowerLawParams) -> LiftStability:
    rule = triangle_rule(DATA_DEGREE)
    vals = L.evaluate(rule.points)
    return LiftStability(
        lifted_norm=lebesgue_norm(L.mesh, vals, rule.weights, 2 * params.r_tilde),
        velocity_seminorm=p1_seminorm(L.mesh, L.p1_part, params.r),
        jump_seminorm=np.sqrt(max(stab_form(L.mesh, q, q, params), 0.0)),
    )
