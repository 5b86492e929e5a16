"""Sparse blocks of the stabilised P1/P0 discretisation.

Velocity unknowns are numbered component-major: dof ``c * n_nodes + i`` is
component c at node i. Dirichlet nodes are removed by restricting to
``free_dofs``. All blocks are assembled on the full dof set; the solver
slices them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import FineMesh
from .params import PowerLawParams
from .quadrature import DATA_DEGREE, FORM_DEGREE, triangle_rule
from .spaces import p1_gradient
from .stabilisation import LiftedField, lift, stab_matrix


class AssemblyError(RuntimeError):
    pass


def free_dofs(mesh: FineMesh) -> np.ndarray:
    interior = np.flatnonzero(~mesh.boundary_nodes)
    return np.concatenate([interior, interior + mesh.n_nodes])


def _scatter(mesh: FineMesh, local: np.ndarray) -> sp.csr_matrix:
    """Scalar (N x N) matrix from element matrices of shape (K, 3, 3)."""
    e = mesh.elements
    rows = np.repeat(e, 3, axis=1).ravel()
    cols = np.tile(e, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def viscosity(mesh: FineMesh, u_k: np.ndarray, params: PowerLawParams) -> np.ndarray:
    """Elementwise ``(|grad u_k|^2 + eps^2)^((r-2)/2)``."""
    G = p1_gradient(mesh, u_k)
    mag2 = np.sum(G**2, axis=(1, 2))
    base = mag2 + params.epsilon_reg**2
    if params.r == 2.0:
        return np.ones(mesh.n_elements)
    with np.errstate(divide="ignore"):
        nu = base ** ((params.r - 2.0) / 2.0)
    if not np.all(np.isfinite(nu)) or (params.r > 2.0 and np.any(nu == 0.0)):
        k = int(np.flatnonzero(~np.isfinite(nu) | (nu == 0.0))[0])
        raise AssemblyError(
            f"viscosity degenerates on element {k} (grad u = 0 with epsilon_reg = "
            f"{params.epsilon_reg}); use a positive epsilon_reg"
        )
    return nu


def scalar_stiffness(mesh: FineMesh, coeff: np.ndarray | None = None) -> sp.csr_matrix:
    g = mesh.basis_gradients
    w = mesh.areas if coeff is None else mesh.areas * coeff
    local = w[:, None, None] * np.einsum("kid,kjd->kij", g, g)
    return _scatter(mesh, local)


def assemble_viscous(mesh: FineMesh, u_k: np.ndarray, params: PowerLawParams):
    """Vector stiffness weighted by the frozen viscosity of ``u_k``.

    Returns ``(A, nu)`` with A of size (2N, 2N).
    """
    nu = viscosity(mesh, u_k, params)
    K = scalar_stiffness(mesh, nu)
    return sp.block_diag([K, K], format="csr"), nu


def assemble_convection(mesh: FineMesh, beta: LiftedField) -> sp.csr_matrix:
    """``N[(i,c),(j,c)] = -integral phi_j (beta . grad phi_i)``.

    This is the matrix of ``-(beta (x) u, grad v)`` with beta the advecting
    field; no skew-symmetrisation is applied.
    """
    rule = triangle_rule(FORM_DEGREE)
    b = beta.evaluate(rule.points)  # (K, nq, 2)
    g = mesh.basis_gradients  # (K, 3, 2)
    bg = np.einsum("kqd,kid->kqi", b, g)  # beta . grad phi_i at points
    local = -mesh.areas[:, None, None] * np.einsum("q,kqi,qj->kij", rule.weights, bg, rule.points)
    C = _scatter(mesh, local)
    return sp.block_diag([C, C], format="csr")


def assemble_div_pressure(mesh: FineMesh) -> sp.csr_matrix:
    """``B[K, (j,c)] = integral_K d phi_j / d x_c``, size (n_elements, 2N)."""
    g = mesh.basis_gradients
    k = np.repeat(np.arange(mesh.n_elements), 3)
    cols = mesh.elements.ravel()
    n = mesh.n_nodes
    vals_x = (mesh.areas[:, None] * g[:, :, 0]).ravel()
    vals_y = (mesh.areas[:, None] * g[:, :, 1]).ravel()
    return sp.csr_matrix(
        (np.concatenate([vals_x, vals_y]), (np.concatenate([k, k]), np.concatenate([cols, cols + n]))),
        shape=(mesh.n_elements, 2 * n),
    )


def assemble_rhs(mesh: FineMesh, f, degree: int = DATA_DEGREE) -> np.ndarray:
    """Load vector ``integral f . phi_i`` (component-major, length 2N)."""
    rule = triangle_rule(degree)
    pts = rule.physical_points(mesh.vertices)  # (K, nq, 2)
    flat = pts.reshape(-1, 2)
    vals = np.asarray(f(flat), dtype=float).reshape(pts.shape)
    bad = ~np.all(np.isfinite(vals), axis=-1)
    if np.any(bad):
        k, q = np.argwhere(bad)[0]
        raise AssemblyError(f"forcing is not finite at point {tuple(pts[k, q])}")
    local = mesh.areas[:, None, None] * np.einsum("q,kqc,qi->kic", rule.weights, vals, rule.points)
    n = mesh.n_nodes
    out = np.zeros(2 * n)
    for c in range(2):
        out[c * n : (c + 1) * n] = np.bincount(mesh.elements.ravel(), weights=local[:, :, c].ravel(), minlength=n)
    return out


def to_dofs(field: np.ndarray) -> np.ndarray:
    """(N, 2) nodal field to component-major dof vector."""
    return np.asarray(field, dtype=float).T.ravel()


def to_field(vec: np.ndarray, n_nodes: int) -> np.ndarray:
    return np.asarray(vec).reshape(2, n_nodes).T.copy()


@dataclass
class StabilisedSystem:
    """Blocks of one Picard step, restricted to free velocity dofs."""

    A: sp.csr_matrix
    N: sp.csr_matrix
    B: sp.csr_matrix
    S: sp.csr_matrix
    rhs_u: np.ndarray
    mean_row: np.ndarray
    free: np.ndarray
    nu: np.ndarray


def assemble_system(mesh: FineMesh, params: PowerLawParams, u_k: np.ndarray, p_k: np.ndarray,
                    rhs: np.ndarray, convection: bool = True, linear_viscosity: bool = False,
                    B=None, S=None) -> StabilisedSystem:
    free = free_dofs(mesh)
    if linear_viscosity:
        K = scalar_stiffness(mesh)
        A = sp.block_diag([K, K], format="csr")
        nu = np.ones(mesh.n_elements)
    else:
        A, nu = assemble_viscous(mesh, u_k, params)
    if convection:
        N = assemble_convection(mesh, lift(mesh, u_k, p_k, params))
    else:
        N = sp.csr_matrix(A.shape)
    B = assemble_div_pressure(mesh) if B is None else B
    S = stab_matrix(mesh, params) if S is None else S
    return StabilisedSystem(
        A=A[free][:, free],
        N=N[free][:, free],
        B=B[:, free],
        S=S,
        rhs_u=rhs[free],
        mean_row=mesh.areas.copy(),
        free=free,
        nu=nu,
    )


def nonlinear_residual(mesh: FineMesh, params: PowerLawParams, u: np.ndarray, p: np.ndarray,
                       rhs: np.ndarray, B=None, S=None):
    """Residuals of the momentum (free dofs) and continuity equations.

    Momentum: ``(nu(u) grad u, grad v) - (L(u,p) (x) u, grad v) - (p, div v) - <f, v>``.
    Continuity: ``(q, div u) + s(p, q)`` for the indicator q of each element.
    """
    free = free_dofs(mesh)
    B = assemble_div_pressure(mesh) if B is None else B
    S = stab_matrix(mesh, params) if S is None else S
    A, _ = assemble_viscous(mesh, u, params)
    N = assemble_convection(mesh, lift(mesh, u, p, params))
    x = to_dofs(u)
    r_u = (A @ x + N @ x - B.T @ p - rhs)[free]
    r_p = B @ x + S @ p
    return r_u, r_p
