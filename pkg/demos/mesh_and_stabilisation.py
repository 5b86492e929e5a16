"""
Macro meshes, pressure jumps and the divergence-free lifting
============================================================

A coarse triangulation of the unit square is red-refined so that every
macro triangle holds four children. Pressure jumps are penalised only on
the three facets inside each macro element, and the same jumps, scaled and
carried by lowest-order Raviart-Thomas functions, correct a P1 velocity
into a field with prescribed facet fluxes.
"""

import numpy as np

from powerlaw_fem import PowerLawParams, refined_unit_square
from powerlaw_fem.mesh import BOUNDARY, MACRO_INTERFACE, MACRO_INTERIOR
from powerlaw_fem.spaces import prolong_macro
from powerlaw_fem.stabilisation import lift, stab_form, stab_matrix

mesh = refined_unit_square(2)
print(f"{len(mesh.macro.elements)} macro triangles, {mesh.n_elements} fine triangles, {mesh.n_nodes} nodes")

# facet classes of the refined mesh
kinds = mesh.facets.kind
for name, k in (("boundary", BOUNDARY), ("macro interface", MACRO_INTERFACE), ("macro interior", MACRO_INTERIOR)):
    print(f"{name:>16}: {np.sum(kinds == k)} facets")

# the exponents that set the penalty weight tau_F = h_F^alpha
for r in (1.2, 1.5, 1.8, 2.0, 2.5):
    p = PowerLawParams.from_r(r)
    print(f"r = {r:3.1f}: r_tilde = {p.r_tilde:.4f}, alpha = {p.alpha:.4f}")

# pressures constant on each macro element are invisible to the stabilisation
params = PowerLawParams.from_r(1.5)
rng = np.random.default_rng(0)
qH = prolong_macro(mesh, rng.standard_normal(len(mesh.macro.elements)))
print("s(q_H, q_H) =", stab_form(mesh, qH, qH, params))

# its kernel is exactly the macro-constant pressures
S = stab_matrix(mesh, params).toarray()
w = np.linalg.eigvalsh(S)
print(f"zero eigenvalues of S: {np.sum(np.abs(w) < 1e-12)} (macro elements: {len(mesh.macro.elements)})")

# lift a random velocity and pressure; the divergence of the lift on each
# element is div v plus the weighted jump fluxes through its facets
v = rng.standard_normal((mesh.n_nodes, 2))
v[mesh.boundary_nodes] = 0.0
q = rng.standard_normal(mesh.n_elements)
L = lift(mesh, v, q, params)
print("max |div L| for arbitrary (v, q):", np.abs(L.divergence()).max())
print("nonzero RT coefficients only on macro-interior facets:",
      bool(np.all(L.rt_coeffs[kinds != MACRO_INTERIOR] == 0)))
