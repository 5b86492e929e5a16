"""
A Fortin operator for the macro-element pressure space
======================================================

Nodal interpolation is corrected by one bubble-like P1 field per macro
element, placed on the midpoints of its interior facets, so that the
interpolant has the same divergence moments against macro-constant
pressures as the original field. This is what makes the P1/P0 pair stable
once the pressure jumps inside macro elements are penalised.
"""

import numpy as np

from powerlaw_fem import refined_unit_square
from powerlaw_fem.manufactured import case_M1
from powerlaw_fem.spaces import coarse_divergence_moments, fortin_interpolate, jump_seminorm_bound_check
from powerlaw_fem.verify import PolynomialField, fortin_defect

rng = np.random.default_rng(1)
v = PolynomialField.random(rng)

for n in (2, 4, 8):
    mesh = refined_unit_square(n)
    defect = fortin_defect(mesh, v, v.divergence, v.gradient)
    print(f"n = {n}: max relative coarse divergence defect {defect.max():.2e}")

# a solenoidal field keeps zero coarse divergence moments after interpolation
mesh = refined_unit_square(4)
Iu = fortin_interpolate(mesh, case_M1().velocity)
print("max coarse divergence moment of I(u):", np.abs(coarse_divergence_moments(mesh, Iu)).max())

# the jumps control the deviation from macro averages
q = rng.standard_normal(mesh.n_elements)
rep = jump_seminorm_bound_check(mesh, q)
print(f"max ||q - Pi_H q||_M / |q|_jumps over macro elements: {rep.max_ratio:.3f}")
