"""Stabilised P1/P0 finite elements for stationary power-law flow.

The pressure-jump stabilisation acts only on facets inside each macro
element of a red-refined mesh; the matching Raviart-Thomas lifting of the
jumps gives an exactly solenoidal advecting field, so the convection term
needs no skew-symmetrisation.
"""

from .assembly import (
    AssemblyError,
    StabilisedSystem,
    assemble_convection,
    assemble_div_pressure,
    assemble_rhs,
    assemble_system,
    assemble_viscous,
    nonlinear_residual,
)
from .manufactured import ManufacturedCase, case_M1, forcing, forcing_oracle, get_case
from .mesh import (
    FacetSet,
    FineMesh,
    MacroMesh,
    MeshError,
    build_unit_square_macro,
    classify_facets,
    read_mesh,
    red_refine,
    refined_unit_square,
    write_mesh,
)
from .params import AdmissibilityError, PowerLawParams, alpha_exponent, critical_exponent
from .quadrature import QuadratureRule, line_rule, triangle_rule
from .solver import (
    ConvergenceError,
    LinearSolveError,
    SolutionState,
    SolverConfig,
    apriori_quantities,
    linear_saddle_solve,
    picard_solve,
)
from .spaces import (
    fortin_interpolate,
    fortin_rho_M,
    jump_seminorm_bound_check,
    p1_gradient,
    project_pi_H,
    project_pi_h,
    quasi_interpolate,
)
from .stabilisation import (
    LiftedField,
    lift,
    lift_stability_report,
    lifted_divergence,
    stab_form,
    stab_matrix,
    tau_F,
)
from .verify import ConvergenceTable, run_convergence_study, run_invariant_suite
from .vtk import write_vtk

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "StabilisedSystem",
    "assemble_convection",
    "assemble_div_pressure",
    "assemble_rhs",
    "assemble_system",
    "assemble_viscous",
    "nonlinear_residual",
    "FacetSet",
    "FineMesh",
    "MacroMesh",
    "MeshError",
    "build_unit_square_macro",
    "classify_facets",
    "read_mesh",
    "red_refine",
    "refined_unit_square",
    "write_mesh",
    "ConvergenceError",
    "LinearSolveError",
    "SolutionState",
    "SolverConfig",
    "apriori_quantities",
    "linear_saddle_solve",
    "picard_solve",
    "fortin_interpolate",
    "fortin_rho_M",
    "jump_seminorm_bound_check",
    "p1_gradient",
    "project_pi_H",
    "project_pi_h",
    "quasi_interpolate",
    "LiftedField",
    "lift",
    "lift_stability_report",
    "lifted_divergence",
    "stab_form",
    "stab_matrix",
    "tau_F",
    "ManufacturedCase",
    "case_M1",
    "forcing",
    "forcing_oracle",
    "get_case",
    "AdmissibilityError",
    "PowerLawParams",
    "alpha_exponent",
    "critical_exponent",
    "QuadratureRule",
    "line_rule",
    "triangle_rule",
    "ConvergenceTable",
    "run_convergence_study",
    "run_invariant_suite",
    "write_vtk",
]
