"""Picard iteration for the stabilised power-law system."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    StabilisedSystem,
    assemble_div_pressure,
    assemble_rhs,
    assemble_system,
    nonlinear_residual,
    to_dofs,
    to_field,
    viscosity,
)
from .mesh import FineMesh
from .params import PowerLawParams
from .quadrature import DATA_DEGREE, triangle_rule
from .spaces import p0_norm, p1_seminorm
from .stabilisation import LiftedField, lebesgue_norm, lift, stab_form, stab_matrix

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    """Picard iteration did not reach the tolerance; ``state`` holds the history."""

    def __init__(self, message: str, state: "SolutionState"):
        super().__init__(message)
        self.state = state


@dataclass
class SolverConfig:
    max_iterations: int = 200
    tolerance: float = 1e-10
    damping: float | None = None  # None: 1 for r >= 2, 0.7 for r < 2
    linear_tolerance: float = 1e-10

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.linear_tolerance > 0:
            raise ValueError("linear_tolerance must be positive")
        if self.damping is not None and not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    def damping_for(self, params: PowerLawParams) -> float:
        if self.damping is not None:
            return self.damping
        return 1.0 if params.r >= 2.0 else 0.7


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    nu_min: float
    nu_max: float
    s_php: float


@dataclass
class SolutionState:
    mesh: FineMesh
    params: PowerLawParams
    u: np.ndarray  # (N, 2) nodal velocity, zero on the boundary
    p: np.ndarray  # (K,) element pressure, zero mean
    rhs: np.ndarray
    history: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    multiplier: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def lifted(self) -> LiftedField:
        return lift(self.mesh, self.u, self.p, self.params)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "residual", "nu_min", "nu_max", "s_php"])
            for rec in self.history:
                w.writerow([rec.iteration] + [f"{v:.17g}" for v in (rec.residual, rec.nu_min, rec.nu_max, rec.s_php)])


def linear_saddle_solve(system: StabilisedSystem, linear_tolerance: float = 1e-10):
    """Solve one frozen-coefficient saddle point problem.

    The block system is ``[[A+N, -B^T, 0], [-B, -S, m], [0, m^T, 0]]`` with
    m the element areas; the last row pins the pressure mean and its
    multiplier vanishes for a compatible right-hand side.
    Returns ``(u_free, p, multiplier)``.

    The dense multiplier row ruins the fill-in of a direct factorisation, so
    the equivalent system with the first pressure unknown fixed is factored
    instead; the pressure is then shifted to zero mean, the multiplier is
    recovered from the dropped row, and the residual is checked against the
    full bordered system.
    """
    nu_ = system.A.shape[0]
    nk = system.S.shape[0]
    m = system.mean_row
    K0 = sp.bmat([[system.A + system.N, -system.B.T], [-system.B, -system.S]], format="csc")
    b0 = np.concatenate([system.rhs_u, np.zeros(nk)])
    keep = np.delete(np.arange(nu_ + nk), nu_)
    Kp = K0[keep][:, keep].tocsc()
    try:
        lu = spla.splu(Kp, permc_spec="COLAMD")
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise LinearSolveError(f"saddle point matrix is singular: {exc}") from exc
    y = lu.solve(b0[keep])
    y += lu.solve(b0[keep] - Kp @ y)  # one step of iterative refinement
    if not np.all(np.isfinite(y)):
        raise LinearSolveError("linear solve produced non-finite values")
    x = np.zeros(nu_ + nk)
    x[keep] = y
    u, p = x[:nu_], x[nu_:]
    p = p - (m @ p) / m.sum()
    x[nu_:] = p
    lam = -float((K0 @ x - b0)[nu_]) / m[0]

    r0 = K0 @ x - b0
    r0[nu_:] += m * lam
    res = np.sqrt(r0 @ r0 + (m @ p) ** 2)
    scale = max(np.linalg.norm(b0), np.finfo(float).tiny)
    if not res <= linear_tolerance * scale:
        raise LinearSolveError(f"linear solve stagnated: relative residual {res / scale:.3e}")
    return u, p, lam


def residual_norm(r_u: np.ndarray, r_p: np.ndarray, rhs: np.ndarray) -> float:
    """Max norm of the algebraic residual scaled by the max norm of the load."""
    scale = np.abs(rhs).max() if rhs.size and np.abs(rhs).max() > 0 else 1.0
    top = max(np.abs(r_u).max(initial=0.0), np.abs(r_p).max(initial=0.0))
    return float(top / scale)


def picard_solve(mesh: FineMesh, params: PowerLawParams, f=None, config: SolverConfig | None = None,
                 rhs: np.ndarray | None = None) -> SolutionState:
    """Fixed-point iteration freezing viscosity and advecting field.

    Starts from the Stokes solution (unit viscosity, no convection). Each
    step solves the linear saddle point problem with ``nu(u_k)`` and
    ``L(u_k, p_k)`` frozen and relaxes by the damping factor.
    """
    config = config or SolverConfig()
    if rhs is None:
        if f is None:
            raise ValueError("give either a forcing function f or an assembled rhs")
        rhs = assemble_rhs(mesh, f)
    B = assemble_div_pressure(mesh)
    S = stab_matrix(mesh, params)
    theta = config.damping_for(params)
    n = mesh.n_nodes

    def solve(u_k, p_k, first=False):
        system = assemble_system(mesh, params, u_k, p_k, rhs, convection=not first,
                                 linear_viscosity=first, B=B, S=S)
        uf, p, lam = linear_saddle_solve(system, config.linear_tolerance)
        x = np.zeros(2 * n)
        x[system.free] = uf
        return to_field(x, n), p, lam, system.nu

    u, p, lam, _ = solve(np.zeros((n, 2)), np.zeros(mesh.n_elements), first=True)
    state = SolutionState(mesh, params, u, p, rhs, multiplier=lam)

    for it in range(1, config.max_iterations + 1):
        r_u, r_p = nonlinear_residual(mesh, params, state.u, state.p, rhs, B=B, S=S)
        res = residual_norm(r_u, r_p, rhs)
        nu = _nu_range(mesh, params, state.u)
        state.history.append(IterationRecord(it, res, nu[0], nu[1], stab_form(mesh, state.p, state.p, params)))
        log.debug("picard %d residual %.3e", it, res)
        if res <= config.tolerance:
            state.converged = True
            return state
        if it == config.max_iterations:
            break
        u_new, p_new, lam, _ = solve(state.u, state.p)
        state.u = theta * u_new + (1.0 - theta) * state.u
        state.p = theta * p_new + (1.0 - theta) * state.p
        state.multiplier = lam

    raise ConvergenceError(
        f"Picard iteration did not converge in {config.max_iterations} iterations "
        f"(last residual {state.history[-1].residual:.3e}, tolerance {config.tolerance:.1e})",
        state,
    )


def _nu_range(mesh, params, u):
    nu = viscosity(mesh, u, params)
    return float(nu.min()), float(nu.max())


@dataclass
class AprioriQuantities:
    velocity_energy: float  # |u_h|_{1,r}^r
    lifted_norm: float  # ||L(u_h, p_h)||_{0, 2 r_tilde}
    stabilisation: float  # s(p_h, p_h)
    pressure_norm: float  # ||p_h||_{0, r_tilde}

    def as_tuple(self):
        return (self.velocity_energy, self.lifted_norm, self.stabilisation, self.pressure_norm)


def apriori_quantities(state: SolutionState) -> AprioriQuantities:
    mesh, params = state.mesh, state.params
    rule = triangle_rule(DATA_DEGREE)
    L = state.lifted.evaluate(rule.points)
    return AprioriQuantities(
        velocity_energy=p1_seminorm(mesh, state.u, params.r) ** params.r,
        lifted_norm=lebesgue_norm(mesh, L, rule.weights, 2 * params.r_tilde),
        stabilisation=stab_form(mesh, state.p, state.p, params),
        pressure_norm=p0_norm(mesh, state.p, params.r_tilde),
    )


def load_functional(state: SolutionState) -> float:
    """``<f, u_h>``."""
    return float(state.rhs @ to_dofs(state.u))
