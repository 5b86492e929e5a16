"""Invariant checks, refinement studies and the acceptance evidence.

Every check returns a :class:`Check` with the measured value and the
threshold it was compared against, so a failing run says by how much.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import AssemblyError, assemble_convection, to_dofs
from .manufactured import ManufacturedCase, forcing
from .mesh import BOUNDARY, MACRO_INTERIOR, FineMesh, refined_unit_square
from .params import (
    PowerLawParams,
    alpha_exponent,
    critical_exponent,
    lower_bound,
    middle_regime_start,
)
from .quadrature import DATA_DEGREE, line_rule, triangle_rule
from .solver import (
    ConvergenceError,
    LinearSolveError,
    SolutionState,
    SolverConfig,
    apriori_quantities,
    load_functional,
    picard_solve,
)
from .spaces import (
    coarse_divergence_moments,
    fortin_interpolate,
    p1_gradient,
    p1_seminorm,
    project_pi_H,
    prolong_macro,
)
from .stabilisation import lift, rt0_coefficients, stab_form, stab_matrix


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: {self.value:.6g} (threshold {self.threshold:.6g})"
        return f"{text} {self.detail}" if self.detail else text


def _check_le(name, value, threshold, detail=""):
    value = float(value)
    return Check(name, value, float(threshold), bool(value <= threshold), detail)


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]

    def extend(self, checks) -> None:
        self.checks.extend(checks)


# ---------------------------------------------------------------- error norms


def _element_points(mesh: FineMesh):
    rule = triangle_rule(DATA_DEGREE)
    pts = rule.physical_points(mesh.vertices)
    return rule, pts, pts.reshape(-1, 2)


def _integrate(mesh: FineMesh, rule, values: np.ndarray) -> float:
    """Integral of values sampled at rule points, shape (K, nq)."""
    return float(mesh.areas @ (values @ rule.weights))


def velocity_gradient_error(mesh: FineMesh, case: ManufacturedCase, u_h, s: float) -> float:
    """``|u - u_h|_{1,s}``."""
    rule, pts, flat = _element_points(mesh)
    G = case.gradient(flat).reshape(pts.shape[:2] + (2, 2))
    diff = G - p1_gradient(mesh, u_h)[:, None]
    mag = np.sqrt(np.sum(diff**2, axis=(-2, -1)))
    return _integrate(mesh, rule, mag**s) ** (1 / s)


def velocity_error(mesh: FineMesh, case: ManufacturedCase, u_h, s: float) -> float:
    """``||u - u_h||_{0,s}``."""
    rule, pts, flat = _element_points(mesh)
    exact = case.velocity(flat).reshape(pts.shape)
    approx = np.einsum("qa,kac->kqc", rule.points, np.asarray(u_h)[mesh.elements])
    mag = np.linalg.norm(exact - approx, axis=-1)
    return _integrate(mesh, rule, mag**s) ** (1 / s)


def pressure_error(mesh: FineMesh, case: ManufacturedCase, p_h, s: float) -> float:
    """``||p - p_h||_{0,s}``."""
    rule, pts, flat = _element_points(mesh)
    exact = case.pressure(flat).reshape(pts.shape[:2])
    return _integrate(mesh, rule, np.abs(exact - np.asarray(p_h)[:, None]) ** s) ** (1 / s)


# ---------------------------------------------------------------- refinement study

COLUMNS = ["level", "h", "err_u_w1r", "err_u_l2rt", "err_p_lrt", "s_php", "max_div_lifted",
           "order_u_w1r", "order_u_l2rt", "order_p_lrt"]
ERROR_COLUMNS = ("err_u_w1r", "err_u_l2rt", "err_p_lrt")


@dataclass
class ConvergenceRow:
    level: int
    n_macro: int
    h: float
    err_u_w1r: float = math.nan
    err_u_l2rt: float = math.nan
    err_p_lrt: float = math.nan
    s_php: float = math.nan
    max_div_lifted: float = math.nan
    order_u_w1r: float = math.nan
    order_u_l2rt: float = math.nan
    order_p_lrt: float = math.nan
    iterations: int = 0
    status: str = "ok"


@dataclass
class ConvergenceTable:
    case: str
    params: PowerLawParams
    rows: list[ConvergenceRow]
    states: list[SolutionState | None] = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# case = {self.case}\n")
            for line in self.params.header_lines():
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for row in self.rows:
                vals = [getattr(row, c) for c in COLUMNS]
                w.writerow([vals[0]] + [f"{v:.17g}" for v in vals[1:]])


def level_mesh(n: int, level: int) -> FineMesh:
    """Red refinement of the ``n * 2**level`` unit square macro mesh."""
    return refined_unit_square(n * 2**level)


def _observed_order(coarse: float, fine: float) -> float:
    if not (coarse > 0 and fine > 0):
        return math.nan
    return math.log2(coarse / fine)


def run_convergence_study(case: ManufacturedCase, params: PowerLawParams, levels: int = 3, n: int = 2,
                          config: SolverConfig | None = None) -> ConvergenceTable:
    """Solve the manufactured problem on ``levels`` nested meshes.

    Level k uses the red-refined ``n * 2**k`` macro mesh, k = 1..levels, so
    h halves between rows. A failed solve marks its row and leaves NaNs.
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if n < 1:
        raise ValueError("n must be at least 1")
    f = forcing(case, params)
    rows, states = [], []
    for k in range(1, levels + 1):
        mesh = level_mesh(n, k)
        row = ConvergenceRow(level=k, n_macro=n * 2**k, h=mesh.h)
        try:
            state = picard_solve(mesh, params, f, config)
        except (ConvergenceError, LinearSolveError, AssemblyError) as exc:
            row.status = f"failed: {exc}"
            rows.append(row)
            states.append(getattr(exc, "state", None))
            continue
        row.err_u_w1r = velocity_gradient_error(mesh, case, state.u, params.r)
        row.err_u_l2rt = velocity_error(mesh, case, state.u, 2 * params.r_tilde)
        row.err_p_lrt = pressure_error(mesh, case, state.p, params.r_tilde)
        row.s_php = stab_form(mesh, state.p, state.p, params)
        row.max_div_lifted = float(np.abs(state.lifted.divergence()).max())
        row.iterations = state.iterations
        rows.append(row)
        states.append(state)
    for prev, row in zip(rows, rows[1:]):
        for col in ERROR_COLUMNS:
            setattr(row, col.replace("err", "order"), _observed_order(getattr(prev, col), getattr(row, col)))
    return ConvergenceTable(case.name, params, rows, states)


# ---------------------------------------------------------------- single checks


def exponent_checks(npoints: int = 1000, seed: int = 0) -> list[Check]:
    """Branch-by-branch comparison with the closed forms at d = 2 and 3."""
    rng = np.random.default_rng(seed)
    checks = []
    for d in (2, 3):
        lo = lower_bound(d)
        rs = lo + (4.0 - lo) * (1.0 - rng.random(npoints))  # (lo, 4]
        rs = np.concatenate([rs, [middle_regime_start(d), 2.0]])
        err_rt, err_a = 0.0, 0.0
        for r in rs:
            rstar = d * r / (d - r) if r < d else math.inf
            rt = min(r / (r - 1), rstar / 2)
            if r >= 2:
                a = 1.0
            elif r >= 3 * d / (d + 2):
                a = 1 - d + 2 * d / rt
            else:
                a = (d - 1) / 3
            err_rt = max(err_rt, abs(critical_exponent(r, d) - rt))
            err_a = max(err_a, abs(alpha_exponent(r, d) - a))
        checks.append(_check_le(f"critical exponent sweep d={d}", err_rt, 1e-12))
        checks.append(_check_le(f"alpha sweep d={d}", err_a, 1e-12))
        peak = 3 * d / (2 * d - 2)
        checks.append(_check_le(f"peak critical exponent d={d}",
                                abs(critical_exponent(middle_regime_start(d), d) - peak), 1e-12,
                                f"value {critical_exponent(middle_regime_start(d), d):.17g}"))
    return checks


def rt_dof_check(mesh: FineMesh, npoints: int = 2) -> Check:
    """``phi_F . n_F'`` at facet points is 1 on F' = F and 0 on the other facets."""
    fs = mesh.facets
    coeff = rt0_coefficients(mesh)
    t, _ = line_rule(npoints)
    worst, where = 0.0, ""
    for j in range(3):  # facet F' of the element, opposite local vertex j
        a = mesh.vertices[:, (j + 1) % 3]
        b = mesh.vertices[:, (j + 2) % 3]
        pts = a[:, None] + t[None, :, None] * (b - a)[:, None]  # (K, nq, 2)
        n = fs.normals[fs.element_facets[:, j]]
        for i in range(3):
            vals = coeff[:, i, None] * np.einsum("kqd,kd->kq", pts - mesh.vertices[:, i, None], n)
            dev = np.abs(vals - (1.0 if i == j else 0.0))
            k = int(np.argmax(dev.max(axis=1)))
            if dev[k].max() > worst:
                worst = float(dev[k].max())
                where = f"element {k}, facet {fs.element_facets[k, i]} on facet {fs.element_facets[k, j]}"
    return _check_le("RT0 normal trace table", worst, 1e-13, where)


def _coarse_moment_scale(mesh, state):
    return p1_seminorm(mesh, state.u, state.params.r)


def lifted_divergence_checks(state: SolutionState, tol: float = 1e-8) -> list[Check]:
    mesh = state.mesh
    scale = _coarse_moment_scale(mesh, state)
    div = np.abs(state.lifted.divergence())
    moments = np.abs(coarse_divergence_moments(mesh, state.u))
    tag = f"r={state.params.r:g} h={mesh.h:.4g}"
    return [
        _check_le(f"max |div L| {tag}", div.max(), tol * scale, f"element {int(div.argmax())}"),
        _check_le(f"coarse orthogonality {tag}", moments.max(), tol * scale, f"macro {int(moments.argmax())}"),
    ]


def skew_value(state: SolutionState) -> float:
    """``(L(u_h, p_h) (x) u_h, grad u_h)``, exact for the piecewise polynomial integrand."""
    x = to_dofs(state.u)
    return float(-(x @ (assemble_convection(state.mesh, state.lifted) @ x)))


def skew_check(state: SolutionState, tol: float = 1e-10) -> Check:
    scale = p1_seminorm(state.mesh, state.u, 2.0) ** 2
    return _check_le(f"skew identity r={state.params.r:g} h={state.mesh.h:.4g}",
                     abs(skew_value(state)), tol * scale)


def energy_gap(state: SolutionState) -> tuple[float, float]:
    """``(| |u_h|_{1,r}^r + s(p_h,p_h) - <f,u_h> |, <f,u_h>)``."""
    mesh, params = state.mesh, state.params
    lhs = p1_seminorm(mesh, state.u, params.r) ** params.r + stab_form(mesh, state.p, state.p, params)
    load = load_functional(state)
    return abs(lhs - load), load


def energy_check(state: SolutionState, nonlinear_tolerance: float) -> Check:
    gap, load = energy_gap(state)
    return _check_le(f"energy identity r={state.params.r:g} h={state.mesh.h:.4g}",
                     gap, 10 * nonlinear_tolerance * abs(load))


def apriori_checks(states: list[SolutionState], max_ratio: float = 3.0) -> list[Check]:
    """Spread ``max/min`` of each a priori quantity across refinement levels."""
    q = np.array([apriori_quantities(s).as_tuple() for s in states])
    names = ["|u_h|_{1,r}^r", "||L||_{0,2rt}", "s(p_h,p_h)", "||p_h||_{0,rt}"]
    r = states[0].params.r
    checks = []
    for j, name in enumerate(names):
        col = q[:, j]
        spread = col.max() / col.min() if col.min() > 0 else math.inf
        detail = "values " + ", ".join(f"{v:.4g}" for v in col)
        checks.append(_check_le(f"a priori spread {name} r={r:g}", spread, max_ratio, detail))
    return checks


def stabilisation_decay_check(table: ConvergenceTable) -> Check:
    """Largest ratio of consecutive ``s(p_h,p_h)``; strict decrease means it is below 1."""
    s = table.column("s_php")
    ratio = float(np.max(s[1:] / s[:-1])) if np.all(s[:-1] > 0) else math.nan
    detail = "values " + ", ".join(f"{v:.4g}" for v in s)
    return Check(f"s(p_h,p_h) strictly decreasing r={table.params.r:g}", ratio, 1.0,
                 bool(ratio < 1.0), detail)


def order_check(table: ConvergenceTable, floor: float = 0.8) -> Check:
    order = table.rows[-1].order_u_w1r
    return Check(f"W1r order between finest levels r={table.params.r:g}", order, floor,
                 bool(order >= floor))


def monotone_error_checks(table: ConvergenceTable) -> list[Check]:
    checks = []
    for col in ERROR_COLUMNS:
        e = table.column(col)
        ratio = float(np.max(e[1:] / e[:-1]))
        detail = "values " + ", ".join(f"{v:.4g}" for v in e)
        checks.append(_check_le(f"{col} non-increasing r={table.params.r:g}", ratio, 1.0, detail))
    return checks


# ---------------------------------------------------------------- Fortin identity


@dataclass
class PolynomialField:
    """``x(1-x)y(1-y) * P_c(x, y)`` with P_c quadratic; zero on the unit square boundary."""

    coeffs: np.ndarray  # (2, 6): 1, x, y, x^2, xy, y^2

    @classmethod
    def random(cls, rng) -> "PolynomialField":
        return cls(rng.standard_normal((2, 6)))

    @staticmethod
    def _monomials(x):
        X, Y = x[:, 0], x[:, 1]
        one = np.ones_like(X)
        mon = np.stack([one, X, Y, X * X, X * Y, Y * Y], axis=1)
        dx = np.stack([0 * X, one, 0 * X, 2 * X, Y, 0 * X], axis=1)
        dy = np.stack([0 * X, 0 * X, one, 0 * X, X, 2 * Y], axis=1)
        return mon, dx, dy

    def __call__(self, x):
        x = np.atleast_2d(x)
        X, Y = x[:, 0], x[:, 1]
        b = X * (1 - X) * Y * (1 - Y)
        mon, _, _ = self._monomials(x)
        return b[:, None] * (mon @ self.coeffs.T)

    def gradient(self, x):
        X, Y = x[:, 0], x[:, 1]
        b = X * (1 - X) * Y * (1 - Y)
        bx = (1 - 2 * X) * Y * (1 - Y)
        by = X * (1 - X) * (1 - 2 * Y)
        mon, dx, dy = self._monomials(x)
        P, Px, Py = mon @ self.coeffs.T, dx @ self.coeffs.T, dy @ self.coeffs.T
        G = np.empty((len(x), 2, 2))
        G[:, :, 0] = bx[:, None] * P + b[:, None] * Px
        G[:, :, 1] = by[:, None] * P + b[:, None] * Py
        return G

    def divergence(self, x):
        G = self.gradient(x)
        return G[:, 0, 0] + G[:, 1, 1]


def fortin_defect(mesh: FineMesh, v, divergence, gradient, npoints: int = 4):
    """Per macro: ``|(chi_M, div(v - I v))| / (||chi_M|| |v|_{1,2})``.

    ``(chi_M, div v)`` comes from a degree-7 element rule on the fine
    children, independent of the facet rule inside the operator.
    """
    Iv = fortin_interpolate(mesh, v, npoints=npoints)
    rule, pts, flat = _element_points(mesh)
    divs = divergence(flat).reshape(pts.shape[:2])
    exact = np.bincount(mesh.parent, weights=mesh.areas * (divs @ rule.weights),
                        minlength=len(mesh.macro.elements))
    discrete = coarse_divergence_moments(mesh, Iv)
    G = gradient(flat).reshape(pts.shape[:2] + (2, 2))
    v_semi = _integrate(mesh, rule, np.sum(G**2, axis=(-2, -1))) ** 0.5
    return np.abs(exact - discrete) / (np.sqrt(mesh.macro_areas) * v_semi)


def fortin_check(meshes, nfields: int = 20, seed: int = 0, tol: float = 1e-10) -> Check:
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for mesh in meshes:
        for i in range(nfields):
            v = PolynomialField.random(rng)
            rel = fortin_defect(mesh, v, v.divergence, v.gradient)
            if rel.max() > worst:
                worst = float(rel.max())
                where = f"field {i}, macro {int(rel.argmax())}, h={mesh.h:.4g}"
    return _check_le("Fortin coarse divergence identity", worst, tol, where)


# ---------------------------------------------------------------- jump bound


def jump_bound_ratio(mesh: FineMesh, q: np.ndarray, params: PowerLawParams) -> float:
    """``||q - Pi_H q||_0 / (h^{(1-alpha)/2} s(q,q)^{1/2})``."""
    dev = q - prolong_macro(mesh, project_pi_H(mesh, q))
    num = math.sqrt(float(mesh.areas @ dev**2))
    s = stab_form(mesh, q, q, params)
    return num / (mesh.h ** ((1 - params.alpha) / 2) * math.sqrt(s))


def jump_bound_check(meshes, params: PowerLawParams, nfields: int = 100, seed: int = 0,
                     max_spread: float = 2.0) -> Check:
    rng = np.random.default_rng(seed)
    per_level = []
    for mesh in meshes:
        ratios = [jump_bound_ratio(mesh, rng.standard_normal(mesh.n_elements), params) for _ in range(nfields)]
        per_level.append(max(ratios))
    spread = max(per_level) / min(per_level)
    detail = "level maxima " + ", ".join(f"{v:.4g}" for v in per_level)
    return _check_le(f"jump bound constant spread r={params.r:g}", spread, max_spread, detail)


# ---------------------------------------------------------------- invariant suite


def mesh_checks(mesh: FineMesh) -> list[Check]:
    fs = mesh.facets
    tag = f"h={mesh.h:.4g}"
    checks = [
        _check_le(f"total area {tag}", abs(mesh.areas.sum() - mesh.macro_areas.sum()), 1e-13),
        _check_le(f"unit normals {tag}", np.abs(np.linalg.norm(fs.normals, axis=1) - 1).max(), 1e-14),
    ]
    interior = fs.kind != BOUNDARY
    one_sided = int(np.sum(interior & (fs.elements[:, 1] < 0)) + np.sum(~interior & (fs.elements[:, 1] >= 0)))
    checks.append(_check_le(f"facet adjacency counts {tag}", one_sided, 0))
    inner = fs.kind == MACRO_INTERIOR
    parents = mesh.parent[fs.elements[inner]]
    mixed = int(np.sum(parents[:, 0] != parents[:, 1]) + np.sum(parents[:, 0] != fs.macro[inner]))
    checks.append(_check_le(f"macro-interior facets inside their macro {tag}", mixed, 0))
    counts = np.bincount(fs.macro[inner], minlength=len(mesh.macro.elements))
    checks.append(_check_le(f"three interior facets per macro {tag}", np.abs(counts - 3).max(), 0))
    bnd = np.flatnonzero(fs.kind == BOUNDARY)
    mids = mesh.nodes[fs.nodes[bnd]].mean(axis=1)
    centroid = mesh.vertices[fs.elements[bnd, 0]].mean(axis=1)
    inward = int(np.sum(np.einsum("fd,fd->f", mids - centroid, fs.normals[bnd]) <= 0))
    checks.append(_check_le(f"outward boundary normals {tag}", inward, 0))
    return checks


def stabilisation_checks(mesh: FineMesh, params: PowerLawParams, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    S = stab_matrix(mesh, params)
    tag = f"h={mesh.h:.4g}"
    qH = prolong_macro(mesh, rng.standard_normal(len(mesh.macro.elements)))
    q = rng.standard_normal(mesh.n_elements)
    eig_min = float(np.linalg.eigvalsh(S.toarray()).min()) if mesh.n_elements <= 2048 else 0.0
    flipped = mesh.with_flipped_normals(np.flatnonzero(mesh.facets.kind == MACRO_INTERIOR)[::2])
    v = rng.standard_normal((mesh.n_nodes, 2))
    v[mesh.boundary_nodes] = 0.0
    bary = triangle_rule(2).points
    a = lift(mesh, v, q, params).evaluate(bary)
    b = lift(flipped, v, q, params).evaluate(bary)
    return [
        _check_le(f"stabilisation symmetric {tag}", abs(S - S.T).max(), 0.0),
        _check_le(f"stabilisation semidefinite {tag}", max(-eig_min, 0.0), 1e-13),
        _check_le(f"stabilisation kernel {tag}", abs(S @ qH).max(), 1e-13),
        _check_le(f"lifting orientation covariance {tag}", np.abs(a - b).max(), 1e-13),
        _check_le(f"Pi_H idempotent {tag}",
                  np.abs(project_pi_H(mesh, prolong_macro(mesh, project_pi_H(mesh, q))) - project_pi_H(mesh, q)).max(),
                  1e-14),
    ]


def solution_checks(state: SolutionState, nonlinear_tolerance: float) -> list[Check]:
    mesh = state.mesh
    tag = f"r={state.params.r:g} h={mesh.h:.4g}"
    pnorm = max(np.abs(state.p).max(), 1.0)
    checks = lifted_divergence_checks(state)
    checks += [
        skew_check(state),
        energy_check(state, nonlinear_tolerance),
        _check_le(f"final residual {tag}", state.history[-1].residual, nonlinear_tolerance),
        _check_le(f"pressure mean {tag}", abs(mesh.areas @ state.p), 1e-12 * pnorm),
        _check_le(f"boundary velocity {tag}", np.abs(state.u[mesh.boundary_nodes]).max(), 0.0),
    ]
    # boundary flux of the lifting vanishes
    L = state.lifted
    bnd = np.flatnonzero(mesh.facets.kind == BOUNDARY)
    checks.append(_check_le(f"lifting boundary flux {tag}", np.abs(L.rt_coeffs[bnd]).max(initial=0.0), 0.0))
    return checks


def run_invariant_suite(meshes, params: PowerLawParams, case: ManufacturedCase | None = None,
                        config: SolverConfig | None = None) -> Report:
    """Mesh, operator and solution invariants on every mesh in ``meshes``.

    Solution checks run only when a manufactured ``case`` is given.
    """
    config = config or SolverConfig()
    report = Report()
    report.extend(exponent_checks(200))
    for mesh in meshes:
        report.extend(mesh_checks(mesh))
        report.checks.append(rt_dof_check(mesh))
        report.extend(stabilisation_checks(mesh, params))
    report.checks.append(fortin_check(meshes, nfields=5))
    if case is not None:
        f = forcing(case, params)
        for mesh in meshes:
            try:
                state = picard_solve(mesh, params, f, config)
            except (ConvergenceError, LinearSolveError, AssemblyError) as exc:
                report.checks.append(Check(f"solve r={params.r:g} h={mesh.h:.4g}", math.nan, config.tolerance,
                                           False, str(exc)))
                continue
            report.extend(solution_checks(state, config.tolerance))
    return report

