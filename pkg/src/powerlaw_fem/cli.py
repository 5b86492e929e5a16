"""``powerlaw-fem`` command line entry point.

Exit codes: 0 when the solve converged or every check passed, 1 on a
solver or check failure, 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .assembly import AssemblyError
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .manufactured import forcing, get_case
from .solver import ConvergenceError, LinearSolveError, picard_solve
from .verify import level_mesh, run_convergence_study, run_invariant_suite
from .vtk import write_vtk

log = logging.getLogger("powerlaw_fem")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_DEFAULTS = RunConfig()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="powerlaw-fem",
        description="Stabilised P1/P0 solver for stationary power-law flow on the unit square.",
        epilog="Config files hold flat 'key = value' lines using the field names "
               "r, d, n, levels, case, tolerance, linear_tolerance, max_iterations, "
               "damping, epsilon_reg, out. Flags override file values.",
    )
    ap.add_argument("command", choices=COMMANDS,
                    help="solve: one solve on the finest level; convergence: refinement study; "
                         "verify: invariant suite")
    ap.add_argument("--config", metavar="FILE", help="flat key = value configuration file")
    ap.add_argument("--r", type=float, help=f"power-law index (default {_DEFAULTS.r:g})")
    ap.add_argument("--levels", type=int,
                    help=f"refinement levels; level k uses n*2^k macro cells per side (default {_DEFAULTS.levels})")
    ap.add_argument("--n", type=int, help=f"base macro cells per side (default {_DEFAULTS.n})")
    ap.add_argument("--case", help=f"manufactured case name (default {_DEFAULTS.case})")
    ap.add_argument("--out", metavar="DIR", help="output directory (default current directory)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log Picard iterations")
    return ap


def _solve(cfg: RunConfig, out: Path) -> int:
    params, case = cfg.params(), get_case(cfg.case)
    mesh = level_mesh(cfg.n, cfg.levels)
    try:
        state = picard_solve(mesh, params, forcing(case, params), cfg.solver_config())
    except ConvergenceError as exc:
        exc.state.write_log(out / "iterations.csv")
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (LinearSolveError, AssemblyError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    state.write_log(out / "iterations.csv")
    write_vtk(mesh, state, out / "solution.vtk")
    print(f"converged in {state.iterations} iterations, residual {state.history[-1].residual:.3e}, "
          f"{mesh.n_elements} elements")
    return EXIT_OK


def _convergence(cfg: RunConfig, out: Path) -> int:
    table = run_convergence_study(get_case(cfg.case), cfg.params(), cfg.levels, cfg.n, cfg.solver_config())
    table.write_csv(out / "convergence.csv")
    print(f"{'level':>5} {'h':>10} {'|u-uh|_1r':>11} {'order':>6} {'||u-uh||':>11} {'||p-ph||':>11} "
          f"{'s(ph,ph)':>11} {'max|divL|':>10}")
    for row in table.rows:
        print(f"{row.level:>5} {row.h:>10.4g} {row.err_u_w1r:>11.4e} {row.order_u_w1r:>6.2f} "
              f"{row.err_u_l2rt:>11.4e} {row.err_p_lrt:>11.4e} {row.s_php:>11.4e} {row.max_div_lifted:>10.2e}"
              + ("" if row.status == "ok" else f"  {row.status}"))
    return EXIT_OK if all(r.status == "ok" for r in table.rows) else EXIT_FAIL


def _verify(cfg: RunConfig, out: Path) -> int:
    meshes = [level_mesh(cfg.n, k) for k in range(1, cfg.levels + 1)]
    report = run_invariant_suite(meshes, cfg.params(), get_case(cfg.case), cfg.solver_config())
    lines = report.lines()
    (out / "verify.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"{sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
    return EXIT_OK if report.passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {"command": args.command, "r": args.r, "levels": args.levels, "n": args.n,
                 "case": args.case, "out": args.out}
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"powerlaw-fem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"powerlaw-fem: error: cannot create output directory {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    for line in cfg.params().header_lines():
        log.info(line)
    return {"solve": _solve, "convergence": _convergence, "verify": _verify}[cfg.command](cfg, out)


if __name__ == "__main__":
    sys.exit(main())
