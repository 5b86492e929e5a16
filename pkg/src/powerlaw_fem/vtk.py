"""Legacy ASCII VTK output of a discrete solution."""

from __future__ import annotations

import numpy as np

from .mesh import FineMesh

VTK_TRIANGLE = 5


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_vtk(mesh: FineMesh, state, path, title: str = "power-law flow") -> None:
    """Unstructured grid with point velocity and cell pressure and lifted divergence."""
    u = np.asarray(state.u, dtype=float)
    p = np.asarray(state.p, dtype=float)
    div = state.lifted.divergence()
    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_TRIANGLE)] * mesh.n_elements
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines.append("VECTORS velocity double")
    lines += [f"{_fmt(a)} {_fmt(b)} 0" for a, b in u]
    lines.append(f"CELL_DATA {mesh.n_elements}")
    for name, values in (("pressure", p), ("div_lifted", div)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(v) for v in values]
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write VTK file {path}: {exc.strerror}") from exc
