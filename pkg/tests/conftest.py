import time

import numpy as np
import pytest

from powerlaw_fem.manufactured import case_M1
from powerlaw_fem.params import PowerLawParams
from powerlaw_fem.verify import run_convergence_study

ACCEPTANCE_LINES = []

_STUDIES = {}
STUDY_SECONDS = {}


def convergence_study(r):
    """Cached M1 refinement study on macro meshes 4, 8, 16 (solved once per session)."""
    if r not in _STUDIES:
        start = time.perf_counter()
        _STUDIES[r] = run_convergence_study(case_M1(), PowerLawParams.from_r(r), levels=3, n=2)
        STUDY_SECONDS[r] = time.perf_counter() - start
    return _STUDIES[r]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def p1_callable(mesh, values):
    """Evaluate a P1 field at points lying on mesh facets (nodes included).

    Independent of the package: locates the facet by collinearity and
    interpolates linearly along it.
    """
    values = np.asarray(values, dtype=float)
    a = mesh.nodes[mesh.facets.nodes[:, 0]]
    b = mesh.nodes[mesh.facets.nodes[:, 1]]
    t = b - a
    tt = np.einsum("fd,fd->f", t, t)

    def f(x):
        x = np.atleast_2d(x)
        out = np.empty((len(x),) + values.shape[1:])
        for j, p in enumerate(x):
            rel = p - a
            s = np.einsum("fd,fd->f", rel, t) / tt
            cross = np.abs(t[:, 0] * rel[:, 1] - t[:, 1] * rel[:, 0])
            ok = np.flatnonzero((cross < 1e-12) & (s > -1e-12) & (s < 1 + 1e-12))
            if ok.size == 0:
                raise ValueError(f"point {p} is not on a facet")
            e = ok[0]
            i0, i1 = mesh.facets.nodes[e]
            out[j] = (1 - s[e]) * values[i0] + s[e] * values[i1]
        return out

    return f


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
