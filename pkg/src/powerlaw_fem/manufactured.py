"""Closed-form solutions on the unit square and the matching forcing.

The nonlinear flux ``|grad u|^(r-2) grad u`` is differentiated numerically
(central differences with one Richardson step); everything else is
analytic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import PowerLawParams

Array = np.ndarray


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact velocity, its gradient and pressure; callables take points (n, 2)."""

    name: str
    velocity: Callable[[Array], Array]  # (n, 2)
    gradient: Callable[[Array], Array]  # (n, 2, 2), G[:, i, j] = d u_i / d x_j
    pressure: Callable[[Array], Array]  # (n,)
    pressure_gradient: Callable[[Array], Array]  # (n, 2)
    laplacian: Callable[[Array], Array] | None = None  # (n, 2), for oracle checks


def _g(t):
    return t**2 * (1 - t) ** 2


def _g1(t):
    return 2 * t * (1 - t) * (1 - 2 * t)


def _g2(t):
    return 2 * (1 - 6 * t + 6 * t**2)


def _g3(t):
    return 12 * (2 * t - 1)


def case_M1() -> ManufacturedCase:
    """Velocity ``curl psi`` with ``psi = x^2 (1-x)^2 y^2 (1-y)^2``, pressure ``sin(2 pi x) sin(2 pi y)``."""

    def velocity(x):
        X, Y = x[:, 0], x[:, 1]
        return np.column_stack([_g(X) * _g1(Y), -_g1(X) * _g(Y)])

    def gradient(x):
        X, Y = x[:, 0], x[:, 1]
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = _g1(X) * _g1(Y)
        G[:, 0, 1] = _g(X) * _g2(Y)
        G[:, 1, 0] = -_g2(X) * _g(Y)
        G[:, 1, 1] = -_g1(X) * _g1(Y)
        return G

    def laplacian(x):
        X, Y = x[:, 0], x[:, 1]
        return np.column_stack([
            _g2(X) * _g1(Y) + _g(X) * _g3(Y),
            -(_g3(X) * _g(Y) + _g1(X) * _g2(Y)),
        ])

    def pressure(x):
        return np.sin(2 * np.pi * x[:, 0]) * np.sin(2 * np.pi * x[:, 1])

    def pressure_gradient(x):
        X, Y = x[:, 0], x[:, 1]
        return 2 * np.pi * np.column_stack([
            np.cos(2 * np.pi * X) * np.sin(2 * np.pi * Y),
            np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y),
        ])

    return ManufacturedCase("M1", velocity, gradient, pressure, pressure_gradient, laplacian)


def case_pressure_only() -> ManufacturedCase:
    """Zero velocity with the M1 pressure; its forcing is exactly ``grad p``."""
    m1 = case_M1()
    return ManufacturedCase(
        "P0",
        lambda x: np.zeros((len(x), 2)),
        lambda x: np.zeros((len(x), 2, 2)),
        m1.pressure,
        m1.pressure_gradient,
        lambda x: np.zeros((len(x), 2)),
    )


CASES = {"M1": case_M1, "P0": case_pressure_only}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown manufactured case {name!r}; known: {', '.join(CASES)}") from None


def viscous_flux(G: Array, params: PowerLawParams) -> Array:
    """``|G|^(r-2) G``, switching to the solver's regularised flux where ``|G| < 1e-12``."""
    mag2 = np.sum(G**2, axis=(-2, -1))
    if params.r == 2.0:
        return G.copy()
    small = mag2 < 1e-24
    base = np.where(small, mag2 + params.epsilon_reg**2, mag2)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = base ** ((params.r - 2.0) / 2.0)
    nu = np.where(small & (base == 0.0), 0.0, nu)
    return nu[..., None, None] * G


def flux_divergence(case: ManufacturedCase, x: Array, params: PowerLawParams, delta: float = 1e-5) -> Array:
    """``div(|grad u|^(r-2) grad u)`` (row-wise) by Richardson-extrapolated central differences."""

    def central(h):
        out = np.zeros((len(x), 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            Fp = viscous_flux(case.gradient(x + e), params)
            Fm = viscous_flux(case.gradient(x - e), params)
            out += (Fp[:, :, j] - Fm[:, :, j]) / (2 * h)
        return out

    return (4.0 * central(delta / 2) - central(delta)) / 3.0


def forcing_oracle(case: ManufacturedCase, x: Array, params: PowerLawParams, delta: float = 1e-5) -> Array:
    """``f = -div S + div(u (x) u) + grad p`` at points strictly inside the domain."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = case.velocity(x)
    G = case.gradient(x)
    convective = np.einsum("nij,nj->ni", G, u)  # (u . grad) u, div u = 0
    return -flux_divergence(case, x, params, delta) + convective + case.pressure_gradient(x)


def forcing(case: ManufacturedCase, params: PowerLawParams, delta: float = 1e-5):
    """Forcing as a callable of points, for :func:`assemble_rhs`."""
    return lambda x: forcing_oracle(case, x, params, delta)
