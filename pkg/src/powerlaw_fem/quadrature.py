"""Quadrature on the reference triangle and the unit interval."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights normalised to sum to one.

    On a triangle K, ``integral_K f ~ |K| * sum(weights * f(points))``.
    """

    points: np.ndarray  # (nq, 3) barycentric coordinates
    weights: np.ndarray  # (nq,)
    degree: int

    def physical_points(self, vertices: np.ndarray) -> np.ndarray:
        """Map to physical coordinates; ``vertices`` has shape (..., 3, 2)."""
        return np.einsum("qa,...ad->...qd", self.points, vertices)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree ``degree``.

    Degree <= 2 uses the classical three interior points; higher degrees use
    a collapsed (Duffy) tensor Gauss-Legendre rule, which has positive
    weights and all points strictly inside the triangle.
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if degree <= 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]), 1)
    if degree == 2:
        a, b = 2 / 3, 1 / 6
        pts = np.array([[a, b, b], [b, a, b], [b, b, a]])
        return QuadratureRule(pts, np.full(3, 1 / 3), 2)

    # x = s, y = t (1 - s) on the unit square; the Jacobian (1 - s) adds one degree in s
    n = (degree + 2) // 2 + 1
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(g, g, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    x = s.ravel()
    y = (t * (1.0 - s)).ravel()
    weights = (ws * wt * (1.0 - s)).ravel() * 2.0  # reference area 1/2
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(pts, weights, degree)


@lru_cache(maxsize=None)
def line_rule(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [0, 1]: parameters and weights summing to one.

    Exact for polynomials of degree ``2 * npoints - 1``.
    """
    g, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (g + 1.0), 0.5 * w


# Degree used for every bilinear form on P1/P0/RT0 arguments.
FORM_DEGREE = 2
# Degree used for non-polynomial data (forcing, exact solutions, error norms).
DATA_DEGREE = 7
