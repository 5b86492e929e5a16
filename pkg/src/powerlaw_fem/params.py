"""Exponents derived from the power-law index r and the dimension d."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf


class AdmissibilityError(ValueError):
    """Raised for a power-law index outside the range r > 2d/(d+2)."""


def lower_bound(d: int) -> float:
    """Smallest excluded index 2d/(d+2)."""
    return 2.0 * d / (d + 2)


def middle_regime_start(d: int) -> float:
    """The index 3d/(d+2) where the critical exponent peaks."""
    return 3.0 * d / (d + 2)


def check_admissible(r: float, d: int = 2) -> None:
    if d not in (2, 3):
        raise AdmissibilityError(f"dimension must be 2 or 3, got d = {d}")
    if not math.isfinite(r) or r <= lower_bound(d):
        raise AdmissibilityError(
            f"r must exceed 2d/(d+2) = {lower_bound(d):g} (got r = {r:g}, d = {d})"
        )


def conjugate(r: float) -> float:
    return r / (r - 1.0)


def sobolev_exponent(r: float, d: int) -> float:
    """r* = dr/(d-r) for r < d, IEEE infinity otherwise."""
    if r >= d:
        return INF
    return d * r / (d - r)


def critical_exponent(r: float, d: int = 2) -> float:
    """Critical exponent min{r', r*/2}.

    ``r*`` is carried as IEEE infinity when r >= d, so the minimum picks
    ``r'`` exactly instead of comparing against a large sentinel.
    """
    check_admissible(r, d)
    return min(conjugate(r), sobolev_exponent(r, d) / 2.0)


def alpha_exponent(r: float, d: int = 2) -> float:
    """Exponent of h_F in the stabilisation parameter tau_F = h_F**alpha."""
    check_admissible(r, d)
    if r >= 2.0:
        return 1.0
    if r >= middle_regime_start(d):
        rt = critical_exponent(r, d)
        # 1 - d + 2d/rt as one quotient, exact at the boundary rt = 3d/(2d-2)
        return (2.0 * d - (d - 1) * rt) / rt
    return (d - 1) / 3.0


def default_epsilon(r: float) -> float:
    # The Picard viscosity (|grad u|^2 + eps^2)^((r-2)/2) is unbounded
    # (r < 2) or vanishes (r > 2) at grad u = 0 without regularisation.
    return 0.0 if r == 2.0 else 1e-8


@dataclass(frozen=True)
class PowerLawParams:
    """Power-law index with every exponent the discretisation needs.

    Build instances with :meth:`from_r`; the derived fields are then
    consistent by construction.
    """

    r: float
    d: int = 2
    epsilon_reg: float = 0.0
    r_conj: float = field(init=False)
    r_star: float = field(init=False)
    r_tilde: float = field(init=False)
    alpha: float = field(init=False)

    def __post_init__(self):
        check_admissible(self.r, self.d)
        if not (self.epsilon_reg >= 0.0 and math.isfinite(self.epsilon_reg)):
            raise ValueError(f"epsilon_reg must be finite and >= 0, got {self.epsilon_reg}")
        object.__setattr__(self, "r_conj", conjugate(self.r))
        object.__setattr__(self, "r_star", sobolev_exponent(self.r, self.d))
        object.__setattr__(self, "r_tilde", critical_exponent(self.r, self.d))
        object.__setattr__(self, "alpha", alpha_exponent(self.r, self.d))

    @classmethod
    def from_r(cls, r: float, d: int = 2, epsilon_reg: float | None = None) -> "PowerLawParams":
        if epsilon_reg is None:
            epsilon_reg = default_epsilon(r)
        return cls(r=float(r), d=int(d), epsilon_reg=float(epsilon_reg))

    def header_lines(self) -> list[str]:
        """``key = value`` lines for report headers (17 significant digits)."""
        items = [
            ("r", self.r),
            ("d", self.d),
            ("r_conj", self.r_conj),
            ("r_star", self.r_star),
            ("r_tilde", self.r_tilde),
            ("alpha", self.alpha),
            ("epsilon_reg", self.epsilon_reg),
        ]
        return [f"{k} = {v:.17g}" if isinstance(v, float) else f"{k} = {v}" for k, v in items]
