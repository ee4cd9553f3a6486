"""Barotropic pressure laws and the associated convex pressure potential.

The closure is the power law  p(rho) = a * rho**gamma.  Its pressure
potential

    H(rho) = rho * int_1^rho p(z)/z**2 dz = a * (rho**gamma - rho) / (gamma - 1)

is convex and satisfies the identity  rho*H'(rho) - H(rho) = p(rho).  The
Bregman distance of H,

    B(rho | r) = H(rho) - H'(r)*(rho - r) - H(r),

is the density part of the relative energy between two flow states; its
quadratic-coercivity constant near a reference density is probed by grid
minimisation in :func:`coercivity_constant`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "PressureLaw",
    "bregman",
    "potential_identity_defect",
    "coercivity_constant",
    "CoercivityConstants",
]


def _check_density(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0):
        raise DomainError(f"density must be nonnegative, got min {rho.min()}")
    return rho


@dataclass(frozen=True)
class PressureLaw:
    """Power-law barotropic closure p(rho) = a * rho**gamma.

    gamma > 1 is required so the potential has the closed form above.  The
    analytical well-posedness hypotheses additionally ask for gamma > 3/2;
    that stricter bound is enforced where scenarios are configured, not
    here, so that sub-3/2 exponents remain available to the thermodynamic
    property checks.
    """

    gamma: float
    coeff_a: float = 1.0
    form: str = "power"

    def __post_init__(self):
        if self.form != "power":
            raise DomainError(f"unsupported pressure-law form {self.form!r}")
        if not self.gamma > 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if not self.coeff_a > 0.0:
            raise DomainError(f"coeff_a must be positive, got {self.coeff_a}")

    @property
    def p_infty(self) -> float:
        """Limit of p'(rho)/rho**(gamma-1) for large rho (= a*gamma)."""
        return self.coeff_a * self.gamma

    def pressure(self, rho):
        """p(rho) = a * rho**gamma; strictly increasing, p(0) = 0."""
        rho = _check_density(rho)
        return self.coeff_a * rho**self.gamma

    def pressure_derivative(self, rho):
        """p'(rho) = a*gamma*rho**(gamma-1)."""
        rho = _check_density(rho)
        return self.coeff_a * self.gamma * rho ** (self.gamma - 1.0)

    def sound_speed(self, rho):
        """sqrt(p'(rho)), the acoustic wave speed used in CFL bounds."""
        return np.sqrt(self.pressure_derivative(rho))

    def potential(self, rho):
        """H(rho) = a*(rho**gamma - rho)/(gamma - 1); H(1) = 0, H(0) = 0."""
        rho = _check_density(rho)
        g = self.gamma
        return self.coeff_a * (rho**g - rho) / (g - 1.0)

    def potential_derivative(self, rho):
        """H'(rho) = a*(gamma*rho**(gamma-1) - 1)/(gamma - 1); singular at 0 for gamma < 2."""
        rho = _check_density(rho)
        g = self.gamma
        return self.coeff_a * (g * rho ** (g - 1.0) - 1.0) / (g - 1.0)

    def potential_second_derivative(self, rho):
        """H''(rho) = a*gamma*rho**(gamma-2) = p'(rho)/rho."""
        rho = _check_density(rho)
        return self.coeff_a * self.gamma * rho ** (self.gamma - 2.0)


def potential_identity_defect(law: PressureLaw, r):
    """r*H'(r) - H(r) - p(r); zero up to rounding, at machine scale of p(r).

    Precondition: r > 0.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("reference density must be positive")
    return r * law.potential_derivative(r) - law.potential(r) - law.pressure(r)


def bregman(law: PressureLaw, rho, r):
    """Bregman distance H(rho) - H'(r)*(rho - r) - H(r) of the potential.

    Nonnegative for rho >= 0, r > 0 by convexity of H; zero iff rho == r.
    The linear parts of H cancel algebraically, leaving

        a/(gamma-1) * (rho**g - r**g - g*r**(g-1)*(rho - r)),

    which is evaluated directly to avoid the worst of the cancellation.
    For gamma == 2 the expression collapses to the exact quadratic
    a*(rho - r)**2, which is used verbatim.
    """
    rho = _check_density(rho)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("reference density r must be positive (H' singular at 0)")
    g = law.gamma
    if g == 2.0:
        return law.coeff_a * (rho - r) ** 2
    return law.coeff_a / (g - 1.0) * (rho**g - r**g - g * r ** (g - 1.0) * (rho - r))


@dataclass(frozen=True)
class CoercivityConstants:
    """Empirical coercivity constants of the Bregman distance at fixed r.

    ``near`` bounds B(rho|r) >= near*(rho-r)**2 on (r/2, 2r);
    ``far``  bounds B(rho|r) >= far*(1 + rho**gamma) on [0, r/2] u [2r, rho_max].
    ``value`` = min(near, far) is the largest constant valid for both branches
    on the sampling grid.
    """

    near: float
    far: float

    @property
    def value(self) -> float:
        return min(self.near, self.far)


def coercivity_constant(
    law: PressureLaw, r: float, rho_max: float, samples: int = 10_000
) -> CoercivityConstants:
    """Grid-minimised coercivity constants of the Bregman distance.

    The constant is scenario-dependent (it depends on r, gamma and the
    density range actually visited), so it is measured and reported rather
    than assumed.  ``samples`` points are used per branch.

    Preconditions: r > 0 and rho_max > 2r.
    """
    if r <= 0.0:
        raise DomainError("r must be positive")
    if rho_max <= 2.0 * r:
        raise DomainError(f"rho_max must exceed 2*r = {2*r}, got {rho_max}")

    near_grid = np.linspace(0.5 * r, 2.0 * r, samples + 2)[1:-1]
    near_grid = near_grid[np.abs(near_grid - r) > 1e-9 * r]
    near = float(np.min(bregman(law, near_grid, r) / (near_grid - r) ** 2))

    half = samples // 2
    far_grid = np.concatenate(
        [np.linspace(0.0, 0.5 * r, half), np.linspace(2.0 * r, rho_max, samples - half)]
    )
    far = float(np.min(bregman(law, far_grid, r) / (1.0 + far_grid**law.gamma)))

    return CoercivityConstants(near=near, far=far)
