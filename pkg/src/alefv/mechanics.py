"""Newtonian stress, viscous dissipation, and slip-boundary residuals.

The stress law is

    S(G) = mu * (G + G^T - (2/3) tr(G) I) + eta * tr(G) I,

with G the velocity gradient.  The 2/3 trace coefficient is kept in every
spatial dimension, including the 1D/2D scenarios shipped here: the same S
is used in the solver and in all energy bookkeeping, so the identities
close even though the "deviatoric" part has nonzero trace below 3D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "ViscosityParams",
    "stress",
    "dissipation_density",
    "slip_traction_residual",
    "impermeability_residual",
]


@dataclass(frozen=True)
class ViscosityParams:
    """Shear viscosity mu > 0, bulk viscosity eta >= 0, boundary friction kappa >= 0.

    eta and kappa default to zero (complete slip); nonzero values are carried
    through every formula they enter.
    """

    mu: float
    eta: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not self.mu > 0.0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if self.eta < 0.0 or self.kappa < 0.0:
            raise DomainError("eta and kappa must be nonnegative")


def stress(params: ViscosityParams, grad_u: np.ndarray) -> np.ndarray:
    """Newtonian stress tensor S(grad_u); symmetric, linear in grad_u.

    ``grad_u`` may carry leading batch axes; the last two axes are the
    dim x dim gradient with grad_u[..., i, j] = du_i/dx_j.
    """
    g = np.asarray(grad_u, dtype=float)
    dim = g.shape[-1]
    tr = np.trace(g, axis1=-2, axis2=-1)[..., None, None]
    eye = np.eye(dim)
    sym = g + np.swapaxes(g, -2, -1)
    return params.mu * (sym - (2.0 / 3.0) * tr * eye) + params.eta * tr * eye


def dissipation_density(params: ViscosityParams, grad_u: np.ndarray) -> np.ndarray:
    """S(grad_u) : grad_u, the viscous dissipation rate per unit volume.

    A nonnegative quadratic form of grad_u; in 3D it equals
    (mu/2)*|grad_u + grad_u^T - (2/3) div u I|**2 + eta*(div u)**2, and in
    lower dimensions it dominates that expression.
    """
    g = np.asarray(grad_u, dtype=float)
    return np.sum(stress(params, g) * g, axis=(-2, -1))


def _check_unit_normal(n):
    n = np.asarray(n, dtype=float)
    if abs(np.dot(n, n) - 1.0) > 1e-10:
        raise DomainError(f"normal must be a unit vector, got |n| = {np.linalg.norm(n)}")
    return n


def slip_traction_residual(
    params: ViscosityParams, s: np.ndarray, n: np.ndarray, u: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """Tangential Navier-slip residual [S n]_tan + kappa*[u - V]_tan.

    Vanishes on a boundary where the slip condition holds; for a discrete
    solution with kappa = 0 it is O(h) at boundary faces.
    """
    n = _check_unit_normal(n)
    s = np.asarray(s, dtype=float)
    traction = s @ n
    traction_tan = traction - np.dot(traction, n) * n
    rel = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    rel_tan = rel - np.dot(rel, n) * n
    return traction_tan + params.kappa * rel_tan


def impermeability_residual(n: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    """(u - V).n, the normal relative velocity at a boundary point."""
    n = _check_unit_normal(n)
    return float(np.dot(np.asarray(u, dtype=float) - np.asarray(v, dtype=float), n))
