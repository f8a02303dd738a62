"""Carleman weight and the geometry numbers that parameterize it.

The weight exp(2*lambda*psi) with psi(x,t) = |x-x0|^2 - eta*t^2 multiplies the
squared PDE residual inside the cost functional.  The anchor point x0 lies
outside the closed unit cube; d and D are the distances from x0 to the nearest
and farthest points of the cube, and M = eta*T^2 - d^2, N = eta*T^2 - D^2.
For short observation times N (and even M) may be negative; the configuration
records that through ``theory_condition_met`` and the machinery proceeds
regardless, since the weighted minimization is well defined for any lambda >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SpaceTimeGrid

__all__ = ["CarlemanConfig", "CarlemanError", "make_carleman_config", "geometry_numbers", "psi", "weight_sq", "weight_sq_field"]


class CarlemanError(ValueError):
    pass


def _check_x0(x0: tuple[float, float, float]) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (3,):
        raise CarlemanError(f"x0 must be a 3-vector, got shape {x0.shape}")
    if np.all((x0 >= 0.0) & (x0 <= 1.0)):
        raise CarlemanError(f"x0={tuple(x0)} lies inside the closed unit cube")
    return x0


def geometry_numbers(x0, eta: float, T: float) -> tuple[float, float, float, float]:
    """Exact distance extrema from x0 to the closed cube, plus M and N.

    The nearest point is the componentwise clamp of x0 onto [0,1]^3; the
    farthest is one of the 8 corners.  Computed analytically, never from
    grid nodes.
    """
    x0 = _check_x0(x0)
    nearest = np.clip(x0, 0.0, 1.0)
    d = float(np.linalg.norm(x0 - nearest))
    corners = np.array([[i, j, l] for i in (0.0, 1.0) for j in (0.0, 1.0) for l in (0.0, 1.0)])
    D = float(np.max(np.linalg.norm(corners - x0, axis=1)))
    return d, D, eta * T**2 - d**2, eta * T**2 - D**2


@dataclass(frozen=True)
class CarlemanConfig:
    x0: tuple[float, float, float]
    eta: float
    lam: float
    d: float
    D: float
    M: float
    N: float
    theory_condition_met: bool


def make_carleman_config(x0, eta: float, lam: float, T: float) -> CarlemanConfig:
    x0 = _check_x0(x0)
    if not 0.0 < eta < 1.0:
        raise CarlemanError(f"eta must lie in (0,1), got {eta}")
    if lam < 0.0:
        raise CarlemanError(f"lambda must be >= 0, got {lam}")
    if not T > 0.0:
        raise CarlemanError(f"T must be positive, got {T}")
    d, D, M, N = geometry_numbers(x0, eta, T)
    return CarlemanConfig(tuple(float(v) for v in x0), float(eta), float(lam), d, D, M, N, N > 0.0)


def psi(x, t, cfg: CarlemanConfig):
    """psi = |x - x0|^2 - eta*t^2; broadcasts over array-valued x (last axis 3) and t."""
    x = np.asarray(x, dtype=float)
    diff = x - np.asarray(cfg.x0)
    return np.sum(diff * diff, axis=-1) - cfg.eta * np.asarray(t) ** 2


def weight_sq(x, t, cfg: CarlemanConfig):
    """The squared weight exp(2*lambda*psi), strictly positive."""
    return np.exp(2.0 * cfg.lam * psi(x, t, cfg))


def weight_sq_field(cfg: CarlemanConfig, grid: SpaceTimeGrid) -> np.ndarray:
    """Cache the squared weight on all space-time nodes of a grid."""
    X, Y, Z = grid.meshgrid()
    spatial = (X - cfg.x0[0]) ** 2 + (Y - cfg.x0[1]) ** 2 + (Z - cfg.x0[2]) ** 2
    t = grid.time_coords()
    ps = spatial[..., None] - cfg.eta * t[None, None, None, :] ** 2
    return np.exp(2.0 * cfg.lam * ps)
