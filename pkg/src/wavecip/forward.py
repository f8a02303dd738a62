"""Implicit finite-difference simulation of c(x) u_tt = laplacian(u) on the cube.

Time stepping uses the three-point second difference in t and the seven-point
Laplacian applied to the average of the two outer time levels, so every step
solves a symmetric positive definite system

    (c / tau^2) u_new - 0.5 * lap(u_new) = rhs(u_now, u_prev)

on interior nodes with Dirichlet values taken from the boundary schedule.
The first step uses the reflection ghost u^{-1} = u^{1}, which keeps the zero
initial velocity second-order accurate and yields the modified system
(2c / tau^2) u^1 - lap(u^1) = (2c / tau^2) u^0.

Systems are solved matrix-free by unpreconditioned conjugate gradients warm
started from the previous level; with tau well below h the operator is close
to the identity and a handful of iterations reaches tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import _FACE_AXIS, BoundaryTraces
from .grid import ScalarField, SpaceTimeGrid, laplacian_field

__all__ = ["ForwardConfig", "SolverError", "solve_forward", "extract_neumann", "conjugate_gradient"]


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ForwardConfig:
    """Per-step linear solver controls and the Neumann stencil order."""

    linear_solver_tol: float = 1e-12
    linear_solver_max_iter: int = 500
    neumann_order: str = "second"

    def __post_init__(self):
        if not 0.0 < self.linear_solver_tol < 1.0:
            raise ValueError(f"tol must be in (0,1), got {self.linear_solver_tol}")
        if self.linear_solver_max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.neumann_order not in ("first", "second"):
            raise ValueError(f"neumann_order must be 'first' or 'second', got {self.neumann_order!r}")


def conjugate_gradient(apply_op, b, x0, tol, max_iter, callback=None):
    """Matrix-free CG for SPD ``apply_op``; relative residual below ``tol`` on exit.

    Operands are arrays of any shape; inner products run over all entries.
    ``callback(x)`` is invoked after every iteration (used by tests to watch
    the energy-norm error decrease).
    """
    x = x0.copy()
    r = b - apply_op(x)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    if float(np.linalg.norm(r)) / bnorm <= tol:
        return x, 0
    d = r.copy()
    rs = float(np.vdot(r, r))
    for it in range(1, max_iter + 1):
        Ad = apply_op(d)
        alpha = rs / float(np.vdot(d, Ad))
        x += alpha * d
        r -= alpha * Ad
        if callback is not None:
            callback(x)
        rs_new = float(np.vdot(r, r))
        if np.sqrt(rs_new) / bnorm <= tol:
            return x, it
        d = r + (rs_new / rs) * d
        rs = rs_new
    raise SolverError(f"conjugate gradient did not reach {tol:g} within {max_iter} iterations")


def scatter_boundary(target: np.ndarray, face_values: np.ndarray) -> None:
    """Write per-face values (6, n, n[, m]) onto the boundary voxels of a cube array."""
    n = target.shape[0]
    for f, (axis, side, _) in enumerate(_FACE_AXIS):
        idx = [slice(None)] * 3
        idx[axis] = 0 if side == 0 else n - 1
        target[tuple(idx)] = face_values[f]


def solve_forward(c: ScalarField, f: ScalarField, s: BoundaryTraces, cfg: ForwardConfig | None = None) -> ScalarField:
    """March the implicit scheme over all time levels and return the full field u.

    Requires the admissible coefficient bounds c >= 1 and a schedule whose
    t = 0 values agree with f on the boundary.
    """
    cfg = cfg or ForwardConfig()
    grid = c.grid
    if s.s is None:
        raise SolverError("Dirichlet schedule s is missing")
    if s.grid != grid or f.grid != grid:
        raise SolverError("coefficient, profile and schedule must share one grid")
    cv = c.values
    if cv.min() < 1.0:
        raise SolverError(f"coefficient must satisfy c >= 1, got min {cv.min():g}")

    n, m = grid.n_space, grid.n_time
    h, tau = grid.h, grid.tau

    f0 = f.values
    mismatch = max(
        float(np.abs(s.s[face, :, :, 0] - _face_slice(f0, face)).max()) for face in range(6)
    )
    if mismatch > 1e-9:
        raise SolverError(
            f"schedule is incompatible with the initial profile on the boundary (max mismatch {mismatch:g})"
        )

    interior = np.zeros(grid.spatial_shape, dtype=bool)
    interior[1:-1, 1:-1, 1:-1] = True

    u = np.zeros(grid.spacetime_shape)
    u[..., 0] = f0
    scatter_boundary(u[..., 0], s.s[..., 0])

    inv_t2 = 1.0 / tau**2

    def embed_bc(face_vals):
        out = np.zeros(grid.spatial_shape)
        scatter_boundary(out, face_vals)
        return out

    # first step: (2c/tau^2) u1 - lap(u1) = (2c/tau^2) u0
    def apply_first(x):
        return np.where(interior, 2.0 * cv * inv_t2 * x - laplacian_field(x, h), 0.0)

    bc1 = embed_bc(s.s[..., 1])
    b1 = np.where(interior, 2.0 * cv * inv_t2 * u[..., 0] + laplacian_field(bc1, h), 0.0)
    x0 = np.where(interior, u[..., 0], 0.0)
    x, _ = conjugate_gradient(apply_first, b1, x0, cfg.linear_solver_tol, cfg.linear_solver_max_iter)
    u[..., 1] = np.where(interior, x, bc1)

    # subsequent steps: (c/tau^2) u_new - 0.5 lap(u_new) = rhs
    def apply_step(x):
        return np.where(interior, cv * inv_t2 * x - 0.5 * laplacian_field(x, h), 0.0)

    for k in range(1, m - 1):
        u_now, u_prev = u[..., k], u[..., k - 1]
        bc_new = embed_bc(s.s[..., k + 1])
        b = (
            cv * inv_t2 * (2.0 * u_now - u_prev)
            + 0.5 * laplacian_field(u_prev, h)
            + 0.5 * laplacian_field(bc_new, h)
        )
        b = np.where(interior, b, 0.0)
        x0 = np.where(interior, u_now, 0.0)
        x, _ = conjugate_gradient(apply_step, b, x0, cfg.linear_solver_tol, cfg.linear_solver_max_iter)
        u[..., k + 1] = np.where(interior, x, bc_new)

    return ScalarField(grid, u)


def _face_slice(arr: np.ndarray, face: int) -> np.ndarray:
    axis, side, _ = _FACE_AXIS[face]
    idx = [slice(None)] * 3
    idx[axis] = 0 if side == 0 else arr.shape[axis] - 1
    return arr[tuple(idx)]


def extract_neumann(u: ScalarField, cfg: ForwardConfig | None = None) -> BoundaryTraces:
    """Outward normal derivative of u on each face by one-sided differences."""
    cfg = cfg or ForwardConfig()
    grid = u.grid
    n = grid.n_space
    h = grid.h
    v = u.values
    p = np.empty((6, n, n, grid.n_time))
    # counting layers inward from each face makes one formula serve both sides
    for f, (axis, side, _) in enumerate(_FACE_AXIS):
        def layer(offset):
            idx = [slice(None)] * 3
            idx[axis] = offset if side == 0 else n - 1 - offset
            return v[tuple(idx)]

        if cfg.neumann_order == "first":
            p[f] = (layer(0) - layer(1)) / h
        else:
            p[f] = (3.0 * layer(0) - 4.0 * layer(1) + layer(2)) / (2.0 * h)
    return BoundaryTraces(grid, s=None, p=p)
