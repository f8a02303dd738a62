"""Uniform space-time grids on the unit cube and second-order difference stencils.

The computational domain is the unit cube (0,1)^3 over a time interval (0,T).
Both endpoints of every axis carry grid points, so ``n`` points give spacing
``1/(n-1)``.  Two grids appear throughout: a fine grid for simulating wave
propagation, and a coarser one on which the coefficient is reconstructed.
Fields transfer between them by plain point sampling at coincident nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpaceTimeGrid",
    "ScalarField",
    "GridError",
    "build_grid",
    "restrict",
    "discrete_laplacian",
    "discrete_second_time",
    "laplacian_field",
    "second_time_field",
]


class GridError(ValueError):
    """Raised for invalid grid parameters or incompatible grid pairs."""


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform discretization of [0,1]^3 x [0,T] with equal spacing per spatial axis.

    ``n_space`` points per spatial axis and ``n_time`` time levels, endpoints
    included, so h = 1/(n_space-1) and tau = T/(n_time-1).
    """

    n_space: int
    n_time: int
    T: float

    @property
    def h(self) -> float:
        return 1.0 / (self.n_space - 1)

    @property
    def tau(self) -> float:
        return self.T / (self.n_time - 1)

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return (self.n_space, self.n_space, self.n_space)

    @property
    def spacetime_shape(self) -> tuple[int, int, int, int]:
        return (self.n_space, self.n_space, self.n_space, self.n_time)

    def axis_coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_space)

    def time_coords(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_time)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.axis_coords()
        return np.meshgrid(x, x, x, indexing="ij")

    def cell_volume(self) -> float:
        """Uniform space-time cell weight h^3 * tau used by nodal quadrature."""
        return self.h**3 * self.tau


def build_grid(n_space: int, n_time: int, T: float) -> SpaceTimeGrid:
    """Build a grid; the stencils below need at least one interior layer per axis."""
    if n_space < 3:
        raise GridError(f"n_space must be >= 3, got {n_space}")
    if n_time < 3:
        raise GridError(f"n_time must be >= 3, got {n_time}")
    if not T > 0:
        raise GridError(f"T must be positive, got {T}")
    return SpaceTimeGrid(int(n_space), int(n_time), float(T))


@dataclass(frozen=True)
class ScalarField:
    """Dense nodal values on a grid: rank 3 (spatial) or rank 4 (space-time)."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape not in (self.grid.spatial_shape, self.grid.spacetime_shape):
            raise GridError(
                f"field shape {v.shape} matches neither spatial {self.grid.spatial_shape} "
                f"nor spacetime {self.grid.spacetime_shape}"
            )
        if not np.isfinite(v).all():
            raise GridError("field contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> str:
        return "spatial" if self.values.ndim == 3 else "spacetime"


def _ratio(fine: int, coarse: int, what: str) -> int:
    num, den = fine - 1, coarse - 1
    if den <= 0 or num % den != 0:
        raise GridError(f"{what}: fine grid ({fine} points) is not nested over coarse ({coarse} points)")
    return num // den


def restrict(field: ScalarField, coarse: SpaceTimeGrid) -> ScalarField:
    """Sample a fine-grid field at the nodes of a nested coarse grid."""
    fine = field.grid
    rs = _ratio(fine.n_space, coarse.n_space, "spatial axes")
    if field.rank == "spatial":
        return ScalarField(coarse, field.values[::rs, ::rs, ::rs].copy())
    if fine.T != coarse.T:
        raise GridError(f"time extents differ: {fine.T} vs {coarse.T}")
    rt = _ratio(fine.n_time, coarse.n_time, "time axis")
    return ScalarField(coarse, field.values[::rs, ::rs, ::rs, ::rt].copy())


def discrete_laplacian(field: ScalarField, at: tuple) -> float:
    """Seven-point Laplacian at one strictly interior node.

    ``at`` is (i,j,l) for a spatial field or (i,j,l,k) for a space-time field.
    """
    v = field.values
    n = field.grid.n_space
    if field.rank == "spatial":
        if len(at) != 3:
            raise GridError(f"spatial field needs a 3-index, got {at}")
        i, j, l = at
        sl = ()
    else:
        if len(at) != 4:
            raise GridError(f"spacetime field needs a 4-index, got {at}")
        i, j, l, k = at
        sl = (k,)
    for idx in (i, j, l):
        if not 0 < idx < n - 1:
            raise GridError(f"index {at} is not interior in space")
    h2 = field.grid.h**2
    center = v[(i, j, l) + sl]
    acc = (
        v[(i + 1, j, l) + sl] + v[(i - 1, j, l) + sl]
        + v[(i, j + 1, l) + sl] + v[(i, j - 1, l) + sl]
        + v[(i, j, l + 1) + sl] + v[(i, j, l - 1) + sl]
        - 6.0 * center
    )
    return float(acc / h2)


def discrete_second_time(field: ScalarField, at: tuple) -> float:
    """Three-point second time difference at (i,j,l,k).

    At k = 0 the level k = -1 is replaced by the reflection ghost w^{-1} := w^{1},
    which encodes a vanishing first time derivative at t = 0 to second order.
    The last time level has no forward neighbor and is rejected.
    """
    if field.rank != "spacetime":
        raise GridError("second time difference needs a spacetime field")
    i, j, l, k = at
    nt = field.grid.n_time
    if k == nt - 1:
        raise GridError(f"k={k} is the last time level; no forward neighbor")
    if not 0 <= k < nt - 1:
        raise GridError(f"time index {k} out of range")
    v = field.values
    t2 = field.grid.tau**2
    if k == 0:
        return float(2.0 * (v[i, j, l, 1] - v[i, j, l, 0]) / t2)
    return float((v[i, j, l, k + 1] + v[i, j, l, k - 1] - 2.0 * v[i, j, l, k]) / t2)


def laplacian_field(values: np.ndarray, h: float) -> np.ndarray:
    """Seven-point Laplacian of a 3D or 4D array; zero on the spatial boundary.

    For 4D input the stencil is applied per time level.
    """
    out = np.zeros_like(values)
    c = (slice(1, -1),) * 3
    rest = (slice(None),) * (values.ndim - 3)
    acc = -6.0 * values[c + rest]
    for ax in range(3):
        up = tuple(slice(2, None) if a == ax else slice(1, -1) for a in range(3))
        dn = tuple(slice(None, -2) if a == ax else slice(1, -1) for a in range(3))
        acc = acc + values[up + rest] + values[dn + rest]
    out[c + rest] = acc / h**2
    return out


def second_time_field(values: np.ndarray, tau: float) -> np.ndarray:
    """Second time difference of a 4D array with the k=0 reflection ghost.

    The last time level, where no forward neighbor exists, is left zero.
    """
    out = np.zeros_like(values)
    t2 = tau**2
    out[..., 0] = 2.0 * (values[..., 1] - values[..., 0]) / t2
    out[..., 1:-1] = (values[..., 2:] + values[..., :-2] - 2.0 * values[..., 1:-1]) / t2
    return out
