"""Boundary traces on the cube surface: measured data and its time derivatives.

Four surface records live here: the Dirichlet trace s, the Neumann trace p,
and their second time derivatives q and r, which are the data of the inverse
problem.  Each record is stored per face in the fixed order
(x-, x+, y-, y+, z-, z+) as an array of shape (6, n, n, n_time); the two
in-face indices follow the axis order of the remaining coordinates.
Edge and corner nodes appear in every adjacent face with identical s values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import GridError, SpaceTimeGrid, _ratio

__all__ = [
    "BoundaryTraces",
    "NoiseSpec",
    "TraceError",
    "FACES",
    "face_node_coords",
    "add_noise",
    "second_time_derivative",
    "restrict_traces",
]

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

# (axis, boundary index is 0 for the minus face / n-1 for the plus face, outward sign)
_FACE_AXIS = ((0, 0, -1.0), (0, 1, +1.0), (1, 0, -1.0), (1, 1, +1.0), (2, 0, -1.0), (2, 1, +1.0))


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative noise level and RNG seed; sigma = 0 means clean data."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise TraceError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class BoundaryTraces:
    """Surface records sampled on all boundary nodes and time levels of a grid."""

    grid: SpaceTimeGrid
    s: np.ndarray | None = None
    p: np.ndarray | None = None
    q: np.ndarray | None = None
    r: np.ndarray | None = None

    def __post_init__(self):
        n, m = self.grid.n_space, self.grid.n_time
        for name in ("s", "p", "q", "r"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (6, n, n, m):
                raise TraceError(f"{name} has shape {arr.shape}, expected {(6, n, n, m)}")
            if not np.isfinite(arr).all():
                raise TraceError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)

    def face_coords(self, face: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cartesian coordinates (X, Y, Z) of the nodes of one face, shape (n, n)."""
        return face_node_coords(self.grid, face)


def face_node_coords(grid: SpaceTimeGrid, face: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cartesian coordinates of the nodes of one cube face, each of shape (n, n)."""
    x = grid.axis_coords()
    A, B = np.meshgrid(x, x, indexing="ij")
    axis, side, _ = _FACE_AXIS[face]
    const = np.full_like(A, 0.0 if side == 0 else 1.0)
    planes = {0: (const, A, B), 1: (A, const, B), 2: (A, B, const)}
    return planes[axis]


def boundary_node_factors(grid: SpaceTimeGrid, spec: NoiseSpec) -> np.ndarray:
    """Per-face multiplicative factors 1 + sigma*xi with one xi per physical node.

    xi is drawn uniformly from [-1, 1] over the full node cube from the seeded
    generator, then read off at boundary nodes, so a node shared by several
    faces receives the same factor in each.
    """
    n = grid.n_space
    rng = np.random.default_rng(spec.seed)
    xi = rng.uniform(-1.0, 1.0, size=(n, n, n))
    out = np.empty((6, n, n))
    for f, (axis, side, _) in enumerate(_FACE_AXIS):
        idx = [slice(None)] * 3
        idx[axis] = 0 if side == 0 else n - 1
        out[f] = xi[tuple(idx)]
    return 1.0 + spec.sigma * out


def add_noise(traces: BoundaryTraces, spec: NoiseSpec) -> BoundaryTraces:
    """Scale s and p by one random factor per boundary node, constant in time.

    Both records are perturbed with the same realization.  Any previously
    computed q, r are dropped since they no longer match.
    """
    if traces.s is None or traces.p is None:
        raise TraceError("add_noise needs both s and p present")
    if spec.sigma == 0.0:
        return replace(traces, q=None, r=None)
    factors = boundary_node_factors(traces.grid, spec)[..., None]
    return BoundaryTraces(traces.grid, s=traces.s * factors, p=traces.p * factors)


def _second_diff_time(arr: np.ndarray, tau: float) -> np.ndarray:
    """Second time derivative: central stencil inside, 4-point one-sided at the ends."""
    m = arr.shape[-1]
    if m < 4:
        raise TraceError(f"need at least 4 time levels for one-sided stencils, got {m}")
    out = np.empty_like(arr)
    t2 = tau**2
    out[..., 1:-1] = (arr[..., 2:] + arr[..., :-2] - 2.0 * arr[..., 1:-1]) / t2
    out[..., 0] = (2.0 * arr[..., 0] - 5.0 * arr[..., 1] + 4.0 * arr[..., 2] - arr[..., 3]) / t2
    out[..., -1] = (2.0 * arr[..., -1] - 5.0 * arr[..., -2] + 4.0 * arr[..., -3] - arr[..., -4]) / t2
    return out


def second_time_derivative(traces: BoundaryTraces) -> BoundaryTraces:
    """Attach q and r, the second time differences of s and p."""
    if traces.s is None or traces.p is None:
        raise TraceError("second_time_derivative needs both s and p present")
    tau = traces.grid.tau
    return replace(traces, q=_second_diff_time(traces.s, tau), r=_second_diff_time(traces.p, tau))


def restrict_traces(traces: BoundaryTraces, coarse: SpaceTimeGrid) -> BoundaryTraces:
    """Sample traces at the boundary nodes and time levels of a nested coarse grid."""
    fine = traces.grid
    rs = _ratio(fine.n_space, coarse.n_space, "spatial axes")
    if fine.T != coarse.T:
        raise GridError(f"time extents differ: {fine.T} vs {coarse.T}")
    rt = _ratio(fine.n_time, coarse.n_time, "time axis")
    kw = {}
    for name in ("s", "p", "q", "r"):
        arr = getattr(traces, name)
        kw[name] = None if arr is None else arr[:, ::rs, ::rs, ::rt].copy()
    return BoundaryTraces(coarse, **kw)
