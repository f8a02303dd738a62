"""The weighted least-squares functional over the inverse grid and its gradient.

A candidate solution w lives on the coarse space-time grid.  Its value layer
at t = 0 determines the nonlocal coefficient A(w) = lap_f / w(.,0), and the
functional penalizes the squared residual of

    A(w) * w_tt - laplacian(w) = 0

under the Carleman weight, plus alpha times a discrete H^2 norm of w.

Boundary information enters through hard pinning: the outermost spatial layer
carries the Dirichlet data q, and the first interior layer carries q - h*r,
a first-order encoding of the Neumann data r (optionally referenced to the
unit-background simulation, see ``pin_from_traces``).  Pinned nodes are never
unknowns, and the gradient is reported only on free nodes, but the squared
residual is summed over every spatially interior node including the pinned
first layer: those are the equations that make the problem an overdetermined
least squares in the free values.  With incompatible measured data the pinned
t = 0 ring may leave the admissible range of A; those entries are projected
into the box before dividing, and the floor check applies to free nodes only.

Quadrature is a nodal sum with uniform cell weight h^3*tau.  The H^2 norm
sums, over cell-anchored nodes (the last index of every axis excluded), the
squared value, the four forward first differences, and the ten second
differences (three pure spatial, one pure temporal, three mixed spatial,
three spatial-temporal), each divided by its spacing and weighted by
h^3*tau.  For constant fields the value term alone survives and the sum
equals the exact space-time volume, which pins the convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundary import _FACE_AXIS, BoundaryTraces
from .carleman import CarlemanConfig, weight_sq_field
from .grid import ScalarField, SpaceTimeGrid, laplacian_field, second_time_field

__all__ = [
    "AdmissibilityError",
    "InverseField",
    "WeightedFunctional",
    "ring_mask",
    "pin_from_traces",
    "reconstruct_coefficient",
    "finite_difference_check",
]


class AdmissibilityError(ValueError):
    """A candidate w left the admissible set (its t=0 layer fell below the floor)."""


def ring_mask(grid: SpaceTimeGrid) -> np.ndarray:
    """Spatial mask of pinned nodes: boundary layer plus first interior layer."""
    n = grid.n_space
    idx = np.arange(n)
    near_edge = (idx <= 1) | (idx >= n - 2)
    return near_edge[:, None, None] | near_edge[None, :, None] | near_edge[None, None, :]


@dataclass(frozen=True)
class InverseField:
    """A candidate w on the inverse grid together with its pinned-node mask.

    ``pinned`` is spatial; a pinned node is pinned at every time level.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    pinned: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.spacetime_shape:
            raise ValueError(f"w has shape {v.shape}, expected {self.grid.spacetime_shape}")
        if not np.isfinite(v).all():
            raise ValueError("w contains non-finite entries")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "pinned", np.asarray(self.pinned, dtype=bool))

    @property
    def free(self) -> np.ndarray:
        return ~self.pinned

    def with_values(self, values: np.ndarray) -> "InverseField":
        return InverseField(self.grid, values, self.pinned)


def pin_from_traces(values: np.ndarray, traces: BoundaryTraces,
                    reference: tuple[np.ndarray, BoundaryTraces] | None = None) -> InverseField:
    """Overwrite the constrained layers of ``values`` with measured data.

    Boundary nodes receive q; first-interior nodes receive q - h*r from each
    adjacent face, averaged where a node (near an edge) borders several faces.

    With ``reference = (background_field, background_traces)`` the layers are
    encoded relative to the unit-background simulation instead:

        pin = background_value + (data_pin - background_data_pin).

    The two forms coincide whenever the Taylor encoding is exact for the
    background.  The relative form matters for drives that are incompatible
    with the zero initial velocity at the t = 0 corner: there the Neumann
    trace's second time derivative carries a singular layer that a raw
    extrapolation cannot represent, but the same layer appears in the
    background simulation and cancels out of the difference.
    """
    grid = traces.grid
    if traces.q is None or traces.r is None:
        raise ValueError("traces must carry q and r; call second_time_derivative first")
    n = grid.n_space
    if n < 5:
        raise ValueError(f"inverse grid needs n_space >= 5 for a nonempty interior, got {n}")
    h = grid.h
    w = np.array(values, dtype=float)
    if w.shape != grid.spacetime_shape:
        raise ValueError(f"values shape {w.shape} does not match grid {grid.spacetime_shape}")

    bnd_vals = traces.q.copy()
    inner_vals = traces.q - h * traces.r
    if reference is not None:
        bg, bg_traces = reference
        bg = bg.values if isinstance(bg, InverseField) else np.asarray(bg, dtype=float)
        if bg.shape != grid.spacetime_shape or bg_traces.grid != grid:
            raise ValueError("reference background does not match the traces' grid")
        if bg_traces.q is None or bg_traces.r is None:
            raise ValueError("reference traces must carry q and r")
        for f, (axis, side, _) in enumerate(_FACE_AXIS):
            b_idx = [slice(None)] * 3
            b_idx[axis] = 0 if side == 0 else n - 1
            i_idx = [slice(None)] * 3
            i_idx[axis] = 1 if side == 0 else n - 2
            bnd_vals[f] = bg[tuple(b_idx)] + (traces.q[f] - bg_traces.q[f])
            inner_vals[f] = bg[tuple(i_idx)] + (inner_vals[f] - (bg_traces.q[f] - h * bg_traces.r[f]))

    acc = np.zeros_like(w)
    cnt = np.zeros(grid.spatial_shape)
    for f, (axis, side, _) in enumerate(_FACE_AXIS):
        idx = [slice(1, -1)] * 3
        idx[axis] = 1 if side == 0 else n - 2
        sl = tuple(idx)
        acc[sl] += inner_vals[f, 1:-1, 1:-1, :]
        cnt[sl] += 1.0
    layer = cnt > 0
    w[layer] = acc[layer] / cnt[layer][:, None]

    for f, (axis, side, _) in enumerate(_FACE_AXIS):
        idx = [slice(None)] * 3
        idx[axis] = 0 if side == 0 else n - 1
        w[tuple(idx)] = bnd_vals[f]

    return InverseField(grid, w, ring_mask(grid))


def reconstruct_coefficient(w: InverseField | np.ndarray, laplacian_f: np.ndarray, w_floor: float) -> np.ndarray:
    """The coefficient laplacian_f / w(.,0), the exact inverse of c -> w(.,0).

    Raises when any node of the t = 0 layer sits below the floor instead of
    clamping silently.
    """
    arr = w.values if isinstance(w, InverseField) else np.asarray(w)
    w0 = arr[..., 0] if arr.ndim == 4 else arr
    if (w0 < w_floor).any():
        raise AdmissibilityError(
            f"w(.,0) falls below the floor {w_floor:g} (min {w0.min():g}); not an admissible candidate"
        )
    return laplacian_f / w0


class WeightedFunctional:
    """Evaluates the weighted data misfit plus H^2 regularization, and its gradient.

    Parameters
    ----------
    grid : the inverse grid.
    carleman : weight configuration; the squared weight is cached on the grid.
    laplacian_f : spatial array, the Laplacian of the initial profile.
    alpha : regularization strength in [0, 1).
    a_box : admissible range (A_min, A_max) for the nonlocal coefficient; it
        induces the per-node box [laplacian_f/A_max, laplacian_f/A_min] for
        the free t = 0 layer.
    w_floor : hard floor for w(.,0) on free nodes; defaults to
        0.1 * min(laplacian_f) / A_max.
    """

    def __init__(self, grid: SpaceTimeGrid, carleman: CarlemanConfig, laplacian_f, alpha: float = 0.0,
                 a_box: tuple[float, float] = (0.5, 4.0), w_floor: float | None = None):
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        a_min, a_max = a_box
        if not 0.0 < a_min < a_max:
            raise ValueError(f"a_box must satisfy 0 < A_min < A_max, got {a_box}")
        lf = laplacian_f.values if isinstance(laplacian_f, ScalarField) else np.asarray(laplacian_f, dtype=float)
        if lf.shape != grid.spatial_shape:
            raise ValueError(f"laplacian_f shape {lf.shape} does not match grid {grid.spatial_shape}")
        if lf.min() <= 0:
            raise ValueError("laplacian_f must be strictly positive")
        self.grid = grid
        self.carleman = carleman
        self.laplacian_f = lf
        self.alpha = float(alpha)
        self.a_min, self.a_max = float(a_min), float(a_max)
        self.w_floor = float(w_floor) if w_floor is not None else 0.1 * float(lf.min()) / self.a_max
        self.weight = weight_sq_field(carleman, grid)
        self.pinned = ring_mask(grid)
        self.free = ~self.pinned
        n = grid.n_space
        edge = (np.arange(n) == 0) | (np.arange(n) == n - 1)
        self.boundary = edge[:, None, None] | edge[None, :, None] | edge[None, None, :]
        self.cell = grid.cell_volume()

    # -- admissible box for the free t=0 layer -------------------------------

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.laplacian_f / self.a_max, self.laplacian_f / self.a_min

    def clamp(self, values: np.ndarray) -> np.ndarray:
        """Project the free part of the t = 0 layer into the admissible box."""
        out = np.array(values, dtype=float)
        lo, hi = self.box_bounds()
        clipped = np.clip(out[..., 0], lo, hi)
        out[..., 0] = np.where(self.free, clipped, out[..., 0])
        return out

    # -- pieces ----------------------------------------------------------------

    def _values(self, w) -> np.ndarray:
        arr = w.values if isinstance(w, InverseField) else np.asarray(w, dtype=float)
        if arr.shape != self.grid.spacetime_shape:
            raise ValueError(f"w has shape {arr.shape}, expected {self.grid.spacetime_shape}")
        return arr

    def _coefficient(self, arr: np.ndarray) -> np.ndarray:
        """A over the spatial grid: free nodes are floor-checked and divide the
        raw layer; pinned nodes carry measured (possibly incompatible) data and
        are projected into the admissible box before dividing."""
        w0 = arr[..., 0]
        free_vals = w0[self.free]
        if free_vals.size and free_vals.min() < self.w_floor:
            raise AdmissibilityError(
                f"free t=0 layer fell below the floor {self.w_floor:g} (min {free_vals.min():g})"
            )
        lo, hi = self.box_bounds()
        safe = np.where(self.free, w0, np.clip(w0, lo, hi))
        return self.laplacian_f / safe

    def coefficient(self, w) -> np.ndarray:
        """A(w) = laplacian_f / w(.,0), floor-checked at every node.

        Identical to :meth:`reconstruct`; evaluation of the functional itself
        floor-checks the free nodes only and never divides by pinned values.
        """
        return reconstruct_coefficient(self._values(w), self.laplacian_f, self.w_floor)

    def residual(self, w) -> np.ndarray:
        """A(w)*w_tt - lap(w) at spatially interior nodes for all but the last
        time level (reflection ghost at k = 0); zero where the stencils do not
        exist (spatial boundary, last level) by convention.

        Residuals are kept at the pinned first interior layer: those rows hold
        measured values only, so they are the equations through which the
        Neumann data constrains the interior.  Dropping them would leave the
        whole t = 0 layer undetermined when alpha = 0 (any value could be
        matched by time-marching the free nodes).
        """
        arr = self._values(w)
        A = self._coefficient(arr)
        wtt = second_time_field(arr, self.grid.tau)
        lap = laplacian_field(arr, self.grid.h)
        res = A[..., None] * wtt - lap
        res[self.boundary, :] = 0.0
        res[..., -1] = 0.0
        return res

    def value(self, w) -> float:
        arr = self._values(w)
        res = self.residual(arr)
        data = float(np.sum(res * res * self.weight)) * self.cell
        if self.alpha == 0.0:
            return data
        return data + self.alpha * self._h2_value(arr)

    def gradient(self, w, include_nonlocal: bool = True) -> np.ndarray:
        """Exact gradient of the discrete functional on free nodes; zero elsewhere.

        ``include_nonlocal=False`` drops the chain-rule term through A(w) (the
        coupling of every residual to the t = 0 layer); gradient checks use it
        to demonstrate that the term is load-bearing.
        """
        arr = self._values(w)
        A = self._coefficient(arr)
        wtt = second_time_field(arr, self.grid.tau)
        lap = laplacian_field(arr, self.grid.h)
        res = A[..., None] * wtt - lap
        res[self.boundary, :] = 0.0
        res[..., -1] = 0.0

        B = (2.0 * self.cell) * res * self.weight
        BA = B * A[..., None]
        t2 = self.grid.tau**2

        g = np.zeros_like(arr)
        # adjoint of the second time difference (ghost doubles the k=0 row)
        g[..., 0] -= 2.0 * BA[..., 0] / t2
        g[..., 1] += 2.0 * BA[..., 0] / t2
        g[..., :-2] += BA[..., 1:-1] / t2
        g[..., 1:-1] -= 2.0 * BA[..., 1:-1] / t2
        g[..., 2:] += BA[..., 1:-1] / t2
        # adjoint of -laplacian (the stencil is symmetric)
        g -= laplacian_field(B, self.grid.h)
        if include_nonlocal:
            # dA/dw(.,0) = -laplacian_f / w(.,0)^2, accumulated over all time levels
            w0 = arr[..., 0]
            safe = np.where(self.free, w0, 1.0)
            g[..., 0] += np.sum(B * wtt, axis=-1) * (-self.laplacian_f / safe**2)
        if self.alpha != 0.0:
            g += self.alpha * self._h2_gradient(arr)
        g[self.pinned, :] = 0.0
        return g

    def convexity_gap(self, w1, w2) -> float:
        """J(w2) - J(w1) - <g(w1), w2 - w1> - (alpha/2) * |w2 - w1|_{H2}^2."""
        a1, a2 = self._values(w1), self._values(w2)
        diff = a2 - a1
        lin = float(np.sum(self.gradient(a1) * diff))
        return self.value(a2) - self.value(a1) - lin - 0.5 * self.alpha * self._h2_value(diff)

    def reconstruct(self, w) -> np.ndarray:
        """Coefficient field laplacian_f / w(.,0), floor-checked at every node."""
        return reconstruct_coefficient(self._values(w), self.laplacian_f, self.w_floor)

    # -- discrete H^2 quadratic form --------------------------------------------

    def _h2_stencils(self):
        h, tau = self.grid.h, self.grid.tau
        a = slice(None, -1)
        # (slices per corner, signs, spacing) for each difference; anchors drop
        # the last index of every axis, stencil axes widen as needed
        first = [
            (((slice(1, None), a, a, a), (a, a, a, a)), (1.0, -1.0), h),
            (((a, slice(1, None), a, a), (a, a, a, a)), (1.0, -1.0), h),
            (((a, a, slice(1, None), a), (a, a, a, a)), (1.0, -1.0), h),
            (((a, a, a, slice(1, None)), (a, a, a, a)), (1.0, -1.0), tau),
        ]
        def pure(axis, sp):
            s2 = [a, a, a, a]; s1 = [a, a, a, a]; s0 = [a, a, a, a]
            s2[axis] = slice(2, None); s1[axis] = slice(1, -1); s0[axis] = slice(None, -2)
            return ((tuple(s2), tuple(s1), tuple(s0)), (1.0, -2.0, 1.0), sp**2)
        def mixed(ax1, ax2, sp):
            def sl(off1, off2):
                s = [a, a, a, a]
                s[ax1] = slice(1, None) if off1 else a
                s[ax2] = slice(1, None) if off2 else a
                return tuple(s)
            return ((sl(1, 1), sl(1, 0), sl(0, 1), sl(0, 0)), (1.0, -1.0, -1.0, 1.0), sp)
        second = [
            pure(0, h), pure(1, h), pure(2, h), pure(3, tau),
            mixed(0, 1, h * h), mixed(0, 2, h * h), mixed(1, 2, h * h),
            mixed(0, 3, h * tau), mixed(1, 3, h * tau), mixed(2, 3, h * tau),
        ]
        value_term = (((a, a, a, a),), (1.0,), 1.0)
        return [value_term] + first + second

    def _h2_value(self, arr: np.ndarray) -> float:
        total = 0.0
        for slices, signs, denom in self._h2_stencils():
            d = sum(sg * arr[sl] for sg, sl in zip(signs, slices)) / denom
            total += float(np.sum(d * d))
        return total * self.cell

    def _h2_gradient(self, arr: np.ndarray) -> np.ndarray:
        g = np.zeros_like(arr)
        for slices, signs, denom in self._h2_stencils():
            d = sum(sg * arr[sl] for sg, sl in zip(signs, slices)) / denom
            back = (2.0 * self.cell / denom) * d
            for sg, sl in zip(signs, slices):
                g[sl] += sg * back
        return g

    def h2_norm_sq(self, arr: np.ndarray) -> float:
        """Public handle on the discrete H^2 quadratic form (used by probes/tests)."""
        return self._h2_value(np.asarray(arr, dtype=float))

    def h1_norm_sq(self, arr: np.ndarray) -> float:
        """Discrete H^1 form: the value and first-difference terms only."""
        total = 0.0
        for slices, signs, denom in self._h2_stencils()[:5]:
            d = sum(sg * arr[sl] for sg, sl in zip(signs, slices)) / denom
            total += float(np.sum(d * d))
        return total * self.cell


def finite_difference_check(func: WeightedFunctional, w, n_directions: int = 20, eps: float = 1e-5,
                            seed: int = 0, include_nonlocal: bool = True) -> float:
    """Largest relative mismatch between <g, v> and central differences of the value.

    Directions are random, supported on free nodes, and scaled to unit
    Euclidean norm.  The reported number is the worst case over all
    directions.
    """
    arr = func._values(w)
    g = func.gradient(arr, include_nonlocal=include_nonlocal)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_directions):
        v = rng.standard_normal(arr.shape)
        v[func.pinned, :] = 0.0
        v /= np.linalg.norm(v)
        jp = func.value(arr + eps * v)
        jm = func.value(arr - eps * v)
        fd = (jp - jm) / (2.0 * eps)
        an = float(np.sum(g * v))
        denom = max(abs(fd), abs(an), 1e-30)
        worst = max(worst, abs(fd - an) / denom)
    return worst
