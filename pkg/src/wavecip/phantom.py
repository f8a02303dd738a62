"""Synthetic targets: coefficient fields with letter-shaped inclusions, the
quadratic initial profile, and the Dirichlet boundary schedules.

Letter inclusions are defined by monochrome bitmaps shipped with the package
(see ``load_glyph_bitmap`` for the file format), extruded along z over a fixed
interval and sampled onto the grid by nearest neighbor.  The coefficient is
piecewise constant: ``inclusion_value`` inside the extruded glyph and
``background_value`` elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .boundary import BoundaryTraces, face_node_coords
from .grid import ScalarField, SpaceTimeGrid

__all__ = [
    "PhantomSpec",
    "PhantomError",
    "GLYPHS",
    "load_glyph_bitmap",
    "make_coefficient",
    "make_initial_profile",
    "make_dirichlet_schedule",
    "monotonicity_violation",
]

GLYPHS = ("A", "OMEGA", "C", "CUBE", "NONE")

_BITMAP_FILES = {"A": "a.txt", "OMEGA": "omega.txt", "C": "c.txt"}

# CUBE is an axis-aligned analytic box [z_lo, z_hi]^3, independent of any bitmap.


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class PhantomSpec:
    """A piecewise-constant coefficient: glyph shape, contrast values, z extrusion."""

    glyph: str = "NONE"
    inclusion_value: float = 2.0
    background_value: float = 1.0
    z_extent: tuple[float, float] = (0.25, 0.75)

    def __post_init__(self):
        if self.glyph not in GLYPHS:
            raise PhantomError(f"unknown glyph {self.glyph!r}; expected one of {GLYPHS}")
        if not 1.0 <= self.background_value <= self.inclusion_value:
            raise PhantomError(
                f"need 1 <= background ({self.background_value}) <= inclusion ({self.inclusion_value})"
            )
        z_lo, z_hi = self.z_extent
        if not 0.0 <= z_lo < z_hi <= 1.0:
            raise PhantomError(f"z_extent must satisfy 0 <= lo < hi <= 1, got {self.z_extent}")


def load_glyph_bitmap(path_or_name) -> np.ndarray:
    """Read a monochrome bitmap: first line ``<width> <height>``, then one row
    per line with ``#`` marking inside and ``.`` outside.  Row 0 is the top of
    the image (y = 1).  Returns a boolean array of shape (height, width)."""
    if isinstance(path_or_name, str) and path_or_name in _BITMAP_FILES:
        text = resources.files("wavecip").joinpath("glyphs", _BITMAP_FILES[path_or_name]).read_text()
    else:
        with open(path_or_name) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        w, h = (int(tok) for tok in lines[0].split())
    except (ValueError, IndexError):
        raise PhantomError(f"bad bitmap header {lines[0]!r}; expected '<width> <height>'")
    rows = lines[1:]
    if len(rows) != h or any(len(row) != w for row in rows):
        raise PhantomError(f"bitmap body does not match header {w}x{h}")
    bad = set("".join(rows)) - {"#", "."}
    if bad:
        raise PhantomError(f"bitmap contains invalid characters {sorted(bad)}")
    return np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)


def _glyph_plane_mask(spec: PhantomSpec, grid: SpaceTimeGrid) -> np.ndarray:
    """Boolean (n, n) mask over the (x, y) nodes of the grid."""
    n = grid.n_space
    coords = grid.axis_coords()
    if spec.glyph == "NONE":
        return np.zeros((n, n), dtype=bool)
    if spec.glyph == "CUBE":
        lo, hi = spec.z_extent
        inside = (coords >= lo) & (coords <= hi)
        return inside[:, None] & inside[None, :]
    bitmap = load_glyph_bitmap(spec.glyph)
    h, w = bitmap.shape
    px = np.minimum((coords * w).astype(int), w - 1)
    py = np.minimum(((1.0 - coords) * h).astype(int), h - 1)
    return bitmap[py[None, :], px[:, None]]


def make_coefficient(spec: PhantomSpec, grid: SpaceTimeGrid) -> ScalarField:
    """Rasterize the phantom onto the grid as a piecewise-constant spatial field."""
    plane = _glyph_plane_mask(spec, grid)
    z = grid.axis_coords()
    lo, hi = spec.z_extent
    in_z = (z >= lo) & (z <= hi)
    mask = plane[:, :, None] & in_z[None, None, :]
    values = np.where(mask, spec.inclusion_value, spec.background_value)
    return ScalarField(grid, values)


def make_initial_profile(grid: SpaceTimeGrid) -> tuple[ScalarField, ScalarField]:
    """The initial displacement f = x^2 + y^2 + z^2 and its analytic Laplacian 6."""
    X, Y, Z = grid.meshgrid()
    f = X**2 + Y**2 + Z**2
    return ScalarField(grid, f), ScalarField(grid, np.full(grid.spatial_shape, 6.0))


SCHEDULES = ("ramp", "manufactured")


def _profile_on_face(grid: SpaceTimeGrid, face: int) -> np.ndarray:
    X, Y, Z = face_node_coords(grid, face)
    return X**2 + Y**2 + Z**2


def make_dirichlet_schedule(grid: SpaceTimeGrid, variant: str = "ramp") -> BoundaryTraces:
    """Dirichlet data on the whole lateral surface.

    ``ramp``: s = f(x) * (t + 1), the linear-in-time drive used for the
    letter reconstructions.  ``manufactured``: s = f(x) + 3 t^2, the companion
    of the closed-form solution for a unit background coefficient, used by
    exactness tests.
    """
    if variant not in SCHEDULES:
        raise PhantomError(f"unknown schedule variant {variant!r}; expected one of {SCHEDULES}")
    n, m = grid.n_space, grid.n_time
    t = grid.time_coords()
    s = np.empty((6, n, n, m))
    for face in range(6):
        f_face = _profile_on_face(grid, face)
        if variant == "ramp":
            s[face] = f_face[:, :, None] * (t[None, None, :] + 1.0)
        else:
            s[face] = f_face[:, :, None] + 3.0 * t[None, None, :] ** 2
    return BoundaryTraces(grid, s=s)


def monotonicity_violation(c: ScalarField, x0) -> float:
    """Diagnostic for the radial monotonicity condition min((grad c, x - x0)) >= 0.

    Returns the most negative nodal value of the centered-difference inner
    product (0 for fields satisfying the condition).  Piecewise-constant
    phantoms generally violate it across inclusion walls facing x0.
    """
    v = c.values
    h = c.grid.h
    X, Y, Z = c.grid.meshgrid()
    pos = (X, Y, Z)
    x0 = np.asarray(x0, dtype=float)
    inner = np.zeros_like(v)
    core = (slice(1, -1),) * 3
    for ax in range(3):
        up = tuple(slice(2, None) if a == ax else slice(1, -1) for a in range(3))
        dn = tuple(slice(None, -2) if a == ax else slice(1, -1) for a in range(3))
        grad = (v[up] - v[dn]) / (2.0 * h)
        inner[core] += grad * (pos[ax][core] - x0[ax])
    return float(inner.min())
