"""Experiment orchestration: named reconstructions, stability and convexity
probes, config parsing, metrics, and deterministic file output.

Configs are line-oriented ``key = value`` text with ``#`` comments; unknown
keys are rejected with their line number.  All artifacts are written with 17
significant digits so equal runs produce byte-identical files.

Reported metrics are computed over the free interior of the inverse grid
(the nodes the optimizer actually updates); the pinned two-layer ring carries
measured data, not estimates.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .boundary import BoundaryTraces, NoiseSpec, add_noise, restrict_traces, second_time_derivative
from .carleman import make_carleman_config
from .estimator import CoefficientReconstructor
from .forward import ForwardConfig, extract_neumann, solve_forward
from .functional import WeightedFunctional, finite_difference_check, pin_from_traces, ring_mask
from .grid import ScalarField, SpaceTimeGrid, build_grid, restrict
from .optimizer import OptimizerConfig, background_initial_guess
from .phantom import GLYPHS, PhantomSpec, SCHEDULES, make_coefficient, make_dirichlet_schedule, make_initial_profile

__all__ = [
    "ExperimentConfig",
    "Metrics",
    "ConfigError",
    "StageError",
    "EXPERIMENTS",
    "named_experiment",
    "parse_config",
    "run_experiment",
    "run_stability_experiment",
    "run_gradient_check",
    "run_convexity_sweep",
    "emit_field_csv",
    "read_field_csv",
    "emit_slice_csv",
    "emit_slice_pgm",
    "relative_l2_error",
]


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    T: float
    glyph: str = "NONE"
    inclusion_value: float = 2.0
    background_value: float = 1.0
    z_lo: float = 0.25
    z_hi: float = 0.75
    forward_points: int = 17
    forward_levels: int = 33
    inverse_points: int = 9
    inverse_levels: int = 5
    schedule: str = "ramp"
    x0: tuple = (0.5, 0.5, -0.5)
    eta: float = 0.1
    lam: float = 1.0
    alpha: float = 0.0
    sigma: float = 0.0
    seed: int = 0
    method: str = "prp_cg"
    eps_inf: float = 1e-2
    max_iters: int = 2000
    gamma: float = 0.1
    a_min: float = 0.5
    a_max: float = 4.0
    slice_z: float = 0.5
    neumann_order: str = "second"
    solver_tol: float = 1e-12
    solver_max_iter: int = 500

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.glyph not in GLYPHS:
            raise ConfigError(f"unknown glyph {self.glyph!r}")
        for fine, coarse, what in (
            (self.forward_points, self.inverse_points, "points"),
            (self.forward_levels, self.inverse_levels, "levels"),
        ):
            if (fine - 1) % (coarse - 1) != 0:
                raise ConfigError(f"inverse grid not nested in forward grid ({what}: {fine} over {coarse})")

    def phantom(self) -> PhantomSpec:
        return PhantomSpec(self.glyph, self.inclusion_value, self.background_value, (self.z_lo, self.z_hi))

    def grids(self) -> tuple[SpaceTimeGrid, SpaceTimeGrid]:
        return (
            build_grid(self.forward_points, self.forward_levels, self.T),
            build_grid(self.inverse_points, self.inverse_levels, self.T),
        )

    def forward_config(self) -> ForwardConfig:
        return ForwardConfig(self.solver_tol, self.solver_max_iter, self.neumann_order)

    def reconstructor(self) -> CoefficientReconstructor:
        return CoefficientReconstructor(
            x0=self.x0, eta=self.eta, lam=self.lam, alpha=self.alpha,
            a_min=self.a_min, a_max=self.a_max, method=self.method,
            eps_inf=self.eps_inf, max_iters=self.max_iters, gamma=self.gamma,
        )


@dataclass(frozen=True)
class Metrics:
    rel_l2_error_c: float
    max_c_comp: float
    contrast: float
    inclusion_iou: float

    def rows(self):
        return [
            ("rel_l2_error_c", self.rel_l2_error_c),
            ("max_c_comp", self.max_c_comp),
            ("contrast", self.contrast),
            ("inclusion_iou", self.inclusion_iou),
        ]


# ---------------------------------------------------------------------------
# config file parsing

_VEC3 = "vec3"

_KEY_TYPES = {
    "T": float,
    "glyph": str,
    "inclusion_value": float,
    "background_value": float,
    "z_lo": float,
    "z_hi": float,
    "forward_points": int,
    "forward_levels": int,
    "inverse_points": int,
    "inverse_levels": int,
    "schedule": str,
    "x0": _VEC3,
    "eta": float,
    "lambda": float,
    "alpha": float,
    "sigma": float,
    "seed": int,
    "method": str,
    "eps_inf": float,
    "max_iters": int,
    "gamma": float,
    "a_min": float,
    "a_max": float,
    "slice_z": float,
    "neumann_order": str,
    "solver_tol": float,
    "solver_max_iter": int,
}

_KEY_TO_FIELD = {"lambda": "lam"}

_REQUIRED_KEYS = ("T",)


def parse_config(path) -> ExperimentConfig:
    """Parse a ``key = value`` config file into an ExperimentConfig."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (tok.strip() for tok in line.partition("="))
        if key not in _KEY_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        kind = _KEY_TYPES[key]
        try:
            if kind is _VEC3:
                parts = value.replace(",", " ").split()
                if len(parts) != 3:
                    raise ValueError("expected 3 components")
                parsed = tuple(float(p) for p in parts)
            else:
                parsed = kind(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}")
        kwargs[_KEY_TO_FIELD.get(key, key)] = parsed
    for key in _REQUIRED_KEYS:
        if _KEY_TO_FIELD.get(key, key) not in kwargs:
            raise ConfigError(f"{path}: missing required key {key!r}")
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}")


# ---------------------------------------------------------------------------
# named experiments

_DESK = dict(T=0.25, forward_points=17, forward_levels=33, inverse_points=9, inverse_levels=5)
_FULL = dict(T=0.25, forward_points=33, forward_levels=129, inverse_points=17, inverse_levels=17)

EXPERIMENTS = {
    "identity": dict(glyph="NONE", schedule="manufactured", sigma=0.0, alpha=0.0),
    "test1": dict(glyph="A", schedule="ramp", sigma=0.0, alpha=0.0),
    "test2": dict(glyph="OMEGA", schedule="ramp", sigma=0.03, alpha=0.05),
    "test3": dict(glyph="C", schedule="ramp", sigma=0.0, alpha=0.0),
    "test4": dict(glyph="C", schedule="ramp", sigma=0.03, alpha=0.05),
}

# acceptance bands used by --check mode: metric -> (lo, hi)
CHECK_BANDS = {
    "identity": {"rel_l2_error_c": (0.0, 1e-3), "max_c_comp": (0.999, 1.001)},
    "test1": {"max_c_comp": (1.7, 2.3), "inclusion_iou": (0.4, 1.0)},
    "test2": {"max_c_comp": (1.6, 2.4), "inclusion_iou": (0.35, 1.0)},
    "test3": {"max_c_comp": (1.7, 2.3), "inclusion_iou": (0.4, 1.0)},
    "test4": {"max_c_comp": (1.6, 2.4), "inclusion_iou": (0.35, 1.0)},
}


def named_experiment(name: str, full: bool = False, **overrides) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}")
    kwargs = dict(_FULL if full else _DESK)
    kwargs.update(EXPERIMENTS[name])
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# pipeline

def synthesize_traces(cfg: ExperimentConfig):
    """Simulate the true medium and return clean coarse traces plus the grids."""
    grid_f, grid_i = cfg.grids()
    fwd = cfg.forward_config()
    c_true = make_coefficient(cfg.phantom(), grid_f)
    f, _ = make_initial_profile(grid_f)
    s = make_dirichlet_schedule(grid_f, cfg.schedule)
    u = solve_forward(c_true, f, s, fwd)
    p = extract_neumann(u, fwd)
    traces_fine = BoundaryTraces(grid_f, s=s.s, p=p.p)
    return grid_f, grid_i, restrict_traces(traces_fine, grid_i)


def prepare_inverse_inputs(cfg: ExperimentConfig, traces_clean: BoundaryTraces, grid_f, grid_i,
                           sigma: float | None = None):
    """Apply noise, differentiate, and build the background starting field."""
    sigma = cfg.sigma if sigma is None else sigma
    noisy = add_noise(traces_clean, NoiseSpec(sigma, cfg.seed)) if sigma > 0 else traces_clean
    data = second_time_derivative(noisy)
    w0 = background_initial_guess(grid_i, data, grid_f, cfg.schedule, cfg.forward_config())
    return data, w0


def compute_metrics(c_comp: ScalarField, c_true: ScalarField, free_mask: np.ndarray,
                    background: float, inclusion: float) -> Metrics:
    comp = c_comp.values[free_mask]
    true = c_true.values[free_mask]
    rel = float(np.linalg.norm(comp - true) / np.linalg.norm(true))
    cmax = float(comp.max())
    # background mode from a coarse histogram; degenerate fields are their own mode
    if cmax - comp.min() < 1e-12:
        mode = cmax
    else:
        counts, edges = np.histogram(comp, bins=100)
        b = int(np.argmax(counts))
        mode = float(0.5 * (edges[b] + edges[b + 1]))
    contrast = cmax / mode if mode != 0 else float("inf")
    thresh = 0.5 * (background + inclusion)
    mask_comp = comp > thresh
    mask_true = true > thresh
    union = int(np.sum(mask_comp | mask_true))
    iou = 1.0 if union == 0 else float(np.sum(mask_comp & mask_true)) / union
    return Metrics(rel, cmax, float(contrast), iou)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Metrics:
    """Full pipeline: simulate, invert, score, and optionally write artifacts."""
    try:
        grid_f, grid_i, traces_clean = synthesize_traces(cfg)
    except Exception as exc:
        raise StageError("forward", exc)
    try:
        data, w0 = prepare_inverse_inputs(cfg, traces_clean, grid_f, grid_i)
    except Exception as exc:
        raise StageError("data", exc)
    try:
        est = cfg.reconstructor().fit(data, w0)
    except Exception as exc:
        raise StageError("invert", exc)
    try:
        c_true_i = make_coefficient(cfg.phantom(), grid_i)
        metrics = compute_metrics(
            est.coefficient_, c_true_i, est.free_mask_, cfg.background_value, cfg.inclusion_value
        )
    except Exception as exc:
        raise StageError("metrics", exc)
    if out_dir is not None:
        try:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            emit_field_csv(out / "c_true.csv", c_true_i)
            emit_field_csv(out / "c_comp.csv", est.coefficient_)
            emit_slice_csv(out / "c_comp_slice.csv", est.coefficient_, cfg.slice_z)
            emit_slice_pgm(out / "c_comp_slice.pgm", _slice_at(est.coefficient_, cfg.slice_z))
            est.report_.write_csv(out / "report.csv")
            with open(out / "metrics.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["metric", "value"])
                for name, value in metrics.rows():
                    writer.writerow([name, format(value, ".17g")])
        except Exception as exc:
            raise StageError("output", exc)
    return metrics


def run_stability_experiment(cfg: ExperimentConfig, delta_list, out_path=None):
    """Perturb the data at several noise sizes and report the response ratios.

    For each delta the boundary traces are scaled by the same per-node noise
    pattern at size delta, the inversion is re-run, and the ratio

        |w_delta - w_0|_H1 / (|q_delta - q_0| + |r_delta - r_0|)

    is recorded (0 for delta = 0 by convention).
    """
    grid_f, grid_i, traces_clean = synthesize_traces(cfg)
    data0, w0_start = prepare_inverse_inputs(cfg, traces_clean, grid_f, grid_i, sigma=0.0)
    est0 = cfg.reconstructor().fit(data0, w0_start)
    func = est0.functional_
    cell_surf = grid_i.h**2 * grid_i.tau

    rows = []
    for delta in delta_list:
        if delta == 0:
            rows.append((0.0, 0.0))
            continue
        data_d, w0_d = prepare_inverse_inputs(cfg, traces_clean, grid_f, grid_i, sigma=float(delta))
        est_d = cfg.reconstructor().fit(data_d, w0_d)
        dw = est_d.w_.values - est0.w_.values
        num = float(np.sqrt(func.h1_norm_sq(dw)))
        dq = float(np.sqrt(np.sum((data_d.q - data0.q) ** 2) * cell_surf))
        dr = float(np.sqrt(np.sum((data_d.r - data0.r) ** 2) * cell_surf))
        rows.append((float(delta), num / (dq + dr)))
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["delta", "ratio"])
            for delta, ratio in rows:
                writer.writerow([format(delta, ".17g"), format(ratio, ".17g")])
    return rows


def run_gradient_check(n_points: int = 9, n_levels: int = 5, T: float = 0.25, lam: float = 1.0,
                       alpha: float = 0.05, n_directions: int = 20, seed: int = 0):
    """Finite-difference verification of the analytic gradient on a random field.

    Returns (worst relative error, worst error with the nonlocal term ablated).
    """
    grid = build_grid(n_points, n_levels, T)
    carleman = make_carleman_config((0.5, 0.5, -0.5), 0.1, lam, T)
    _, lap_f = make_initial_profile(grid)
    func = WeightedFunctional(grid, carleman, lap_f, alpha=alpha)
    rng = np.random.default_rng(seed)
    w = 6.0 + 0.8 * rng.standard_normal(grid.spacetime_shape)
    full = finite_difference_check(func, w, n_directions=n_directions, seed=seed + 1)
    ablated = finite_difference_check(func, w, n_directions=n_directions, seed=seed + 1, include_nonlocal=False)
    return full, ablated


def run_convexity_sweep(n_points: int = 9, n_levels: int = 5, T: float = 0.25, alpha: float = 0.05,
                        lambdas=(0.0, 1.0, 2.0, 3.0, 4.0, 5.0), n_pairs: int = 100, seed: int = 0):
    """Search for the smallest lambda at which all random pair gaps are nonnegative.

    Pairs share pinned layers and stay inside the admissible box.  Returns
    (lam_star, min_gap_at_lam_star, per-lambda table); lam_star is None when
    no lambda in the list works.
    """
    grid = build_grid(n_points, n_levels, T)
    _, lap_f = make_initial_profile(grid)
    free = ~ring_mask(grid)
    rng = np.random.default_rng(seed)
    amplitudes = (0.1, 0.5, 1.5)
    pairs = []
    for k in range(n_pairs):
        amp = amplitudes[k % len(amplitudes)]
        fields = []
        for _ in range(2):
            w = np.full(grid.spacetime_shape, 6.0)
            w += amp * rng.uniform(-1.0, 1.0, grid.spacetime_shape) * free[..., None]
            fields.append(w)
        pairs.append(tuple(fields))

    table = []
    lam_star = None
    min_gap_star = None
    for lam in lambdas:
        carleman = make_carleman_config((0.5, 0.5, -0.5), 0.1, lam, T)
        func = WeightedFunctional(grid, carleman, lap_f, alpha=alpha)
        gaps = [func.convexity_gap(w1, w2) for w1, w2 in pairs]
        worst = min(gaps)
        table.append((lam, worst))
        if lam_star is None and worst >= 0.0:
            lam_star = lam
            min_gap_star = worst
    return lam_star, min_gap_star, table


# ---------------------------------------------------------------------------
# file emitters

def _slice_at(field: ScalarField, z: float) -> np.ndarray:
    coords = field.grid.axis_coords()
    idx = int(np.argmin(np.abs(coords - z)))
    return field.values[:, :, idx]


def emit_field_csv(path, field: ScalarField) -> None:
    coords = field.grid.axis_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "value"])
        v = field.values
        for i in range(v.shape[0]):
            for j in range(v.shape[1]):
                for l in range(v.shape[2]):
                    writer.writerow([
                        format(coords[i], ".17g"), format(coords[j], ".17g"),
                        format(coords[l], ".17g"), format(v[i, j, l], ".17g"),
                    ])


def read_field_csv(path, grid: SpaceTimeGrid) -> ScalarField:
    values = np.empty(grid.spatial_shape)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x", "y", "z", "value"]:
            raise ConfigError(f"{path}: unexpected header {header}")
        flat = [float(row[3]) for row in reader]
    if len(flat) != values.size:
        raise ConfigError(f"{path}: expected {values.size} rows, got {len(flat)}")
    return ScalarField(grid, np.array(flat).reshape(grid.spatial_shape))


def emit_slice_csv(path, field: ScalarField, z: float) -> None:
    coords = field.grid.axis_coords()
    sl = _slice_at(field, z)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for i in range(sl.shape[0]):
            for j in range(sl.shape[1]):
                writer.writerow([format(coords[i], ".17g"), format(coords[j], ".17g"), format(sl[i, j], ".17g")])


def emit_slice_pgm(path, values: np.ndarray) -> None:
    """Binary (P5) grayscale image, values mapped linearly onto 0..255.

    A constant slice has no range and maps to 0 by convention.
    """
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-300:
        pixels = np.zeros(values.shape, dtype=np.uint8)
    else:
        pixels = np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    height, width = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def relative_l2_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
