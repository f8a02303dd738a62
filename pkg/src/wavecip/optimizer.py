"""Minimization drivers: nonlinear conjugate gradients and projected gradient.

The conjugate-gradient variant restarts to steepest descent whenever the
Polak-Ribiere-Polyak coefficient turns negative or the combined direction
stops being a descent direction.  Steps come from Armijo backtracking on the
projected trial point, so the recorded objective history is strictly
decreasing until the stopping test fires.  After every accepted step the free
part of the t = 0 layer is projected into the admissible box; pinned nodes
never move because the gradient vanishes there.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryTraces, _second_diff_time
from .forward import ForwardConfig, solve_forward
from .functional import InverseField, WeightedFunctional, pin_from_traces
from .grid import ScalarField, SpaceTimeGrid, restrict
from .phantom import make_dirichlet_schedule, make_initial_profile

__all__ = ["OptimizerConfig", "RunReport", "prp_beta", "minimize", "background_initial_guess"]


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "prp_cg"
    eps_inf: float = 1e-2
    max_iters: int = 2000
    armijo_c1: float = 1e-4
    shrink: float = 0.5
    init_step: float = 1.0
    max_backtracks: int = 40
    gamma: float = 0.1

    def __post_init__(self):
        if self.method not in ("prp_cg", "grad_proj"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.eps_inf > 0:
            raise ValueError("eps_inf must be positive")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError("armijo_c1 must lie in (0,1)")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0,1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0,1)")
        if self.max_iters < 1 or self.max_backtracks < 0 or self.init_step <= 0:
            raise ValueError("bad iteration controls")


@dataclass
class RunReport:
    iterations: int = 0
    J_history: list = field(default_factory=list)
    grad_inf_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    stop_reason: str = ""
    wall_time: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "J", "grad_inf", "step"])
            for i, (J, gi, st) in enumerate(zip(self.J_history, self.grad_inf_history, self.step_history)):
                writer.writerow([i, format(J, ".17g"), format(gi, ".17g"), format(st, ".17g")])


def prp_beta(g_new: np.ndarray, g_old: np.ndarray) -> float:
    """Polak-Ribiere-Polyak coefficient <g_new, g_new - g_old> / |g_old|^2."""
    denom = float(np.vdot(g_old, g_old))
    if denom == 0.0:
        raise ValueError("previous gradient is identically zero")
    return float(np.vdot(g_new, g_new - g_old)) / denom


def minimize(func: WeightedFunctional, w0: InverseField, opt: OptimizerConfig | None = None):
    """Minimize the functional from w0; returns (final InverseField, RunReport)."""
    opt = opt or OptimizerConfig()
    t_start = time.perf_counter()
    w = func.clamp(w0.values)
    report = RunReport()

    if opt.method == "grad_proj":
        J = func.value(w)
        g = func.gradient(w)
        ginf = float(np.abs(g).max())
        report.J_history.append(J)
        report.grad_inf_history.append(ginf)
        report.step_history.append(0.0)
        for _ in range(opt.max_iters):
            if ginf < opt.eps_inf:
                report.stop_reason = "tolerance"
                break
            w = func.clamp(w - opt.gamma * g)
            J = func.value(w)
            g = func.gradient(w)
            ginf = float(np.abs(g).max())
            report.iterations += 1
            report.J_history.append(J)
            report.grad_inf_history.append(ginf)
            report.step_history.append(opt.gamma)
        else:
            report.stop_reason = "max_iters"
        report.wall_time = time.perf_counter() - t_start
        return w0.with_values(w), report

    J = func.value(w)
    g = func.gradient(w)
    ginf = float(np.abs(g).max())
    report.J_history.append(J)
    report.grad_inf_history.append(ginf)
    report.step_history.append(0.0)
    d = -g

    for _ in range(opt.max_iters):
        if ginf < opt.eps_inf:
            report.stop_reason = "tolerance"
            break
        if float(np.vdot(d, g)) >= 0.0:
            d = -g
        # Armijo backtracking on the projected trial point
        step = opt.init_step
        accepted = False
        for _bt in range(opt.max_backtracks + 1):
            trial = func.clamp(w + step * d)
            J_trial = func.value(trial)
            if J_trial <= J + opt.armijo_c1 * float(np.vdot(g, trial - w)) and J_trial < J:
                accepted = True
                break
            step *= opt.shrink
        if not accepted:
            report.stop_reason = "line_search_failure"
            break
        w = trial
        J = J_trial
        g_new = func.gradient(w)
        beta = max(0.0, prp_beta(g_new, g))
        d = -g_new + beta * d
        g = g_new
        ginf = float(np.abs(g).max())
        report.iterations += 1
        report.J_history.append(J)
        report.grad_inf_history.append(ginf)
        report.step_history.append(step)
    else:
        report.stop_reason = "max_iters"

    report.wall_time = time.perf_counter() - t_start
    return w0.with_values(w), report


def background_initial_guess(grid_inverse: SpaceTimeGrid, traces: BoundaryTraces, fine_grid: SpaceTimeGrid,
                             schedule_variant: str = "ramp", fwd_cfg: ForwardConfig | None = None) -> InverseField:
    """Starting point from the unit-background simulation.

    Solves the forward problem with c = 1 on the fine grid under the
    experiment's Dirichlet schedule, differentiates twice in time, samples the
    result onto the inverse grid, and overwrites the constrained layers with
    the measured data (q, q - h*r), encoded relative to the background's own
    traces so that the corner layer of incompatible drives cancels.
    """
    from .boundary import restrict_traces, second_time_derivative
    from .forward import extract_neumann

    ones = ScalarField(fine_grid, np.ones(fine_grid.spatial_shape))
    f, _ = make_initial_profile(fine_grid)
    s = make_dirichlet_schedule(fine_grid, schedule_variant)
    u = solve_forward(ones, f, s, fwd_cfg)
    utt = _second_diff_time(u.values, fine_grid.tau)
    coarse = restrict(ScalarField(fine_grid, utt), grid_inverse)

    p_bg = extract_neumann(u, fwd_cfg)
    bg_fine = BoundaryTraces(fine_grid, s=s.s, p=p_bg.p)
    bg_data = second_time_derivative(restrict_traces(bg_fine, grid_inverse))
    return pin_from_traces(coarse.values, traces, reference=(coarse.values, bg_data))
