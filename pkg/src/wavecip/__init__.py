"""Reconstruction of the coefficient c(x) in c*u_tt = laplacian(u) from
boundary measurements, via a Carleman-weighted globally convex least-squares
functional minimized by conjugate gradients."""

from .boundary import BoundaryTraces, NoiseSpec, add_noise, restrict_traces, second_time_derivative
from .carleman import CarlemanConfig, geometry_numbers, make_carleman_config, psi, weight_sq
from .estimator import CoefficientReconstructor
from .forward import ForwardConfig, SolverError, extract_neumann, solve_forward
from .functional import (
    AdmissibilityError,
    InverseField,
    WeightedFunctional,
    finite_difference_check,
    pin_from_traces,
    reconstruct_coefficient,
    ring_mask,
)
from .grid import GridError, ScalarField, SpaceTimeGrid, build_grid, discrete_laplacian, discrete_second_time, restrict
from .harness import (
    ExperimentConfig,
    Metrics,
    named_experiment,
    parse_config,
    run_convexity_sweep,
    run_experiment,
    run_gradient_check,
    run_stability_experiment,
)
from .optimizer import OptimizerConfig, RunReport, background_initial_guess, minimize, prp_beta
from .phantom import PhantomSpec, load_glyph_bitmap, make_coefficient, make_dirichlet_schedule, make_initial_profile

__version__ = "0.1.0"
