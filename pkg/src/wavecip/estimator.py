"""Scikit-learn style estimator wrapping the full inversion.

``CoefficientReconstructor`` is fit on measured boundary traces (which must
already carry the second time derivatives q and r) together with a starting
field, and exposes the reconstructed coefficient and the run report as fitted
attributes.  Hyperparameters follow the scikit-learn contract: stored
verbatim by ``__init__``, retrievable through ``get_params``, and the
instance is clonable.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .boundary import BoundaryTraces
from .carleman import make_carleman_config
from .functional import InverseField, WeightedFunctional, pin_from_traces
from .grid import ScalarField
from .optimizer import OptimizerConfig, minimize
from .phantom import make_initial_profile

__all__ = ["CoefficientReconstructor"]


class CoefficientReconstructor(BaseEstimator):
    """Recover the wave-speed coefficient from Dirichlet/Neumann boundary data.

    Parameters mirror the functional and optimizer knobs: the weight anchor
    ``x0`` and decay ``eta``/``lam``, the regularization strength ``alpha``,
    the admissible coefficient box, and the optimizer controls.

    After ``fit`` the instance carries:

    - ``w_``: the minimizing space-time field (an :class:`InverseField`);
    - ``coefficient_``: the reconstructed spatial coefficient.  On the pinned
      two-layer ring the t = 0 data may be incompatible with the admissible
      range, so the layer is projected into the box before dividing; only the
      free interior (``free_mask_``) is an actual estimate;
    - ``report_``: the optimizer run report;
    - ``functional_``: the assembled weighted functional.
    """

    def __init__(self, x0=(0.5, 0.5, -0.5), eta=0.1, lam=1.0, alpha=0.0,
                 a_min=0.5, a_max=4.0, method="prp_cg", eps_inf=1e-2, max_iters=2000,
                 armijo_c1=1e-4, shrink=0.5, init_step=1.0, max_backtracks=40, gamma=0.1):
        self.x0 = x0
        self.eta = eta
        self.lam = lam
        self.alpha = alpha
        self.a_min = a_min
        self.a_max = a_max
        self.method = method
        self.eps_inf = eps_inf
        self.max_iters = max_iters
        self.armijo_c1 = armijo_c1
        self.shrink = shrink
        self.init_step = init_step
        self.max_backtracks = max_backtracks
        self.gamma = gamma

    def _validate(self, traces: BoundaryTraces, background) -> InverseField:
        if not isinstance(traces, BoundaryTraces):
            raise TypeError(f"traces must be BoundaryTraces, got {type(traces).__name__}")
        if traces.q is None or traces.r is None:
            raise ValueError("traces must carry q and r; call second_time_derivative first")
        if isinstance(background, InverseField):
            if background.grid != traces.grid:
                raise ValueError("background and traces live on different grids")
            return background
        arr = np.asarray(background, dtype=float)
        return pin_from_traces(arr, traces)

    def fit(self, traces: BoundaryTraces, background, laplacian_f=None):
        """Run the inversion.

        ``background`` is the starting field (array or InverseField) on the
        traces' grid; ``laplacian_f`` defaults to the Laplacian of the
        standard quadratic profile.
        """
        w0 = self._validate(traces, background)
        grid = traces.grid
        if laplacian_f is None:
            _, lap = make_initial_profile(grid)
            laplacian_f = lap
        carleman = make_carleman_config(self.x0, self.eta, self.lam, grid.T)
        functional = WeightedFunctional(
            grid, carleman, laplacian_f, alpha=self.alpha, a_box=(self.a_min, self.a_max)
        )
        opt = OptimizerConfig(
            method=self.method, eps_inf=self.eps_inf, max_iters=self.max_iters,
            armijo_c1=self.armijo_c1, shrink=self.shrink, init_step=self.init_step,
            max_backtracks=self.max_backtracks, gamma=self.gamma,
        )
        w_final, report = minimize(functional, w0, opt)

        # reconstruct from a fully boxed t=0 layer so the reported field is finite
        lo, hi = functional.box_bounds()
        layer = np.clip(w_final.values[..., 0], lo, hi)
        lf = laplacian_f.values if isinstance(laplacian_f, ScalarField) else np.asarray(laplacian_f)
        self.functional_ = functional
        self.w_ = w_final
        self.report_ = report
        self.grid_ = grid
        self.free_mask_ = functional.free
        self.coefficient_ = ScalarField(grid, lf / layer)
        return self

    def score(self, c_true) -> float:
        """Negative relative L2 error of the coefficient over the free interior."""
        if not hasattr(self, "coefficient_"):
            raise RuntimeError("estimator is not fitted")
        truth = c_true.values if isinstance(c_true, ScalarField) else np.asarray(c_true)
        mask = self.free_mask_
        diff = self.coefficient_.values[mask] - truth[mask]
        return -float(np.linalg.norm(diff) / np.linalg.norm(truth[mask]))
