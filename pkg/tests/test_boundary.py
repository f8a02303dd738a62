import numpy as np
import pytest

from wavecip.boundary import (
    BoundaryTraces,
    NoiseSpec,
    TraceError,
    add_noise,
    restrict_traces,
    second_time_derivative,
)
from wavecip.grid import build_grid
from wavecip.phantom import make_dirichlet_schedule, make_initial_profile


def _traces_with_p(grid, p_value=2.0):
    s = make_dirichlet_schedule(grid, "manufactured")
    p = np.full((6, grid.n_space, grid.n_space, grid.n_time), p_value)
    return BoundaryTraces(grid, s=s.s, p=p)


class TestNoise:
    def test_zero_sigma_is_identity(self):
        g = build_grid(9, 5, 0.25)
        tr = _traces_with_p(g)
        noisy = add_noise(tr, NoiseSpec(0.0, seed=3))
        assert np.array_equal(noisy.s, tr.s)
        assert np.array_equal(noisy.p, tr.p)

    def test_factor_constant_in_time(self):
        g = build_grid(9, 5, 0.25)
        tr = _traces_with_p(g)
        noisy = add_noise(tr, NoiseSpec(0.03, seed=3))
        # each node's whole time series is scaled by one factor (where s != 0)
        with np.errstate(invalid="ignore"):
            ratio = np.where(tr.s != 0.0, noisy.s / tr.s, 1.0)
        assert np.allclose(ratio, ratio[..., :1])
        assert np.abs(ratio - 1.0).max() <= 0.03 + 1e-12
        # s and p share the realization (p is nonzero everywhere here)
        p_ratio = noisy.p / tr.p
        mask = tr.s[..., 0] != 0.0
        assert np.allclose(p_ratio[mask], ratio[mask])

    def test_same_seed_reproduces(self):
        g = build_grid(9, 5, 0.25)
        tr = _traces_with_p(g)
        a = add_noise(tr, NoiseSpec(0.03, seed=11))
        b = add_noise(tr, NoiseSpec(0.03, seed=11))
        assert a.s.tobytes() == b.s.tobytes()
        assert a.p.tobytes() == b.p.tobytes()

    def test_shared_nodes_share_factors(self):
        g = build_grid(9, 5, 0.25)
        tr = _traces_with_p(g)
        noisy = add_noise(tr, NoiseSpec(0.5, seed=5))
        f = noisy.s / tr.s
        # the edge x=0, y=0 appears on faces x- (index [0, :]) and y- (index [0, :])
        assert np.allclose(f[0, 0, :, 0], f[2, 0, :, 0])
        # corner (1,1,1) appears on x+, y+, z+
        assert f[1, -1, -1, 0] == pytest.approx(f[3, -1, -1, 0])
        assert f[1, -1, -1, 0] == pytest.approx(f[5, -1, -1, 0])

    def test_noise_invalidates_derivatives(self):
        g = build_grid(9, 5, 0.25)
        tr = second_time_derivative(_traces_with_p(g))
        assert tr.q is not None
        noisy = add_noise(tr, NoiseSpec(0.03, seed=1))
        assert noisy.q is None and noisy.r is None

    def test_missing_records_rejected(self):
        g = build_grid(9, 5, 0.25)
        s_only = make_dirichlet_schedule(g, "manufactured")
        with pytest.raises(TraceError):
            add_noise(s_only, NoiseSpec(0.03, 1))

    def test_negative_sigma_rejected(self):
        with pytest.raises(TraceError):
            NoiseSpec(-0.1, 1)


class TestSecondTimeDerivative:
    def test_ramp_has_zero_q(self):
        g = build_grid(9, 5, 0.25)
        s = make_dirichlet_schedule(g, "ramp")
        tr = BoundaryTraces(g, s=s.s, p=np.zeros_like(s.s))
        out = second_time_derivative(tr)
        assert np.allclose(out.q, 0.0, atol=1e-12)

    def test_manufactured_q_is_six_exactly(self):
        g = build_grid(9, 5, 0.25)
        tr = _traces_with_p(g)
        out = second_time_derivative(tr)
        # central stencil and both one-sided 4-point ends are exact on quadratics
        assert np.allclose(out.q, 6.0, rtol=1e-9)

    def test_time_constant_p_gives_zero_r(self):
        g = build_grid(9, 5, 0.25)
        out = second_time_derivative(_traces_with_p(g, p_value=3.3))
        assert np.allclose(out.r, 0.0, atol=1e-12)

    def test_noise_factor_propagates_linearly(self):
        g = build_grid(9, 5, 0.25)
        tr = _traces_with_p(g)
        clean = second_time_derivative(tr)
        noisy = second_time_derivative(add_noise(tr, NoiseSpec(0.07, seed=2)))
        factors = add_noise(tr, NoiseSpec(0.07, seed=2)).s / tr.s
        assert np.allclose(noisy.q, clean.q * factors)

    def test_too_few_levels_rejected(self):
        g = build_grid(5, 3, 0.25)
        s = make_dirichlet_schedule(g, "manufactured")
        tr = BoundaryTraces(g, s=s.s, p=np.zeros_like(s.s))
        with pytest.raises(TraceError):
            second_time_derivative(tr)


class TestRestrictTraces:
    def test_samples_coincident_nodes(self):
        fine = build_grid(17, 33, 0.25)
        coarse = build_grid(9, 5, 0.25)
        tr = _traces_with_p(fine)
        out = restrict_traces(tr, coarse)
        assert out.s.shape == (6, 9, 9, 5)
        ref = make_dirichlet_schedule(coarse, "manufactured")
        assert np.allclose(out.s, ref.s)

    def test_rejects_non_nested(self):
        fine = build_grid(17, 33, 0.25)
        coarse = build_grid(10, 5, 0.25)
        from wavecip.grid import GridError

        with pytest.raises(GridError):
            restrict_traces(_traces_with_p(fine), coarse)


def test_traces_validate_shape():
    g = build_grid(9, 5, 0.25)
    with pytest.raises(TraceError):
        BoundaryTraces(g, s=np.zeros((6, 9, 9, 4)))
