import numpy as np
import pytest

from wavecip.boundary import BoundaryTraces, face_node_coords
from wavecip.forward import ForwardConfig, SolverError, conjugate_gradient, extract_neumann, solve_forward
from wavecip.grid import ScalarField, build_grid
from wavecip.phantom import make_dirichlet_schedule, make_initial_profile


def _manufactured_setup(n=9, m=9, T=0.25, c0=1.0):
    g = build_grid(n, m, T)
    f, _ = make_initial_profile(g)
    c = ScalarField(g, np.full(g.spatial_shape, c0))
    t = g.time_coords()
    s = np.empty((6, n, n, m))
    for face in range(6):
        X, Y, Z = face_node_coords(g, face)
        s[face] = (X**2 + Y**2 + Z**2)[:, :, None] + (3.0 / c0) * t[None, None, :] ** 2
    return g, c, f, BoundaryTraces(g, s=s)


class TestSolveForward:
    def test_manufactured_unit_coefficient(self):
        g, c, f, s = _manufactured_setup()
        u = solve_forward(c, f, s)
        t = g.time_coords()
        exact = f.values[..., None] + 3.0 * t**2
        assert np.abs(u.values - exact).max() < 1e-10

    def test_manufactured_constant_two(self):
        g, c, f, s = _manufactured_setup(c0=2.0)
        u = solve_forward(c, f, s)
        t = g.time_coords()
        exact = f.values[..., None] + 1.5 * t**2
        assert np.abs(u.values - exact).max() < 1e-10

    def test_temporal_self_convergence_order_two(self):
        # ramp drive against a reference at one quarter of the step
        T = 0.25
        n = 9
        sols = {}
        for m in (5, 9, 17, 33):
            g = build_grid(n, m, T)
            f, _ = make_initial_profile(g)
            c = ScalarField(g, np.ones(g.spatial_shape))
            s = make_dirichlet_schedule(g, "ramp")
            sols[m] = solve_forward(c, f, s).values
        ref = sols[33]
        e1 = np.abs(sols[5] - ref[..., ::8]).max()
        e2 = np.abs(sols[9] - ref[..., ::4]).max()
        order = np.log2(e1 / e2)
        assert 1.4 < order < 2.6

    def test_incompatible_schedule_rejected(self):
        g, c, f, s = _manufactured_setup()
        bad = BoundaryTraces(g, s=s.s + 1.0)
        with pytest.raises(SolverError):
            solve_forward(c, f, bad)

    def test_coefficient_below_one_rejected(self):
        g, c, f, s = _manufactured_setup()
        small = ScalarField(g, np.full(g.spatial_shape, 0.5))
        with pytest.raises(SolverError):
            solve_forward(small, f, s)

    def test_determinism(self):
        g, c, f, s = _manufactured_setup(n=7, m=7)
        a = solve_forward(c, f, s).values
        b = solve_forward(c, f, s).values
        assert a.tobytes() == b.tobytes()

    def test_non_convergence_reported(self):
        g, c, f, s = _manufactured_setup()
        cfg = ForwardConfig(linear_solver_tol=1e-14, linear_solver_max_iter=1)
        with pytest.raises(SolverError):
            solve_forward(c, f, s, cfg)


class TestExtractNeumann:
    def test_second_order_exact_on_quadratic(self):
        g, c, f, s = _manufactured_setup()
        u = solve_forward(c, f, s)
        p = extract_neumann(u)
        # face x+: du/dx = 2x = 2; face x-: outward is -x so -du/dx = 0
        assert np.abs(p.p[1] - 2.0).max() < 1e-8
        assert np.abs(p.p[0]).max() < 1e-8

    def test_constant_field_gives_zero(self):
        g = build_grid(9, 5, 0.25)
        u = ScalarField(g, np.full(g.spacetime_shape, 4.2))
        p = extract_neumann(u)
        assert np.all(p.p == 0.0)

    def test_first_order_sign_convention(self):
        g = build_grid(9, 5, 0.25)
        X, _, _ = g.meshgrid()
        u = ScalarField(g, np.broadcast_to(X[..., None], g.spacetime_shape).copy())
        p = extract_neumann(u, ForwardConfig(neumann_order="first"))
        assert np.allclose(p.p[1], 1.0)   # du/dn at x=1 for u=x
        assert np.allclose(p.p[0], -1.0)  # du/dn at x=0 for u=x

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            ForwardConfig(neumann_order="third")


class TestConjugateGradient:
    def test_energy_error_decreases_monotonically(self):
        rng = np.random.default_rng(0)
        n = 40
        Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
        A = Q @ np.diag(rng.uniform(1.0, 50.0, n)) @ Q.T
        b = rng.standard_normal(n)
        x_star = np.linalg.solve(A, b)
        errs = []

        def watch(x):
            e = x - x_star
            errs.append(float(e @ A @ e))

        x, its = conjugate_gradient(lambda v: A @ v, b, np.zeros(n), 1e-12, 500, callback=watch)
        assert np.allclose(x, x_star, atol=1e-8)
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(errs, errs[1:]))

    def test_zero_rhs_short_circuits(self):
        x, its = conjugate_gradient(lambda v: v, np.zeros(5), np.ones(5), 1e-12, 10)
        assert its == 0
        assert np.all(x == 0.0)

    def test_raises_after_max_iter(self):
        rng = np.random.default_rng(1)
        n = 30
        A = rng.standard_normal((n, n))
        A = A @ A.T + n * np.eye(n)
        b = rng.standard_normal(n)
        with pytest.raises(SolverError):
            conjugate_gradient(lambda v: A @ v, b, np.zeros(n), 1e-14, 2)
