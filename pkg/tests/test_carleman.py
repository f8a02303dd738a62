import math

import numpy as np
import pytest

from wavecip.carleman import CarlemanError, geometry_numbers, make_carleman_config, psi, weight_sq, weight_sq_field
from wavecip.grid import build_grid


def test_psi_at_anchor_is_zero():
    cfg = make_carleman_config((1.5, 0.5, 0.5), 0.1, 1.0, 0.25)
    assert psi((1.5, 0.5, 0.5), 0.0, cfg) == 0.0
    assert weight_sq((1.5, 0.5, 0.5), 0.0, cfg) == 1.0


def test_weight_value_half_unit_offset():
    cfg = make_carleman_config((0.5, 0.5, -0.5), 0.1, 1.0, 0.25)
    assert psi((0.5, 0.5, 0.0), 0.0, cfg) == pytest.approx(0.25)
    assert weight_sq((0.5, 0.5, 0.0), 0.0, cfg) == pytest.approx(math.exp(0.5), rel=1e-12)


def test_zero_lambda_degenerates_to_unweighted():
    cfg = make_carleman_config((0.5, 0.5, -0.5), 0.1, 0.0, 0.25)
    grid = build_grid(5, 5, 0.25)
    assert np.all(weight_sq_field(cfg, grid) == 1.0)


def test_geometry_numbers_standard_anchor():
    d, D, M, N = geometry_numbers((0.5, 0.5, -0.5), 0.1, 0.25)
    assert d == pytest.approx(0.5)
    assert D == pytest.approx(math.sqrt(2.75), rel=1e-14)
    assert M == pytest.approx(0.1 * 0.0625 - 0.25)
    assert N == pytest.approx(0.1 * 0.0625 - 2.75)
    assert N < 0


def test_theory_flag_records_sign_of_N():
    cfg = make_carleman_config((0.5, 0.5, -0.5), 0.1, 1.0, 0.25)
    assert cfg.theory_condition_met is False
    # a long enough window turns the flag on: T > D/sqrt(eta)
    long_cfg = make_carleman_config((0.5, 0.5, -0.5), 0.1, 1.0, 6.0)
    assert long_cfg.theory_condition_met is True


def test_anchor_inside_cube_rejected():
    with pytest.raises(CarlemanError):
        make_carleman_config((0.5, 0.5, 0.5), 0.1, 1.0, 0.25)
    with pytest.raises(CarlemanError):
        geometry_numbers((1.0, 1.0, 1.0), 0.1, 0.25)  # closed cube includes corners


@pytest.mark.parametrize("eta", [0.0, 1.0, -0.1, 2.0])
def test_eta_must_be_in_unit_interval(eta):
    with pytest.raises(CarlemanError):
        make_carleman_config((0.5, 0.5, -0.5), eta, 1.0, 0.25)


def test_negative_lambda_rejected():
    with pytest.raises(CarlemanError):
        make_carleman_config((0.5, 0.5, -0.5), 0.1, -1.0, 0.25)


def test_weight_monotone_in_time_and_distance():
    cfg = make_carleman_config((0.5, 0.5, -0.5), 0.1, 1.0, 0.25)
    grid = build_grid(9, 9, 0.25)
    W = weight_sq_field(cfg, grid)
    # for fixed x, non-increasing in t
    assert np.all(np.diff(W, axis=-1) <= 1e-15)
    # for fixed t, larger |x - x0| gives larger weight: compare along z
    assert np.all(W[:, :, 1:, 0] >= W[:, :, :-1, 0])


def test_weight_bounded_by_max_distance():
    cfg = make_carleman_config((0.5, 0.5, -0.5), 0.1, 1.3, 0.25)
    grid = build_grid(9, 9, 0.25)
    W = weight_sq_field(cfg, grid)
    assert W.max() <= math.exp(2 * 1.3 * cfg.D**2) + 1e-12
