import numpy as np
import pytest

from wavecip.grid import build_grid
from wavecip.phantom import (
    PhantomError,
    PhantomSpec,
    load_glyph_bitmap,
    make_coefficient,
    make_dirichlet_schedule,
    make_initial_profile,
    monotonicity_violation,
)


def test_none_glyph_gives_uniform_background():
    g = build_grid(9, 5, 0.25)
    c = make_coefficient(PhantomSpec(glyph="NONE"), g)
    assert np.all(c.values == 1.0)


def test_cube_glyph_is_exact_box_membership():
    g = build_grid(17, 5, 0.25)
    spec = PhantomSpec(glyph="CUBE", z_extent=(0.375, 0.625))
    c = make_coefficient(spec, g)
    x = g.axis_coords()
    inside = (x >= 0.375) & (x <= 0.625)
    expected = np.where(
        inside[:, None, None] & inside[None, :, None] & inside[None, None, :], 2.0, 1.0
    )
    assert np.array_equal(c.values, expected)


def test_letter_glyph_values_and_volume_fraction():
    g = build_grid(17, 5, 0.25)
    spec = PhantomSpec(glyph="A")
    c = make_coefficient(spec, g)
    assert c.values.max() == 2.0
    assert c.values.min() == 1.0
    frac = np.mean(c.values == 2.0)
    # oracle: count pixels in the shipped bitmap and scale by the z slab
    bitmap = load_glyph_bitmap("A")
    z = g.axis_coords()
    z_frac = np.mean((z >= spec.z_extent[0]) & (z <= spec.z_extent[1]))
    assert 0.0 < frac < 0.5 * z_frac + 0.25
    assert bitmap.mean() < 0.5


@pytest.mark.parametrize("glyph", ["A", "OMEGA", "C", "CUBE", "NONE"])
def test_bounds_hold_for_all_glyphs(glyph):
    g = build_grid(9, 5, 0.25)
    c = make_coefficient(PhantomSpec(glyph=glyph), g)
    assert c.values.min() >= 1.0
    assert c.values.max() <= 2.0


def test_coefficient_is_deterministic():
    g = build_grid(17, 5, 0.25)
    a = make_coefficient(PhantomSpec(glyph="OMEGA"), g)
    b = make_coefficient(PhantomSpec(glyph="OMEGA"), g)
    assert a.values.tobytes() == b.values.tobytes()


def test_unknown_glyph_rejected():
    with pytest.raises(PhantomError):
        PhantomSpec(glyph="B")


def test_bad_contrast_rejected():
    with pytest.raises(PhantomError):
        PhantomSpec(inclusion_value=1.0, background_value=2.0)
    with pytest.raises(PhantomError):
        PhantomSpec(background_value=0.5, inclusion_value=2.0)


def test_bad_z_extent_rejected():
    with pytest.raises(PhantomError):
        PhantomSpec(z_extent=(0.5, 0.5))
    with pytest.raises(PhantomError):
        PhantomSpec(z_extent=(-0.1, 0.5))


def test_initial_profile_values_and_laplacian():
    g = build_grid(9, 5, 0.25)
    f, lap = make_initial_profile(g)
    assert f.values[0, 0, 0] == 0.0
    assert f.values[-1, -1, -1] == pytest.approx(3.0)
    assert np.all(lap.values == 6.0)


class TestSchedules:
    def test_ramp_matches_profile_at_t0(self):
        g = build_grid(9, 5, 0.25)
        s = make_dirichlet_schedule(g, "ramp")
        f, _ = make_initial_profile(g)
        # face x-: nodes (0, j, l)
        assert np.allclose(s.s[0, :, :, 0], f.values[0, :, :])
        assert np.allclose(s.s[1, :, :, 0], f.values[-1, :, :])

    def test_ramp_corner_value(self):
        g = build_grid(9, 5, 0.25)
        s = make_dirichlet_schedule(g, "ramp")
        # node (1,1,1) lies on face x+ at in-face index (-1,-1); t = 0.25
        assert s.s[1, -1, -1, -1] == pytest.approx(3.0 * 1.25)

    def test_manufactured_value(self):
        g = build_grid(9, 5, 0.5)
        s = make_dirichlet_schedule(g, "manufactured")
        # node (1,0,0) on face x+, in-face (0,0); t = 0.5 -> 1 + 3*0.25 = 1.75
        assert s.s[1, 0, 0, -1] == pytest.approx(1.75)

    def test_unknown_variant_rejected(self):
        g = build_grid(9, 5, 0.25)
        with pytest.raises(PhantomError):
            make_dirichlet_schedule(g, "linear")


class TestBitmapFormat:
    def test_shipped_bitmaps_parse(self):
        for name in ("A", "OMEGA", "C"):
            bm = load_glyph_bitmap(name)
            assert bm.shape == (64, 64)
            assert bm.any()

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("abc\n##\n")
        with pytest.raises(PhantomError):
            load_glyph_bitmap(p)

    def test_wrong_row_count(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("2 3\n##\n..\n")
        with pytest.raises(PhantomError):
            load_glyph_bitmap(p)

    def test_invalid_characters(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("2 2\n#x\n..\n")
        with pytest.raises(PhantomError):
            load_glyph_bitmap(p)

    def test_custom_bitmap_roundtrip(self, tmp_path):
        p = tmp_path / "dot.txt"
        p.write_text("3 2\n.#.\n...\n")
        bm = load_glyph_bitmap(p)
        assert bm.shape == (2, 3)
        assert bm.sum() == 1


def test_monotonicity_diagnostic_flags_piecewise_constant():
    g = build_grid(17, 5, 0.25)
    c = make_coefficient(PhantomSpec(glyph="CUBE", z_extent=(0.375, 0.625)), g)
    worst = monotonicity_violation(c, (0.5, 0.5, -0.5))
    assert worst < 0.0  # the wall facing the anchor violates the radial condition
    c_flat = make_coefficient(PhantomSpec(glyph="NONE"), g)
    assert monotonicity_violation(c_flat, (0.5, 0.5, -0.5)) == 0.0
