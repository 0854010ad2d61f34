import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from brokenray.errors import QuadratureError
from brokenray.fields import (RadialProfile, ScalarField2D, integrate_segment, line_integral,
                              simpson_pieces)

coords = st.floats(-0.8, 0.8, allow_nan=False)


def test_constant_field_segment():
    f = ScalarField2D.analytic("constant", value=3.5)
    assert integrate_segment(f, (0.0, 0.0), (2.0, 0.0)) == pytest.approx(7.0, abs=1e-12)


@pytest.mark.parametrize("a,L", [(0.5, 1.0), (1.0, 2.0), (3.0, 0.7)])
def test_decay_weight_elementary(a, L):
    f = ScalarField2D.analytic("constant", value=1.0)
    exact = (1 - math.exp(-a * L)) / a
    got = integrate_segment(f, (0.1, 0.2), (0.1 + L, 0.2), h=-a)
    assert got == pytest.approx(exact, rel=1e-7)
    fine = integrate_segment(f, (0.1, 0.2), (0.1 + L, 0.2), h=-a, density=1024)
    assert fine == pytest.approx(exact, rel=1e-11)


def test_gaussian_against_adaptive_oracle(rng):
    # at 1024 nodes per unit length Simpson on sigma = 0.1 is at the 1e-10 level
    f = ScalarField2D.analytic("gaussian", center=(0.1, 0.2), sigma=0.1)
    for _ in range(20):
        p0, p1 = rng.uniform(-0.4, 0.6, 2), rng.uniform(-0.4, 0.6, 2)
        L = float(np.linalg.norm(p1 - p0))
        u = (p1 - p0) / L
        ref = quad(lambda t: float(f(*(p0 + t * u))), 0, L, epsabs=1e-15, epsrel=1e-13,
                   limit=400)[0]
        got = integrate_segment(f, p0, p1, density=1024)
        assert abs(got - ref) <= 1e-9 * max(abs(ref), 1e-3)


def test_simpson_is_fourth_order():
    f = ScalarField2D.analytic("gaussian", center=(0.0, 0.0), sigma=0.2)
    p0, p1 = (-0.6, -0.1), (0.7, 0.3)
    exact = integrate_segment(f, p0, p1, density=4096)
    e1 = abs(integrate_segment(f, p0, p1, density=64) - exact)
    e2 = abs(integrate_segment(f, p0, p1, density=128) - exact)
    assert 10 < e1 / e2 < 22


@given(coords, coords, coords, coords, st.floats(0.1, 0.9))
@settings(max_examples=40, deadline=None)
def test_additivity_with_offset(x0, y0, x1, y1, frac):
    p0, p2 = np.array([x0, y0]), np.array([x1, y1])
    if np.linalg.norm(p2 - p0) < 1e-3:
        return
    p1 = p0 + frac * (p2 - p0)
    f = ScalarField2D.analytic("gaussian", center=(0.1, -0.1), sigma=0.3)
    h = -0.7
    whole = integrate_segment(f, p0, p2, h=h, density=256)
    parts = (integrate_segment(f, p0, p1, h=h, density=256)
             + integrate_segment(f, p1, p2, h=h, offset=float(np.linalg.norm(p1 - p0)),
                                 density=256))
    assert whole == pytest.approx(parts, abs=1e-9)


@given(coords, coords, coords, coords)
@settings(max_examples=40, deadline=None)
def test_unit_field_gives_length(x0, y0, x1, y1):
    p0, p1 = np.array([x0, y0]), np.array([x1, y1])
    L = float(np.linalg.norm(p1 - p0))
    if L < 1e-6:
        return
    f = ScalarField2D.analytic("constant", value=1.0)
    assert integrate_segment(f, p0, p1) == pytest.approx(L, abs=1e-12)


def test_non_finite_raises():
    bad = ScalarField2D("analytic", func=lambda x, y: np.full(np.shape(x), np.nan))
    with pytest.raises(QuadratureError):
        integrate_segment(bad, (0.0, 0.0), (1.0, 0.0))


def test_outside_support_is_zero():
    f = ScalarField2D.analytic("bump", center=(0.2, 0.3), radius=0.1)
    assert f(5.0, 5.0) == 0.0
    assert np.all(f(np.array([0.2, 0.45]), np.array([0.3, 0.3])) == np.array([f(0.2, 0.3), 0.0]))


def test_disk_jump_is_resolved():
    # chord through the disc indicator: exact length despite the discontinuity
    f = ScalarField2D.analytic("disk", center=(0.0, 0.0), radius=0.5)
    got = integrate_segment(f, (-1.0, 0.3), (1.0, 0.3))
    assert got == pytest.approx(2 * math.sqrt(0.25 - 0.09), abs=1e-10)


def test_grid_bilinear_exact_on_linear_fields():
    xs = np.arange(11) * 0.1
    X, Y = np.meshgrid(xs, xs)
    f = ScalarField2D.from_grid(2 * X - 3 * Y + 1, (0.0, 0.0), 0.1)
    pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
    assert np.allclose(f(pts[:, 0], pts[:, 1]), 2 * pts[:, 0] - 3 * pts[:, 1] + 1, atol=1e-12)
    assert f(1.5, 0.5) == 0.0


def test_grid_csv_roundtrip(tmp_path):
    vals = np.random.default_rng(1).normal(size=(5, 7))
    f = ScalarField2D.from_grid(vals, (-0.3, 0.2), 0.05)
    f.to_csv(tmp_path / "f.csv")
    g = ScalarField2D.from_csv(tmp_path / "f.csv")
    assert np.array_equal(g.values, vals)
    assert g.origin == f.origin and g.spacing == f.spacing
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "nx,ny,ox,oy,spacing"


def test_grid_pgm_roundtrip(tmp_path):
    vals = np.random.default_rng(2).uniform(-1, 3, size=(6, 4))
    f = ScalarField2D.from_grid(vals, (0.0, 0.0), 0.1)
    f.to_pgm(tmp_path / "f.pgm")
    g = ScalarField2D.from_pgm(tmp_path / "f.pgm")
    assert np.max(np.abs(g.values - vals)) <= 4.0 / 65535
    assert (tmp_path / "f.pgm.json").exists()


def test_simpson_pieces_restart_at_breaks():
    t, w = simpson_pieces(1.0, [0.3], 64)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    # a step at 0.3 is integrated exactly
    assert float((t > 0.3) @ w) == pytest.approx(0.7, abs=1e-10)


def test_line_integral_in_one_dimension():
    val = line_integral(lambda p: np.exp(-p[:, 0]), [0.0], [2.0], density=256)
    assert val == pytest.approx(1 - math.exp(-2.0), abs=1e-10)


def test_radial_profiles():
    g = RadialProfile.make("trig_mode", (0.0, 3.0), index=1)
    assert abs(g.integral()) < 1e-12
    b = RadialProfile.make("bump", (0.0, 1.0), center=0.5, halfwidth=0.2)
    assert b(0.1) == 0.0 and b(0.5) > 0
    assert b.integral() > 0
    with pytest.raises(KeyError):
        RadialProfile.make("nope")


def test_trig_mode_indexing():
    L = 2.0
    c = RadialProfile.make("trig_mode", (0.0, L), index=0)
    s1 = RadialProfile.make("trig_mode", (0.0, L), index=1)
    c1 = RadialProfile.make("trig_mode", (0.0, L), index=2)
    t = 0.3
    assert c(t) == pytest.approx(1.0)
    assert s1(t) == pytest.approx(math.sin(2 * math.pi * t / L))
    assert c1(t) == pytest.approx(math.cos(2 * math.pi * t / L))


def test_radial_harmonic_field():
    f = ScalarField2D.analytic("radial_harmonic", coefficients=(0.0, 1.0), k=1, trig="cos")
    # g(r) = r, so g(r) cos(theta) = x inside the unit disc
    assert f(0.3, 0.4) == pytest.approx(0.3)
