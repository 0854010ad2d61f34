import math

import numpy as np
import pytest

from brokenray.errors import InvalidNullProfile, UnderdeterminedProbe
from brokenray.fields import RadialProfile
from brokenray.nullspace import (cylinder_att_forward, cylinder_identity_residual,
                                 cylinder_injectivity_probe, cylinder_null_residual,
                                 disk_null_check, disk_witness, laplace_transform, orbit_family,
                                 tube_null_check, tube_witness)
from brokenray.planar import RectTube


# -- tube ----------------------------------------------------------------------------

def test_tube_sine_profile_is_invisible():
    tube = RectTube(1.0, 3.0)
    g = RadialProfile.make("trig_mode", (0.0, 3.0), index=1)
    rep = tube_null_check(tube, g, n_rays=100, seed=3)
    assert rep.value < 1e-9 and rep.passed
    assert rep.extra["max_closed_form_deviation"] < 1e-9
    assert rep.extra["max_axial_speed_variation"] < 1e-12
    assert rep.extra["max_reflections"] >= 1
    header, rows = rep.samples
    assert header[-1] == "integral" and len(rows) == 100


def test_tube_zero_profile():
    g = RadialProfile.make("constant", (0.0, 2.0), value=0.0)
    rep = tube_null_check(RectTube(1.0, 2.0), g, n_rays=20)
    assert rep.value == 0.0


def test_tube_rejects_nonzero_mean():
    g = RadialProfile.make("constant", (0.0, 2.0), value=1.0)
    with pytest.raises(InvalidNullProfile):
        tube_null_check(RectTube(1.0, 2.0), g, n_rays=5)


def test_tube_witness_without_zero_mean():
    g = RadialProfile.make("bump", (0.0, 3.0), center=0.5, halfwidth=0.2)
    rep = tube_witness(RectTube(1.0, 3.0), g, n_rays=50)
    assert rep.value > 0.1
    assert "witness_ray" in rep.extra


def test_tube_report_is_deterministic():
    tube = RectTube(1.0, 3.0)
    g = RadialProfile.make("trig_mode", (0.0, 3.0), index=2)
    a = tube_null_check(tube, g, n_rays=30, seed=9)
    b = tube_null_check(tube, g, n_rays=30, seed=9)
    assert a.to_dict() == b.to_dict()


# -- disc ----------------------------------------------------------------------------

def test_orbit_family():
    fam = orbit_family(6)
    assert (2, 1) in fam and (5, 2) in fam and (6, 5) in fam
    assert (6, 2) not in fam and (4, 2) not in fam
    assert all(math.gcd(p, q) == 1 for q, p in fam)


def test_disk_diameters_cancel():
    g = RadialProfile.make("bump", center=0.5, halfwidth=0.3)
    rep = disk_null_check(g, Q=2, n_phases=16)
    assert rep.value < 1e-12


def test_disk_small_family():
    g = RadialProfile.make("bump", center=0.5, halfwidth=0.3)
    rep = disk_null_check(g, Q=16, n_phases=8)
    assert rep.value < 1e-9 and rep.passed
    header, rows = rep.samples
    assert len(rows) == len(orbit_family(16))


def test_disk_witness_is_positive():
    g = RadialProfile.make("bump", center=0.5, halfwidth=0.3)
    rep = disk_witness(g, Q=8, n_phases=4)
    assert rep.value > 0.1


# -- cylinder ------------------------------------------------------------------------

def test_cylinder_zero_profile():
    g = RadialProfile.make("constant", value=0.0)
    assert cylinder_att_forward(g, 1.0, 0.5) == 0.0


@pytest.mark.parametrize("b", [0.05, 0.3, 1.0])
def test_cylinder_zero_mean_invisible_without_attenuation(b):
    g = RadialProfile.make("trig_mode", (0.0, 1.0), index=3)
    assert abs(cylinder_att_forward(g, 0.0, b)) < 1e-10


def test_cylinder_exponential_profile():
    # g = e^{-t} on [0, 8]; with a = b = 1 the integral is (1 - e^{-16}) / 2
    L = 8.0
    g = RadialProfile.make("exp_trunc", (0.0, L), rate=1.0)
    got = cylinder_att_forward(g, 1.0, 1.0)
    assert got == pytest.approx(0.5, abs=1e-6)
    assert got == pytest.approx((1 - math.exp(-2 * L)) / 2, abs=1e-9)
    assert laplace_transform(g, 1.0) == pytest.approx(got, abs=1e-14)


def test_cylinder_identity_grid():
    worst = 0.0
    for k in range(16):
        g = RadialProfile.make("trig_mode", (0.0, 1.0), index=k)
        for b in np.linspace(1 / 16, 1.0, 16):
            worst = max(worst, cylinder_identity_residual(g, 1.0, float(b)))
    assert worst < 1e-10


def test_cylinder_validation():
    g = RadialProfile.make("constant")
    with pytest.raises(ValueError):
        cylinder_att_forward(g, 1.0, 0.0)
    with pytest.raises(ValueError):
        cylinder_att_forward(g, -1.0, 0.5)


def test_null_direction_without_attenuation():
    assert cylinder_null_residual() < 1e-10
    probe = cylinder_injectivity_probe(0.0, M=4, n_slopes=16)
    assert probe.sigma_min < 1e-10
    # the direction found is a zero-mean combination: no constant component
    assert abs(probe.null_vector[0]) < 1e-8


def test_probe_with_attenuation():
    probe = cylinder_injectivity_probe(1.0, M=8, n_slopes=64)
    assert probe.sigma_min > 0.0
    assert probe.matrix.shape == (64, 8)
    assert np.all(np.diff(probe.singular_values) <= 0)


def test_probe_constant_profile():
    probe = cylinder_injectivity_probe(1.0, M=1, n_slopes=8)
    assert probe.sigma_min > 0.0
    assert np.all(probe.matrix != 0.0)


def test_probe_underdetermined():
    with pytest.raises(UnderdeterminedProbe):
        cylinder_injectivity_probe(1.0, M=9, n_slopes=8)
