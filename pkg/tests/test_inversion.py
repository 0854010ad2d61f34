import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.special import eval_legendre

from brokenray.errors import DegenerateGeometry, IncompleteSinogram, NonEvenData, SlowConvergence
from brokenray.fields import ScalarField2D
from brokenray.inversion import (GridSpec, cartesian_sph_harm, cgls, fbp_reconstruct,
                                 fill_excluded, funk_eigenvalue, funk_inversion,
                                 lattice_perp_basis, legendre_at_zero, perpendicular_k,
                                 reconstruct_cone_general, reconstruct_cone_integer,
                                 reconstruct_cube_periodic, reconstruct_octant_periodic,
                                 relative_l2, sphere_quadrature, torus_fourier_inversion)
from brokenray.phantoms import SphereField, TorusField
from brokenray.planar import ConeDomain
from brokenray.transforms import (EXCLUDED, INTERPOLATED, Sinogram, assemble_sinogram,
                                  brt_forward, default_angles, default_offsets,
                                  great_circle_integral, periodic_brt, torus_geodesic_integral)
from brokenray.unfolding import DihedralUnfolding


def gaussian_sinogram(center, sigma, angles, offsets):
    """Closed-form parallel-beam data of an isotropic Gaussian."""
    c = np.asarray(center)
    proj = np.cos(angles)[:, None] * c[0] + np.sin(angles)[:, None] * c[1]
    d = offsets[None, :] - proj
    return Sinogram(angles, offsets, sigma * math.sqrt(2 * math.pi) * np.exp(-d * d / (2 * sigma ** 2)))


# -- filtered backprojection -----------------------------------------------------

def test_fbp_zero():
    sino = Sinogram(default_angles(36), default_offsets(1.05, 65), np.zeros((36, 65)))
    rec = fbp_reconstruct(sino, GridSpec(64))
    assert np.max(np.abs(rec.values)) < 1e-12


def test_fbp_disk_interior():
    rho = 0.5
    angles, offsets = default_angles(360), default_offsets(1.05, 257)
    chord = 2 * np.sqrt(np.clip(rho ** 2 - offsets ** 2, 0, None))
    sino = Sinogram(angles, offsets, np.tile(chord, (360, 1)))
    grid = GridSpec(256)
    rec = fbp_reconstruct(sino, grid)
    X, Y = grid.mesh()
    inner = np.hypot(X, Y) < 0.8 * rho
    assert np.all(np.abs(rec.values[inner] - 1.0) < 0.05)
    assert np.all(np.abs(rec.values[np.hypot(X, Y) > 1.2 * rho]) < 0.05)


def test_fbp_gaussian_error():
    angles, offsets = default_angles(360), default_offsets(1.05, 257)
    c, sig = (0.2, -0.1), 0.15
    grid = GridSpec(512)
    rec = fbp_reconstruct(gaussian_sinogram(c, sig, angles, offsets), grid)
    X, Y = grid.mesh()
    truth = np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * sig ** 2))
    assert relative_l2(rec.values, truth) < 0.02


def test_fbp_is_linear(rng):
    angles, offsets = default_angles(60), default_offsets(1.05, 65)
    s1 = Sinogram(angles, offsets, rng.normal(size=(60, 65)))
    s2 = Sinogram(angles, offsets, rng.normal(size=(60, 65)))
    grid = GridSpec(48)
    a, b = 0.7, -2.3
    combo = fbp_reconstruct(Sinogram(angles, offsets, a * s1.values + b * s2.values), grid).values
    sep = a * fbp_reconstruct(s1, grid).values + b * fbp_reconstruct(s2, grid).values
    assert np.max(np.abs(combo - sep)) < 1e-10 * max(1.0, np.max(np.abs(sep)))


def test_fbp_threads_bitwise():
    angles, offsets = default_angles(90), default_offsets(1.05, 65)
    sino = gaussian_sinogram((0.1, 0.1), 0.2, angles, offsets)
    a = fbp_reconstruct(sino, GridSpec(64), threads=1).values
    b = fbp_reconstruct(sino, GridSpec(64), threads=3).values
    assert a.tobytes() == b.tobytes()


def test_fbp_refuses_excluded_cells():
    mask = np.zeros((4, 5), dtype=np.int8)
    mask[1, 2] = EXCLUDED
    sino = Sinogram(default_angles(4), default_offsets(1.0, 5), np.ones((4, 5)), mask)
    with pytest.raises(IncompleteSinogram):
        fbp_reconstruct(sino, GridSpec(16))
    with pytest.raises(ValueError):
        fbp_reconstruct(fill_excluded(sino), GridSpec(16), window="triangle")


def test_fill_excluded_uses_angular_neighbours():
    angles, offsets = default_angles(6), default_offsets(1.0, 5)
    vals = np.arange(30, dtype=float).reshape(6, 5)
    mask = np.zeros((6, 5), dtype=np.int8)
    mask[2, 1] = EXCLUDED
    filled = fill_excluded(Sinogram(angles, offsets, vals, mask))
    assert filled.values[2, 1] == pytest.approx(0.5 * (vals[1, 1] + vals[3, 1]))
    assert filled.mask[2, 1] == INTERPOLATED


def test_fill_excluded_apex_column():
    # a whole excluded column falls back to neighbouring offsets
    angles, offsets = default_angles(4), default_offsets(1.0, 5)
    vals = np.tile(np.array([0.0, 1.0, 0.0, 3.0, 4.0]), (4, 1))
    mask = np.zeros((4, 5), dtype=np.int8)
    mask[:, 2] = EXCLUDED
    filled = fill_excluded(Sinogram(angles, offsets, vals, mask))
    assert np.allclose(filled.values[:, 2], 2.0)


# -- cone reconstructions ------------------------------------------------------------

def test_integer_cone_zero_data():
    u = DihedralUnfolding(ConeDomain(math.pi / 2))
    rec = reconstruct_cone_integer(u, lambda ray: 0.0, GridSpec(64), default_angles(36),
                                   default_offsets(1.05, 33))
    assert np.max(np.abs(rec.field.values)) == 0.0


def test_integer_cone_rejects_general_angle():
    u = DihedralUnfolding(ConeDomain(2 * math.pi / 3))
    with pytest.raises(DegenerateGeometry):
        reconstruct_cone_integer(u, lambda ray: 0.0)


def test_integer_cone_small_run():
    u = DihedralUnfolding(ConeDomain(math.pi / 2))
    f = ScalarField2D.analytic("gaussian", center=(0.4, 0.45), sigma=0.1)
    rec = reconstruct_cone_integer(u, lambda ray: brt_forward(f, ray), GridSpec(128),
                                   default_angles(180), default_offsets(1.05, 129))
    err = rec.error_against(f)
    assert err < 0.08
    assert rec.sector_consistency < 3 * err
    assert rec.info["K"] == 4


def test_cgls_zero_data():
    A = sp.random(30, 10, density=0.5, random_state=1, format="csr")
    res = cgls(A, np.zeros(30))
    assert res.iterations == 1 and np.all(res.x == 0.0)


def test_cgls_residual_is_monotone(rng):
    A = sp.random(300, 120, density=0.05, random_state=2, format="csr")
    b = rng.normal(size=300)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SlowConvergence)
        res = cgls(A, b, max_iter=200, rtol=1e-12)
    r = np.array(res.residuals)
    assert np.all(r[1:] <= r[:-1] * (1 + 1e-12))


def test_cgls_solves_consistent_system(rng):
    A = sp.csr_matrix(rng.normal(size=(40, 12)))
    x = rng.normal(size=12)
    res = cgls(A, A @ x, rtol=1e-12)
    assert res.converged
    assert np.allclose(res.x, x, atol=1e-8)


def test_cgls_stagnation_warns(rng):
    # an inconsistent system: the residual settles at the least-squares floor
    A = sp.csr_matrix(rng.normal(size=(200, 20)))
    b = rng.normal(size=200)
    with pytest.warns(SlowConvergence):
        res = cgls(A, b, max_iter=500, rtol=1e-12, stall_window=5)
    assert res.stagnated and len(res.x) == 20


def test_general_cone_zero_data():
    u = DihedralUnfolding(ConeDomain(2 * math.pi / 3))
    rec = reconstruct_cone_general(u, lambda ray: 0.0, GridSpec(32), default_angles(30),
                                   default_offsets(1.05, 33))
    assert rec.info["iterations"] == 1
    assert np.all(rec.field.values == 0.0)


def test_cgls_agrees_with_fbp_on_integer_data():
    u = DihedralUnfolding(ConeDomain(math.pi / 2))
    f = ScalarField2D.analytic("gaussian", center=(0.4, 0.45), sigma=0.12)
    oracle = lambda ray: brt_forward(f, ray)  # noqa: E731
    grid = GridSpec(96)
    sino = assemble_sinogram(u, oracle, default_angles(180), default_offsets(1.05, 129))
    fbp = reconstruct_cone_integer(u, oracle, grid, sinogram=sino)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SlowConvergence)
        ls = reconstruct_cone_general(u, oracle, grid, sinogram=sino, both_orientations=False)
    assert relative_l2(ls.field.values, fbp.field.values, fbp.mask) < 0.05


# -- torus / cube ------------------------------------------------------------------------

def test_fourier_constant():
    c = 1.3
    table = torus_fourier_inversion(2, lambda k, x0: 2 * c * np.linalg.norm(k), 3)
    assert table[(0, 0)] == pytest.approx(c, abs=1e-10)
    assert max(abs(v) for m, v in table.coeffs.items() if any(m)) < 1e-10


def test_fourier_single_cosine():
    f = lambda p: np.cos(np.pi * p @ np.array([1.0, 2.0]))  # noqa: E731
    table = torus_fourier_inversion(2, lambda k, x0: torus_geodesic_integral(f, k, x0, 256), 3)
    assert table[(1, 2)] == pytest.approx(0.5, abs=1e-9)
    assert table[(-1, -2)] == pytest.approx(0.5, abs=1e-9)
    rest = [abs(v) for m, v in table.coeffs.items() if m not in ((1, 2), (-1, -2))]
    assert max(rest) < 1e-9


def test_fourier_separable_3d():
    f = TorusField.separable([[0.5, 1.0, 0.0, 0.3], [1.0, 0.0, -0.4], [0.2, 0.0, 0.0, 0.0, 1.0]])
    table = torus_fourier_inversion(3, lambda k, x0: torus_geodesic_integral(f, k, x0, 256), 4)
    exact = f.fourier_coeffs()
    worst = max(abs(table[m] - exact.get(m, 0.0)) for m in table.coeffs)
    assert worst < 1e-8


def test_cube_zero_and_constant():
    zero = reconstruct_cube_periodic(2, lambda orbit: 0.0, 2)
    pts = np.random.default_rng(0).uniform(0, 1, (20, 2))
    assert np.all(zero(pts) == 0.0)
    const = reconstruct_cube_periodic(2, lambda orbit: 2.5 * orbit.total_length, 2)
    assert np.allclose(const(pts), 2.5, atol=1e-10)


def test_cube_random_field():
    f = TorusField.random(2, 5, seed=4)
    rec = reconstruct_cube_periodic(2, lambda orbit: periodic_brt(f, orbit, density=256), 5)
    pts = np.random.default_rng(1).uniform(0, 1, (400, 2))
    assert np.max(np.abs(rec(pts) - f(pts))) < 1e-6
    assert rec.table.max_conjugate_asymmetry() < 1e-9
    assert rec.table.max_flip_asymmetry() < 1e-8


@pytest.mark.parametrize("m", [(1, 2), (3, -1, 2), (0, 0, 5), (2, 4, 6), (1, 1, 1)])
def test_perpendicular_k(m):
    k = perpendicular_k(m)
    assert int(np.dot(k, m)) == 0
    assert math.gcd(*[abs(v) for v in k]) == 1
    assert next(v for v in k if v) > 0
    assert perpendicular_k(m) == k


def test_perpendicular_k_examples():
    assert perpendicular_k((1, 2)) == (2, -1)
    assert perpendicular_k((2, 4)) == (2, -1)
    assert perpendicular_k((1, 1, 1)) == (0, 1, -1)
    with pytest.raises(ValueError):
        perpendicular_k((0, 0))


def test_lattice_perp_basis():
    k = np.array([1, 2, 3])
    B = lattice_perp_basis(k)
    assert np.all(B @ k == 0)
    assert round(abs(np.linalg.norm(np.cross(*B)))) == round(np.linalg.norm(k))


# -- sphere / octant ---------------------------------------------------------------------

def test_legendre_at_zero_matches_scipy():
    for l in range(17):
        assert legendre_at_zero(l) == pytest.approx(float(eval_legendre(l, 0.0)), abs=1e-15)


def test_funk_eigenvalues():
    assert funk_eigenvalue(0) == pytest.approx(2 * math.pi, abs=1e-12)
    assert funk_eigenvalue(2) == pytest.approx(-math.pi, abs=1e-12)
    assert funk_eigenvalue(4) == pytest.approx(3 * math.pi / 4, abs=1e-12)
    for l in range(0, 17, 2):
        assert abs(funk_eigenvalue(l) - 2 * math.pi * eval_legendre(l, 0.0)) < 1e-12


def test_funk_eigenvalues_by_quadrature():
    # the great-circle transform of Y_l0 at the pole is lambda_l Y_l0(pole)
    pole = np.array([[0.0, 0.0, 1.0]])
    for l in (2, 4, 6):
        got = great_circle_integral(lambda p: cartesian_sph_harm(l, 0, p), pole[0], density=256)
        assert got == pytest.approx(funk_eigenvalue(l) * cartesian_sph_harm(l, 0, pole)[0],
                                    abs=1e-12)


def test_sphere_quadrature_integrates_band():
    pts, w = sphere_quadrature(6)
    assert w.sum() == pytest.approx(4 * math.pi)
    for l in range(1, 8):
        assert abs(cartesian_sph_harm(l, 0, pts) @ w) < 1e-12


def test_funk_constant():
    table = funk_inversion(lambda omega: 2 * math.pi, 4)
    assert table[(0, 0)] == pytest.approx(math.sqrt(4 * math.pi), abs=1e-12)
    assert np.allclose(table.evaluate(np.eye(3)), 1.0, atol=1e-12)


def test_funk_band_limited_even(rng):
    terms = [(l, m, float(rng.normal())) for l in range(0, 9, 2) for m in range(-l, l + 1)]
    g = SphereField.harmonics(terms)
    table = funk_inversion(lambda omega: great_circle_integral(g, omega, density=128), 8)
    assert max(abs(table[(l, m)] - c) for l, m, c in terms) < 1e-6
    assert table.odd_energy < 1e-10


def test_funk_rejects_odd_data():
    with pytest.raises(NonEvenData):
        funk_inversion(lambda omega: float(omega[2]), 4)


def test_octant_zero():
    rec = reconstruct_octant_periodic(lambda orbit: 0.0, 4)
    assert np.all(rec(np.eye(3)) == 0.0)


def test_octant_even_polynomial(rng):
    g = SphereField.random_even_polynomial(3, seed=1)
    rec = reconstruct_octant_periodic(lambda orbit: periodic_brt(g, orbit, density=128), 6)
    v = np.abs(rng.normal(size=(300, 3)))
    v /= np.linalg.norm(v, axis=1)[:, None]
    assert np.max(np.abs(rec(v) - g(v))) < 1e-5
    assert rec.flip_asymmetry < 1e-9


def test_octant_odd_extension_is_rejected():
    odd = SphereField.random_even_polynomial(2, seed=1).odd_extension()
    with pytest.raises(NonEvenData):
        reconstruct_octant_periodic(lambda orbit: periodic_brt(odd, orbit, unfolded=True), 4)


def test_octant_harmonic_pair():
    # Y20 + Y44 is even and invariant under the coordinate reflections
    g = SphereField.harmonics([(2, 0, 1.0), (4, 4, 0.5)])
    rec = reconstruct_octant_periodic(lambda orbit: periodic_brt(g, orbit, density=128), 4)
    assert rec.table[(2, 0)] == pytest.approx(1.0, abs=1e-8)
    assert rec.table[(4, 4)] == pytest.approx(0.5, abs=1e-8)
