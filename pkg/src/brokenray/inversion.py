"""Reconstruction paths.

* filtered backprojection for cones whose reflected copies tile the plane,
* CGLS on a ray-pixel matrix for general opening angles,
* Fourier inversion of closed-geodesic data on the period-2 torus (cube),
* Funk inversion on the sphere (octant).
"""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import binary_dilation
from scipy.special import sph_harm_y

from .errors import (DegenerateGeometry, IncompleteSinogram, NonEvenData, SlowConvergence)
from .fields import DEFAULT_DENSITY, ScalarField2D
from .planar import BrokenRay
from .transforms import (EXCLUDED, INTERPOLATED, Sinogram, assemble_sinogram, default_angles,
                         default_offsets)
from .unfolding import (DihedralUnfolding, OctantOrbit, fold_points, mirror_ray,
                        mirrored_unfolding, octant_orbit, torus_geodesic_to_cube_orbit)

BACKPROJECT_CHUNK = 16


@dataclass(frozen=True)
class GridSpec:
    """n x n pixels covering [-extent, extent]^2; pixel centres at -E + (i + 1/2) 2E/n."""

    n: int = 512
    extent: float = 1.05

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def centers(self) -> np.ndarray:
        return -self.extent + (np.arange(self.n) + 0.5) * self.spacing

    def mesh(self):
        c = self.centers
        return np.meshgrid(c, c)

    def as_field(self, values, name="reconstruction") -> ScalarField2D:
        c0 = float(self.centers[0])
        return ScalarField2D.from_grid(values, (c0, c0), self.spacing, name=name)


# ---------------------------------------------------------------------------
# filtered backprojection

def fill_excluded(sino: Sinogram) -> Sinogram:
    """Fill excluded cells by linear interpolation and flag them as interpolated.

    Angular neighbours at the same offset are used when both are measured
    (the row after the last angle is the first row with s -> -s).
    Otherwise the two nearest measured offsets in the same row are used;
    this covers the apex lines, which occupy the whole s = 0 column.
    """
    out = sino.copy()
    vals, mask = out.values, out.mask
    na, ns = vals.shape
    todo = np.argwhere(sino.mask == EXCLUDED)
    for i, j in todo:
        prev_row = (i - 1, j) if i > 0 else (na - 1, ns - 1 - j)
        next_row = (i + 1, j) if i < na - 1 else (0, ns - 1 - j)
        flip_ok = np.isclose(sino.offsets[ns - 1 - j], -sino.offsets[j])
        ok_prev = (i > 0 or flip_ok) and sino.mask[prev_row] != EXCLUDED
        ok_next = (i < na - 1 or flip_ok) and sino.mask[next_row] != EXCLUDED
        if ok_prev and ok_next:
            vals[i, j] = 0.5 * (sino.values[prev_row] + sino.values[next_row])
        else:
            row_ok = np.nonzero(sino.mask[i] != EXCLUDED)[0]
            left = row_ok[row_ok < j]
            right = row_ok[row_ok > j]
            if len(left) == 0 or len(right) == 0:
                raise IncompleteSinogram(f"cannot interpolate excluded cell ({i}, {j})")
            a, b = left[-1], right[0]
            w = (j - a) / (b - a)
            vals[i, j] = (1 - w) * sino.values[i, a] + w * sino.values[i, b]
        mask[i, j] = INTERPOLATED
    return out


def ramp_filter(n_offsets: int, ds: float, window: str | None = "hann") -> np.ndarray:
    """Frequency response of the band-limited ramp (Ram-Lak) filter.

    Built from the spatial kernel (1/(4 ds^2) at 0, -1/(k pi ds)^2 at odd k)
    on a zero-padded grid of at least twice the number of offsets.
    """
    size = max(64, int(2 ** math.ceil(math.log2(2 * n_offsets))))
    k = np.concatenate((np.arange(0, size // 2 + 1), np.arange(-size // 2 + 1, 0)))
    h = np.zeros(size)
    h[0] = 0.25 / ds ** 2
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd] * ds) ** 2
    H = np.real(np.fft.fft(h)) * ds
    if window == "hann":
        H *= 0.5 * (1.0 + np.cos(2.0 * np.pi * np.fft.fftfreq(size)))
    elif window not in (None, "none", "ramlak"):
        raise ValueError(f"unknown filter window {window!r}")
    return H


def filter_sinogram(values: np.ndarray, ds: float, window: str | None = "hann") -> np.ndarray:
    ns = values.shape[1]
    H = ramp_filter(ns, ds, window)
    padded = np.zeros((values.shape[0], len(H)))
    padded[:, :ns] = values
    return np.real(np.fft.ifft(np.fft.fft(padded, axis=1) * H, axis=1))[:, :ns]


def _backproject_chunk(q, angles, offsets, X, Y):
    acc = np.zeros(X.shape)
    for row, phi in zip(q, angles):
        t = X * math.cos(phi) + Y * math.sin(phi)
        acc += np.interp(t, offsets, row, left=0.0, right=0.0)
    return acc


def fbp_reconstruct(sino: Sinogram, grid: GridSpec = GridSpec(), window: str | None = "hann",
                    threads: int = 1) -> ScalarField2D:
    """Filtered backprojection of a parallel-beam sinogram on [0, pi).

    Angles are processed in fixed chunks whose partial images are summed in
    chunk order, so the result does not depend on ``threads``.  Pixels
    farther from the origin than the largest offset are outside the field
    of view and set to zero.
    """
    if np.any(sino.mask == EXCLUDED):
        raise IncompleteSinogram("sinogram has excluded cells; call fill_excluded first")
    q = filter_sinogram(sino.values, sino.ds, window)
    X, Y = grid.mesh()
    starts = range(0, len(sino.angles), BACKPROJECT_CHUNK)

    def work(a):
        b = a + BACKPROJECT_CHUNK
        return _backproject_chunk(q[a:b], sino.angles[a:b], sino.offsets, X, Y)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(a) for a in starts]
    img = np.zeros(X.shape)
    for part in parts:
        img += part
    img *= math.pi / len(sino.angles)
    img[np.hypot(X, Y) > float(np.max(np.abs(sino.offsets)))] = 0.0
    return grid.as_field(img, name="fbp")


# ---------------------------------------------------------------------------
# cone reconstructions

def cone_mask(u: DihedralUnfolding, grid: GridSpec) -> np.ndarray:
    """Pixels whose centres lie in the (open) cone."""
    X, Y = grid.mesh()
    pts = np.column_stack((X.ravel(), Y.ravel()))
    return u.source.contains(pts).reshape(X.shape)


def relative_l2(rec, truth, mask=None) -> float:
    rec = np.asarray(rec, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if mask is not None:
        rec, truth = rec[mask], truth[mask]
    den = float(np.linalg.norm(truth))
    num = float(np.linalg.norm(rec - truth))
    return num / den if den > 0 else num


@dataclass
class ConeReconstruction:
    field: ScalarField2D
    mask: np.ndarray
    sinogram: Sinogram | None = None
    unfolded: ScalarField2D | None = None
    sector_consistency: float | None = None
    residuals: list | None = None
    info: dict | None = None

    def error_against(self, f: ScalarField2D) -> float:
        X, Y = self.field.grid_points()
        return relative_l2(self.field.values, f(X, Y), self.mask)


def reconstruct_cone_integer(u: DihedralUnfolding, brt_oracle: Callable[[BrokenRay], float],
                             grid: GridSpec = GridSpec(), angles=None, offsets=None,
                             window: str | None = "hann", threads: int = 1,
                             sinogram: Sinogram | None = None) -> ConeReconstruction:
    """Recover f on a cone of angle pi/m from its broken ray transform.

    The Radon data of the folded field are assembled from broken rays, the
    apex column is interpolated, FBP gives the folded field on the plane,
    and the K sector pullbacks are averaged back onto the cone.
    ``sector_consistency`` is max_i ||pull_i - mean|| / ||mean|| over cone pixels.
    """
    if not u.is_integer:
        raise DegenerateGeometry("FBP path needs an opening angle pi/m")
    if sinogram is None:
        sinogram = assemble_sinogram(u, brt_oracle, angles, offsets, threads=threads)
    filled = fill_excluded(sinogram)
    unfolded = fbp_reconstruct(filled, grid, window, threads)
    mask = cone_mask(u, grid)
    X, Y = grid.mesh()
    pts = np.column_stack((X[mask], Y[mask]))
    pulls = np.array([unfolded.points(u.section(i, pts)) for i in range(u.K)])
    mean = pulls.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    dev = max(float(np.linalg.norm(p - mean)) for p in pulls)
    consistency = dev / norm if norm > 0 else dev
    img = np.zeros(X.shape)
    img[mask] = mean
    return ConeReconstruction(grid.as_field(img, name="cone"), mask, sinogram, unfolded,
                              consistency, None, {"K": u.K, "excluded": sinogram.excluded_fraction})


def siddon_matrix(lines, grid: GridSpec) -> sp.csr_matrix:
    """Intersection lengths of segments with the pixels of ``grid``.

    ``lines`` is a sequence of (p0, p1) segment end points.  Row r holds the
    length of segment r inside each pixel (row-major pixel index iy * n + ix).
    """
    n, E, h = grid.n, grid.extent, grid.spacing
    edges = -E + h * np.arange(n + 1)
    rows, cols, data = [], [], []
    for r, (p0, p1) in enumerate(lines):
        p0 = np.asarray(p0, dtype=float)
        d = np.asarray(p1, dtype=float) - p0
        L = float(np.hypot(*d))
        if L == 0.0:
            continue
        # clip to the grid box
        lo, hi = 0.0, 1.0
        for ax in (0, 1):
            if d[ax] == 0.0:
                if not (-E <= p0[ax] <= E):
                    lo, hi = 1.0, 0.0
                continue
            a, b = (-E - p0[ax]) / d[ax], (E - p0[ax]) / d[ax]
            lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
        if hi <= lo:
            continue
        ts = [np.array([lo, hi])]
        for ax in (0, 1):
            if d[ax] != 0.0:
                t = (edges - p0[ax]) / d[ax]
                ts.append(t[(t > lo) & (t < hi)])
        t = np.unique(np.concatenate(ts))
        mid = 0.5 * (t[1:] + t[:-1])
        seg = np.diff(t) * L
        px = p0[0] + mid * d[0]
        py = p0[1] + mid * d[1]
        ix = np.clip(((px + E) / h).astype(int), 0, n - 1)
        iy = np.clip(((py + E) / h).astype(int), 0, n - 1)
        keep = seg > 0
        rows.append(np.full(int(keep.sum()), r))
        cols.append(iy[keep] * n + ix[keep])
        data.append(seg[keep])
    if rows:
        rows, cols, data = map(np.concatenate, (rows, cols, data))
    A = sp.coo_matrix((data, (rows, cols)), shape=(len(lines), n * n))
    return A.tocsr()


def fold_interpolation_matrix(u: DihedralUnfolding, grid: GridSpec, unknown_mask: np.ndarray,
                              target_grid: GridSpec, target_mask: np.ndarray,
                              post: np.ndarray | None = None) -> sp.csr_matrix:
    """Bilinear interpolation of cone-pixel unknowns at folded target pixel centres.

    Rows: pixels of ``target_grid`` selected by ``target_mask`` (row-major);
    columns: pixels of ``grid`` selected by ``unknown_mask`` (row-major).
    A target whose interpolation stencil leaves the unknowns uses only the
    stencil points that are unknowns.  ``post`` is an optional linear map
    applied to the folded points before interpolation.
    """
    n, h = grid.n, grid.spacing
    c0 = grid.centers[0]
    col_index = -np.ones(n * n, dtype=int)
    col_index[np.flatnonzero(unknown_mask)] = np.arange(int(unknown_mask.sum()))
    X, Y = target_grid.mesh()
    pts = np.column_stack((X[target_mask], Y[target_mask]))
    _, folded = fold_points(u, pts)
    if post is not None:
        folded = folded @ np.asarray(post).T
    fx = (folded[:, 0] - c0) / h
    fy = (folded[:, 1] - c0) / h
    ix = np.clip(np.floor(fx).astype(int), 0, n - 2)
    iy = np.clip(np.floor(fy).astype(int), 0, n - 2)
    tx, ty = fx - ix, fy - iy
    rows, cols, data = [], [], []
    r = np.arange(len(pts))
    for dx, dy, w in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                      (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        c = col_index[(iy + dy) * n + ix + dx]
        ok = (c >= 0) & (w != 0)
        rows.append(r[ok])
        cols.append(c[ok])
        data.append(w[ok])
    rows, cols, data = map(np.concatenate, (rows, cols, data))
    return sp.coo_matrix((data, (rows, cols)),
                         shape=(len(pts), int(unknown_mask.sum()))).tocsr()


@dataclass
class CGLSResult:
    x: np.ndarray
    residuals: list
    iterations: int
    converged: bool
    stagnated: bool


def cgls(A, b, max_iter: int = 500, rtol: float = 1e-6, stall_window: int = 50,
         stall_ratio: float = 1e-3) -> CGLSResult:
    """Conjugate gradients on the normal equations A^T A x = A^T b.

    Stops when ||r|| / ||b|| < rtol, after ``max_iter`` iterations, or when
    the residual fell by less than ``stall_ratio`` (relative) over the last
    ``stall_window`` iterations; the last case issues SlowConvergence.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros(A.shape[1])
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGLSResult(x, [0.0], 1, True, False)
    r = b.copy()
    s = A.T @ r
    p = s.copy()
    gamma = float(s @ s)
    res = [bnorm]
    converged = stagnated = False
    it = 0
    for it in range(1, max_iter + 1):
        q = A @ p
        qq = float(q @ q)
        if qq == 0.0 or gamma == 0.0:
            converged = True
            break
        a = gamma / qq
        x += a * p
        r -= a * q
        s = A.T @ r
        gamma_new = float(s @ s)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        res.append(float(np.linalg.norm(r)))
        if res[-1] / bnorm < rtol:
            converged = True
            break
        if it >= stall_window and res[-1 - stall_window] - res[-1] < stall_ratio * res[-1 - stall_window]:
            stagnated = True
            warnings.warn(f"CGLS stagnated after {it} iterations (relative residual "
                          f"{res[-1] / bnorm:.3e})", SlowConvergence, stacklevel=2)
            break
    return CGLSResult(x, res, it, converged, stagnated)


def _line_rows(u: DihedralUnfolding, sinogram: Sinogram, grid: GridSpec, unknown: np.ndarray,
               oversample: int, post: np.ndarray | None = None):
    """Forward-model rows and data for the measured cells of one sinogram."""
    ii, jj = np.nonzero(sinogram.mask != EXCLUDED)
    E = grid.extent
    segs = []
    for i, j in zip(ii, jj):
        phi, s = sinogram.angles[i], sinogram.offsets[j]
        nrm = np.array([math.cos(phi), math.sin(phi)])
        d = np.array([-math.sin(phi), math.cos(phi)])
        segs.append((s * nrm - 2 * E * d, s * nrm + 2 * E * d))
    # the folded image is projected on a finer grid than the unknowns
    fine = GridSpec(grid.n * oversample, grid.extent)
    FX, FY = fine.mesh()
    fpts = np.column_stack((FX.ravel(), FY.ravel()))
    sector, folded = fold_points(u, fpts)
    r = np.hypot(fpts[:, 0], fpts[:, 1])
    fth = np.arctan2(folded[:, 1], folded[:, 0]) % (2 * np.pi)
    fth = np.where(fth > u.alpha, 0.0, fth)
    target = ((sector >= 0) & (r < u.source.h(fth))).reshape(FX.shape)
    S = siddon_matrix(segs, fine)[:, np.flatnonzero(target)]
    W = fold_interpolation_matrix(u, grid, unknown, fine, target, post)
    return (S @ W).tocsr(), sinogram.values[ii, jj]


def reconstruct_cone_general(u: DihedralUnfolding, brt_oracle: Callable[[BrokenRay], float],
                             grid: GridSpec = GridSpec(128), angles=None, offsets=None,
                             max_iter: int = 500, rtol: float = 1e-6, threads: int = 1,
                             sinogram: Sinogram | None = None, support_radius: float = 0.0,
                             oversample: int = 4, both_orientations: bool = True,
                             condition: bool = False) -> ConeReconstruction:
    """Least-squares recovery of f on a cone of any angle from the measured lines.

    Only lines that avoid the apex and the filler cone are used.  The
    unknowns are the grid pixels within two pixels of the cone; the forward
    model is (ray-pixel lengths on the unfolded region, sampled
    ``oversample`` times finer than the unknowns) times (bilinear
    interpolation of the unknowns at the folded fine-pixel centres).

    ``support_radius`` > 0 restricts the unknowns to r >= support_radius,
    a known-support prior.  ``both_orientations`` also uses the copies
    glued in the clockwise direction (the mirror image of the cone across
    its bisector), which brings in the broken rays whose first reflection
    is on the edge at angle 0.
    """
    if angles is None:
        angles = default_angles(360)
    if offsets is None:
        offsets = default_offsets(1.05 * u.source.h.hmax, 257)
    if sinogram is None:
        sinogram = assemble_sinogram(u, brt_oracle, angles, offsets, threads=threads)
    X, Y = grid.mesh()
    pts = np.column_stack((X.ravel(), Y.ravel()))
    inside = cone_mask(u, grid)
    unknown = u.source.contains(pts, tol=0.0).reshape(X.shape)
    if support_radius > 0.0:
        unknown &= (np.hypot(X, Y) >= support_radius)
    # dilate so the bilinear stencils near the boundary resolve
    unknown = binary_dilation(unknown, structure=np.ones((3, 3), dtype=bool), iterations=2)
    A, b = _line_rows(u, sinogram, grid, unknown, oversample)
    sinograms = [sinogram]
    if both_orientations:
        um, sigma = mirrored_unfolding(u)
        sino_m = assemble_sinogram(um, lambda ray: brt_oracle(mirror_ray(ray, sigma)),
                                   sinogram.angles, sinogram.offsets, threads=threads)
        Am, bm = _line_rows(um, sino_m, grid, unknown, oversample, post=sigma)
        A = sp.vstack([A, Am]).tocsr()
        b = np.concatenate((b, bm))
        sinograms.append(sino_m)
    sol = cgls(A, b, max_iter=max_iter, rtol=rtol)
    img = np.zeros(X.shape)
    full = np.zeros(X.size)
    full[np.flatnonzero(unknown)] = sol.x
    img[inside] = full.reshape(X.shape)[inside]
    info = {"iterations": sol.iterations, "converged": sol.converged,
            "stagnated": sol.stagnated, "unknowns": int(unknown.sum()),
            "measured_lines": int(len(b)), "excluded": sinogram.excluded_fraction,
            "orientations": len(sinograms)}
    if condition:
        info["condition_number"] = condition_estimate(A)
    return ConeReconstruction(grid.as_field(img, name="cone"), inside, sinogram, None, None,
                              sol.residuals, info)


def condition_estimate(A, max_unknowns: int = 6000) -> float | None:
    """Ratio of extreme singular values of A (dense SVD; None when too large)."""
    if A.shape[1] > max_unknowns:
        return None
    sv = np.linalg.svd(A.toarray(), compute_uv=False)
    return float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf


# ---------------------------------------------------------------------------
# cube / torus Fourier inversion

@dataclass
class FourierTable:
    """Coefficients c_m of f(x) = sum c_m exp(i pi m . x) on the period-2 torus."""

    n: int
    band: int
    coeffs: dict = field(default_factory=dict)

    def __getitem__(self, m) -> complex:
        return self.coeffs.get(tuple(int(v) for v in m), 0j)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x), dtype=complex)
        for m, c in sorted(self.coeffs.items()):
            out += c * np.exp(1j * np.pi * (x @ np.array(m, dtype=float)))
        return out.real

    def max_conjugate_asymmetry(self) -> float:
        return max((abs(c - np.conj(self[tuple(-v for v in m)])) for m, c in self.coeffs.items()),
                   default=0.0)

    def max_flip_asymmetry(self) -> float:
        """Largest change of a coefficient under a sign flip of one frequency component."""
        worst = 0.0
        for m, c in self.coeffs.items():
            for i in range(self.n):
                mm = list(m)
                mm[i] = -mm[i]
                worst = max(worst, abs(c - self[tuple(mm)]))
        return worst

    def to_rows(self):
        return [(m, c) for m, c in sorted(self.coeffs.items())]


def _primitive(v) -> np.ndarray:
    v = np.asarray(v, dtype=int)
    g = math.gcd(*[abs(int(t)) for t in v])
    v = v // g
    nz = np.flatnonzero(v)
    if v[nz[0]] < 0:
        v = -v
    return v


def perpendicular_k(m) -> tuple:
    """Canonical primitive k with k . m = 0.

    n = 2: (-m2, m1) divided by the gcd.  n = 3: among primitive solutions
    of minimal Euclidean norm (sign fixed so the first nonzero entry is
    positive), the lexicographically smallest.
    """
    m = np.asarray(m, dtype=int)
    n = len(m)
    if not np.any(m):
        raise ValueError("m must be nonzero")
    if n == 2:
        return tuple(int(v) for v in _primitive([-m[1], m[0]]))
    R = 1
    while True:
        best = None
        for k in itertools.product(range(-R, R + 1), repeat=n):
            if not any(k) or sum(a * b for a, b in zip(k, m)) != 0:
                continue
            if math.gcd(*[abs(t) for t in k]) != 1:
                continue
            k = tuple(int(v) for v in _primitive(k))
            key = (sum(t * t for t in k), k)
            if best is None or key < best:
                best = key
        # any vector of norm^2 <= R^2 lies inside the searched cube
        if best is not None and best[0] <= R * R:
            return best[1]
        R += 1


def lattice_perp_basis(k) -> np.ndarray:
    """Rows form a basis of {m in Z^n : m . k = 0} (Lagrange-reduced for n = 3)."""
    k = np.asarray(k, dtype=int)
    n = len(k)
    U = np.eye(n, dtype=np.int64)
    v = k.astype(np.int64).copy()
    # unimodular column operations reducing v to (g, 0, ..., 0)
    for j in range(1, n):
        while v[j] != 0:
            q = v[0] // v[j]
            v[0] -= q * v[j]
            U[:, 0] -= q * U[:, j]
            v[0], v[j] = v[j], v[0]
            U[:, [0, j]] = U[:, [j, 0]]
    B = U[:, 1:].T.copy()
    if len(B) == 2:
        b1, b2 = B
        while True:
            if b1 @ b1 > b2 @ b2:
                b1, b2 = b2, b1
            mu = int(round((b1 @ b2) / (b1 @ b1)))
            if mu == 0:
                break
            b2 = b2 - mu * b1
        B = np.array([b1, b2])
    return B


# a fixed generic shift keeps the sampled orbits away from cube edges
_GENERIC_BASE = np.array([0.1234567 * math.sqrt(2), 0.0765432 * math.sqrt(3),
                          0.1357911 * math.sqrt(5)])


def torus_fourier_inversion(n: int, data: Callable[[np.ndarray, np.ndarray], float],
                            band: int) -> FourierTable:
    """Recover the Fourier coefficients of a band-limited torus field from geodesic integrals.

    ``data(k, x0)`` is the unit-speed integral over x0 + 2 t k, t in [0, 1].
    For a geodesic family with fixed k the data, as a function of x0, are
    2 |k| sum_{m . k = 0} c_m exp(i pi m . x0).  Sampling x0 on a grid
    spanned by the dual basis of k's perpendicular lattice turns this into
    a discrete Fourier series.
    """
    if n not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    band = int(band)
    freqs = [m for m in itertools.product(range(-band, band + 1), repeat=n)]
    groups: dict[tuple, list] = {}
    for m in freqs:
        k = perpendicular_k(m) if any(m) else tuple([1] + [0] * (n - 1))
        groups.setdefault(k, []).append(m)
    table = FourierTable(n, band)
    base = _GENERIC_BASE[:n]
    F = np.array(freqs)
    for k, wanted in sorted(groups.items()):
        kv = np.array(k)
        B = lattice_perp_basis(kv).astype(float)
        G = B @ B.T
        V = np.linalg.solve(G, B).T        # columns: dual vectors
        inband = F[F @ kv == 0]
        coords = np.rint(inband @ V).astype(int)
        P = np.abs(coords).max(axis=0)
        N = 2 * P + 1
        samples = np.zeros(tuple(N))
        for idx in itertools.product(*[range(Ni) for Ni in N]):
            tau = 2.0 * np.array(idx) / N
            samples[idx] = data(kv, base + V @ tau)
        spec = np.fft.fftn(samples) / samples.size
        length = 2.0 * float(np.linalg.norm(kv))
        for m in wanted:
            j = np.rint(np.array(m, dtype=float) @ V).astype(int)
            val = spec[tuple(j % N)]
            table.coeffs[tuple(m)] = complex(val / (length * np.exp(1j * np.pi * (np.array(m) @ base))))
    return table


@dataclass
class CubeReconstruction:
    table: FourierTable

    def __call__(self, x) -> np.ndarray:
        """f = f~ on the fundamental cube [0, 1]^n."""
        return self.table.evaluate(x)


def cube_orbit_data(n: int, orbit_data: Callable[[BrokenRay], float]):
    """Adapt cube-orbit measurements to the torus (k, x0) interface."""
    def data(k, x0):
        orbit = torus_geodesic_to_cube_orbit(n, k, np.mod(x0, 2.0))
        return orbit_data(orbit)
    return data


def reconstruct_cube_periodic(n: int, orbit_data: Callable[[BrokenRay], float],
                              band: int) -> CubeReconstruction:
    """Invert the periodic broken ray transform of the unit cube.

    Every cube orbit queried is the fold of a torus geodesic, and its
    integral equals the geodesic integral of the folded field.
    """
    return CubeReconstruction(torus_fourier_inversion(n, cube_orbit_data(n, orbit_data), band))


# ---------------------------------------------------------------------------
# sphere / octant: Funk inversion

def legendre_at_zero(l: int) -> float:
    """P_l(0): zero for odd l, (-1)^k binom(2k, k) / 4^k for l = 2k."""
    if l < 0:
        raise ValueError("degree must be non-negative")
    if l % 2:
        return 0.0
    k = l // 2
    return (-1) ** k * math.comb(2 * k, k) / 4 ** k


def funk_eigenvalue(l: int) -> float:
    """Eigenvalue of the great-circle transform on degree-l harmonics: 2 pi P_l(0)."""
    return 2.0 * math.pi * legendre_at_zero(l)


def real_sph_harm(l: int, m: int, polar, azimuth) -> np.ndarray:
    """Orthonormal real spherical harmonic Y_lm."""
    if m == 0:
        return np.real(sph_harm_y(l, 0, polar, azimuth))
    Y = sph_harm_y(l, abs(m), polar, azimuth)
    if m > 0:
        return math.sqrt(2) * (-1) ** m * np.real(Y)
    return math.sqrt(2) * (-1) ** m * np.imag(Y)


def cartesian_sph_harm(l: int, m: int, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    polar = np.arccos(np.clip(pts[..., 2], -1.0, 1.0))
    azimuth = np.arctan2(pts[..., 1], pts[..., 0])
    return real_sph_harm(l, m, polar, azimuth)


@dataclass
class HarmonicTable:
    """Real spherical-harmonic coefficients (l, m) -> c_lm."""

    lmax: int
    coeffs: dict = field(default_factory=dict)
    odd_energy: float = 0.0

    def __getitem__(self, lm) -> float:
        return self.coeffs.get(tuple(lm), 0.0)

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for (l, m), c in sorted(self.coeffs.items()):
            if c != 0.0:
                out += c * cartesian_sph_harm(l, m, pts)
        return out


def sphere_quadrature(lmax: int):
    """Product Gauss-Legendre (in cos polar) x uniform (azimuth) rule.

    Exact for polynomials of degree <= 2 lmax + 2 on the sphere.
    """
    z, wz = np.polynomial.legendre.leggauss(lmax + 2)
    nphi = 2 * lmax + 3
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    Z, PHI = np.meshgrid(z, phi, indexing="ij")
    W = np.outer(wz, np.full(nphi, 2.0 * np.pi / nphi))
    s = np.sqrt(1.0 - Z ** 2)
    pts = np.stack((s * np.cos(PHI), s * np.sin(PHI), Z), axis=-1).reshape(-1, 3)
    return pts, W.ravel()


def funk_inversion(circle_data: Callable[[np.ndarray], float], lmax: int,
                   tol: float = 1e-8) -> HarmonicTable:
    """Recover an even band-limited field on S^2 from its great-circle integrals.

    ``circle_data(omega)`` is the integral over the unit-speed great circle
    orthogonal to ``omega``.  The data are expanded in real spherical
    harmonics by quadrature; even-degree coefficients are divided by the
    eigenvalues 2 pi P_l(0).  Odd-degree data energy is reported in
    ``odd_energy`` (relative) and must stay below ``tol``.
    """
    pts, w = sphere_quadrature(lmax)
    g = np.array([circle_data(p) for p in pts], dtype=float)
    table = HarmonicTable(lmax)
    odd = even = 0.0
    for l in range(lmax + 1):
        for m in range(-l, l + 1):
            d = float((g * cartesian_sph_harm(l, m, pts)) @ w)
            if l % 2:
                odd += d * d
            else:
                even += d * d
                table.coeffs[(l, m)] = d / funk_eigenvalue(l)
    total = odd + even
    table.odd_energy = math.sqrt(odd / total) if total > 0 else 0.0
    if table.odd_energy > tol:
        raise NonEvenData(f"odd-degree data energy {table.odd_energy:.3e} exceeds {tol:g}")
    for l in range(1, lmax + 1, 2):
        for m in range(-l, l + 1):
            table.coeffs[(l, m)] = 0.0
    return table


_SIGN_FLIPS = (np.array([-1.0, 1.0, 1.0]), np.array([1.0, -1.0, 1.0]), np.array([1.0, 1.0, -1.0]))


@dataclass
class OctantReconstruction:
    table: HarmonicTable
    flip_asymmetry: float

    def __call__(self, pts) -> np.ndarray:
        return self.table.evaluate(pts)


def reconstruct_octant_periodic(orbit_data: Callable[[OctantOrbit], float], lmax: int,
                                tol: float = 1e-8) -> OctantReconstruction:
    """Invert the periodic broken ray transform of the spherical octant.

    Each periodic broken ray is the fold of a great circle traversed for
    half a turn, so the circle integral of the unfolded field is twice the
    orbit integral.  Data of a genuinely folded field are unchanged when a
    coordinate of the circle normal changes sign; a relative violation
    above ``tol`` raises NonEvenData.
    """
    def circle(omega):
        return 2.0 * orbit_data(octant_orbit(omega))

    pts, _ = sphere_quadrature(lmax)
    base = np.array([circle(p) for p in pts])
    scale = max(float(np.max(np.abs(base))), 1e-300)
    worst = 0.0
    for flip in _SIGN_FLIPS:
        other = np.array([circle(p * flip) for p in pts])
        worst = max(worst, float(np.max(np.abs(other - base))) / scale)
    if worst > tol:
        raise NonEvenData(f"data change by {worst:.3e} (relative) under a reflection of the "
                          "octant; they do not come from a folded field")
    cache = {tuple(p): v for p, v in zip(pts, base)}

    def lookup(omega):
        key = tuple(omega)
        return cache[key] if key in cache else circle(omega)

    return OctantReconstruction(funk_inversion(lookup, lmax, tol), worst)
