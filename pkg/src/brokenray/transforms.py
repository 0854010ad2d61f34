"""Forward operators: broken ray, Radon, torus geodesic and great-circle integrals."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (ApexLine, DegenerateGeometry, EmptyIntersection, FillerConeHit,
                     QuadratureError, TipHit)
from .fields import DEFAULT_DENSITY, ScalarField2D, line_integral, simpson_pieces
from .planar import BrokenRay
from .unfolding import DihedralUnfolding, OctantOrbit, circle_basis, fold_line

MEASURED = 0
EXCLUDED = 1
INTERPOLATED = 2
MASK_NAMES = {MEASURED: "measured", EXCLUDED: "excluded", INTERPOLATED: "interpolated"}


@dataclass(frozen=True)
class AttenuationSpec:
    """Constant attenuation ``h`` (signed, 1/length); the weight is exp(+h t).

    A decaying weight e^{-a t} is ``AttenuationSpec(-a)``.
    """

    h: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.h):
            raise ValueError("attenuation must be finite")

    @classmethod
    def decay(cls, a: float) -> "AttenuationSpec":
        return cls(-float(a))


@dataclass
class Sinogram:
    """Line integrals on a parallel-beam grid.

    ``values[i, j]`` is the integral over {x : x . (cos phi_i, sin phi_i) = s_j};
    lines run in direction (-sin phi, cos phi).  Angles cover [0, pi).
    """

    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.mask is None:
            self.mask = np.zeros(self.values.shape, dtype=np.int8)
        self.mask = np.asarray(self.mask, dtype=np.int8)
        shape = (len(self.angles), len(self.offsets))
        if self.values.shape != shape or self.mask.shape != shape:
            raise ValueError(f"sinogram arrays must have shape {shape}")
        excluded = self.mask == EXCLUDED
        if np.any(excluded):
            self.values[excluded] = np.nan

    @property
    def ds(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    @property
    def excluded_fraction(self) -> float:
        return float(np.mean(self.mask == EXCLUDED))

    def copy(self) -> "Sinogram":
        return Sinogram(self.angles.copy(), self.offsets.copy(), self.values.copy(),
                        self.mask.copy())

    def to_csv(self, path):
        lines = ["phi,s,value,mask"]
        for i, phi in enumerate(self.angles):
            for j, s in enumerate(self.offsets):
                v = self.values[i, j]
                val = "" if np.isnan(v) else repr(float(v))
                lines.append(f"{float(phi)!r},{float(s)!r},{val},{MASK_NAMES[int(self.mask[i, j])]}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Sinogram":
        rows = Path(path).read_text().strip().splitlines()
        if rows[0].strip() != "phi,s,value,mask":
            raise ValueError("missing sinogram CSV header")
        codes = {v: k for k, v in MASK_NAMES.items()}
        recs = [r.split(",") for r in rows[1:]]
        angles = np.unique([float(r[0]) for r in recs])
        offsets = np.unique([float(r[1]) for r in recs])
        vals = np.array([float(r[2]) if r[2] else np.nan for r in recs])
        mask = np.array([codes[r[3]] for r in recs])
        shape = (len(angles), len(offsets))
        return cls(angles, offsets, vals.reshape(shape), mask.reshape(shape))


def default_angles(n: int = 360) -> np.ndarray:
    return np.arange(n) * (math.pi / n)


def default_offsets(s_max: float, n: int = 257) -> np.ndarray:
    return np.linspace(-s_max, s_max, n)


# ---------------------------------------------------------------------------
# planar transforms

def brt_forward(f: ScalarField2D, ray: BrokenRay, att: AttenuationSpec | None = None,
                density: float = DEFAULT_DENSITY) -> float:
    """Attenuated integral of ``f`` along a broken ray.

    Each segment is integrated with its own Simpson nodes (restarted at the
    field's breaks); the attenuation offset is the arclength travelled
    before the segment starts.
    """
    h = 0.0 if att is None else att.h
    verts = ray.vertices
    pts, wts = [], []
    offset = 0.0
    for p0, p1 in zip(verts[:-1], verts[1:]):
        delta = p1 - p0
        L = float(np.hypot(*delta))
        if L == 0.0:
            continue
        u = delta / L
        t, w = simpson_pieces(L, f.breaks(p0, u, L), density)
        pts.append(p0 + t[:, None] * u)
        if h != 0.0:
            w = w * np.exp(h * (t + offset))
        wts.append(w)
        offset += L
    if not pts:
        return 0.0
    vals = f.points(np.concatenate(pts))
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite field value on broken ray")
    return float(vals @ np.concatenate(wts))


def _clip_to_box(p, d, box):
    """Parameter interval of the line p + t d inside an axis-aligned box."""
    lo, hi = -math.inf, math.inf
    for axis, a, b in ((0, box[0], box[1]), (1, box[2], box[3])):
        if d[axis] == 0.0:
            if not (a <= p[axis] <= b):
                return None
            continue
        t0 = (a - p[axis]) / d[axis]
        t1 = (b - p[axis]) / d[axis]
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return None
    return lo, hi


def radon_forward(f: ScalarField2D, s: float, phi: float,
                  density: float = DEFAULT_DENSITY) -> float:
    """Integral of ``f`` over the line x . (cos phi, sin phi) = s, cut to its support box."""
    n = np.array([math.cos(phi), math.sin(phi)])
    d = np.array([-math.sin(phi), math.cos(phi)])
    p = s * n
    if not all(map(math.isfinite, f.support)):
        raise ValueError("radon_forward needs a field with a bounded support box")
    seg = _clip_to_box(p, d, f.support)
    if seg is None:
        return 0.0
    t0, t1 = seg
    return integrate_line(f, p + t0 * d, p + t1 * d, density)


def integrate_line(f: ScalarField2D, p0, p1, density: float = DEFAULT_DENSITY) -> float:
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    L = float(np.hypot(*(p1 - p0)))
    if L == 0.0:
        return 0.0
    u = (p1 - p0) / L
    return line_integral(f.points, p0, p1, density=density, breaks=f.breaks(p0, u, L))


def _sinogram_row(u, oracle, phi, offsets):
    vals = np.zeros(len(offsets))
    mask = np.zeros(len(offsets), dtype=np.int8)
    for j, s in enumerate(offsets):
        try:
            ray = fold_line(u, float(s), float(phi))
        except (ApexLine, FillerConeHit, TipHit):
            mask[j] = EXCLUDED
            vals[j] = np.nan
            continue
        except EmptyIntersection:
            # the line misses the unfolded region: the integral is known to be 0
            continue
        vals[j] = oracle(ray)
    return vals, mask


def assemble_sinogram(u: DihedralUnfolding, brt_oracle: Callable[[BrokenRay], float],
                      angles=None, offsets=None, threads: int = 1) -> Sinogram:
    """Radon data of the folded field, gathered from broken ray measurements.

    Every line is folded into a broken ray and ``brt_oracle`` is queried for
    it.  Lines through the apex, lines crossing the filler cone and lines
    through a corner are marked excluded.  Rows are computed independently
    (optionally on ``threads`` workers) into a preallocated table, so the
    output does not depend on scheduling.
    """
    if angles is None:
        angles = default_angles()
    if offsets is None:
        offsets = default_offsets(1.05 * u.source.h.hmax)
    angles = np.asarray(angles, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    values = np.zeros((len(angles), len(offsets)))
    mask = np.zeros(values.shape, dtype=np.int8)

    def work(i):
        values[i], mask[i] = _sinogram_row(u, brt_oracle, angles[i], offsets)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(angles))))
    else:
        for i in range(len(angles)):
            work(i)
    if np.all(mask == EXCLUDED):
        raise DegenerateGeometry("every sinogram cell is excluded")
    return Sinogram(angles, offsets, values, mask)


def radon_sinogram(f: ScalarField2D, angles, offsets, density: float = DEFAULT_DENSITY) -> Sinogram:
    """Direct Radon data of a planar field (no exclusions)."""
    vals = np.array([[radon_forward(f, s, phi, density) for s in offsets] for phi in angles])
    return Sinogram(angles, offsets, vals)


# ---------------------------------------------------------------------------
# periodic transforms

def torus_geodesic_integral(f: Callable[[np.ndarray], np.ndarray], k, x0,
                            density: float = DEFAULT_DENSITY) -> float:
    """Unit-speed integral of ``f`` over the closed geodesic x0 + 2 t k, t in [0, 1].

    ``f`` maps (N, n) points of R^n (period 2 in each coordinate) to values.
    The geodesic has length 2 |k|.
    """
    k = np.asarray(k, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    return line_integral(f, x0, x0 + 2.0 * k, density=density)


def great_circle_integral(f: Callable[[np.ndarray], np.ndarray], omega,
                          density: float = DEFAULT_DENSITY) -> float:
    """Integral of ``f`` over the unit-speed great circle orthogonal to ``omega``."""
    _, e1, e2 = circle_basis(omega)
    t, w = simpson_pieces(2.0 * math.pi, (), density)
    pts = np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2
    vals = np.asarray(f(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite field value on great circle")
    return float(vals @ w)


def periodic_brt(f: Callable[[np.ndarray], np.ndarray], orbit, density: float = DEFAULT_DENSITY,
                 unfolded: bool = False) -> float:
    """Integral of ``f`` over a closed billiard orbit.

    ``orbit`` is a closed :class:`BrokenRay` (cube or disc; ``f`` maps (N, n)
    points to values) or an :class:`OctantOrbit` (``f`` maps (N, 3) points of
    the octant to values).  With ``unfolded=True`` an octant orbit is
    integrated along its half great circle instead of the folded path; the
    two agree whenever f is invariant under coordinate reflections.
    """
    if isinstance(orbit, OctantOrbit):
        cuts = np.concatenate(([0.0], orbit.breaks, [math.pi]))
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 1e-14:
                continue
            t, w = simpson_pieces(b - a, (), density)
            pts = orbit.circle_point(a + t) if unfolded else orbit.point(a + t)
            vals = np.asarray(f(pts), dtype=float)
            total += float(vals @ w)
        return total
    verts = orbit.vertices
    total = 0.0
    for p0, p1 in zip(verts[:-1], verts[1:]):
        if np.array_equal(p0, p1):
            continue
        total += line_integral(f, p0, p1, density=density)
    return total


def torus_data_to_csv(path, rows: list[tuple]):
    """rows: (k, x0, value) tuples with k, x0 of common length n."""
    n = len(rows[0][0])
    header = ",".join([f"k{i + 1}" for i in range(n)] + [f"x0_{i + 1}" for i in range(n)] + ["value"])
    lines = [header]
    for k, x0, v in rows:
        lines.append(",".join([str(int(c)) for c in k] + [repr(float(c)) for c in x0]
                              + [repr(float(v))]))
    Path(path).write_text("\n".join(lines) + "\n")
