"""Reflection (unfolding) maps between broken rays and straight lines.

Three instances are provided:

* the dihedral unfolding of a planar cone (copies of the sector glued
  along their edges until they cover at least a half plane),
* the folding of the period-2 torus onto the unit cube,
* the folding of the sphere onto its positive octant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (ApexLine, DegenerateOrbit, EmptyIntersection, FillerConeHit,
                     OutsideUnfolding, TipHit)
from .fields import ScalarField2D, _circle_breaks
from .planar import (EDGE_ALPHA, EDGE_ZERO, TWO_PI, BrokenRay, ConeDomain, polar_angle)

COLLINEARITY_TOL = 1e-9
FILLER_RADIUS_FACTOR = 1.05


def _is_integer_m(alpha: float) -> int | None:
    m = math.pi / alpha
    if m >= 1 and abs(m - round(m)) < 1e-12:
        return int(round(m))
    return None


def _rotation(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


def _mirror(a: float) -> np.ndarray:
    """Reflection across the line through the origin at angle a / 2."""
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, s], [s, -c]])


@dataclass(frozen=True)
class DihedralUnfolding:
    """K reflected copies of a cone glued around the apex.

    For alpha = pi / m (integer m) the K = 2m copies tile the plane.
    Otherwise K is the smallest count with K alpha >= pi and the uncovered
    angle [K alpha, 2 pi] is the filler cone of radius 1.05 max h.
    """

    source: ConeDomain

    @property
    def alpha(self) -> float:
        return self.source.alpha

    @property
    def m(self) -> int | None:
        return _is_integer_m(self.alpha)

    @property
    def is_integer(self) -> bool:
        return self.m is not None

    @property
    def K(self) -> int:
        if self.is_integer:
            return 2 * self.m
        return max(1, int(math.ceil(math.pi / self.alpha - 1e-12)))

    @property
    def filler_interval(self) -> tuple[float, float] | None:
        if self.is_integer:
            return None
        return (self.K * self.alpha, TWO_PI)

    @property
    def filler_radius(self) -> float:
        return FILLER_RADIUS_FACTOR * self.source.h.hmax

    @property
    def eps_tip(self) -> float:
        return self.source.eps_tip

    def section_matrix(self, i: int) -> np.ndarray:
        """Linear map iota_i taking the fundamental sector onto copy i."""
        if i % 2 == 0:
            return _rotation(i * self.alpha)
        return _mirror((i + 1) * self.alpha)

    def section(self, i: int, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.section_matrix(i).T

    def fold_angle(self, theta):
        """Fold polar angles into [0, alpha] (mod 2 alpha, then reflect)."""
        a = self.alpha
        t = np.mod(theta, 2.0 * a)
        return np.where(t <= a, t, 2.0 * a - t)

    def in_filler(self, theta) -> np.ndarray:
        if self.is_integer:
            return np.zeros(np.shape(theta), dtype=bool)
        return np.asarray(theta) >= self.K * self.alpha

    def describe(self) -> dict:
        return {"alpha": self.alpha, "m": self.m, "K": self.K,
                "filler": None if self.filler_interval is None else list(self.filler_interval),
                "filler_radius": None if self.is_integer else self.filler_radius,
                "h": self.source.h.describe()}


def fold_point(u: DihedralUnfolding, x) -> tuple[int, np.ndarray]:
    """Sector index and folded point p(x) in the closure of the cone."""
    x = np.asarray(x, dtype=float)
    r = math.hypot(*x)
    if r <= u.eps_tip:
        raise OutsideUnfolding("the apex has no unique preimage")
    th = float(polar_angle(x[0], x[1]))
    if u.is_integer and th >= TWO_PI - 1e-15:
        th = 0.0
    if bool(u.in_filler(th)):
        raise OutsideUnfolding("point lies in the filler cone")
    sector = min(int(th // u.alpha), u.K - 1)
    ft = float(u.fold_angle(th))
    return sector, np.array([r * math.cos(ft), r * math.sin(ft)])


def fold_points(u: DihedralUnfolding, pts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised fold: (sector indices, folded points).  Filler points get sector -1."""
    pts = np.asarray(pts, dtype=float)
    r = np.hypot(pts[:, 0], pts[:, 1])
    th = polar_angle(pts[:, 0], pts[:, 1])
    sector = np.minimum((th // u.alpha).astype(int), u.K - 1)
    sector[u.in_filler(th)] = -1
    ft = u.fold_angle(th)
    return sector, np.column_stack((r * np.cos(ft), r * np.sin(ft)))


# ---------------------------------------------------------------------------
# rays and lines

def _edge_label(u: DihedralUnfolding, ray: BrokenRay, j: int) -> int:
    """Edge of interior vertex j (1-based) when the ray carries no labels."""
    if ray.edges is not None:
        return ray.edges[j - 1]
    v = ray.vertices[j]
    th = float(polar_angle(v[0], v[1]))
    if abs(u.alpha - TWO_PI) < 1e-12:
        incoming = v - ray.vertices[j - 1]
        return EDGE_ZERO if incoming[1] < 0 else EDGE_ALPHA
    d0 = min(th, TWO_PI - th)
    da = abs(th - u.alpha)
    return EDGE_ZERO if d0 <= da else EDGE_ALPHA


def unfold_broken_ray(u: DihedralUnfolding, ray: BrokenRay, initial_sector: int = 0):
    """Straighten a broken ray by mapping each segment into its reflected copy.

    Returns ``((point, unit_direction, length), unfolded_vertices)``.
    """
    verts = ray.vertices
    for v in verts:
        if math.hypot(*v) <= u.eps_tip:
            raise TipHit("broken ray meets the apex")
    K = u.K
    i = initial_sector
    if not (0 <= i < K):
        raise ValueError(f"initial sector must lie in [0, {K})")
    out = [u.section(i, verts[0])]
    for j in range(1, len(verts) - 1):
        out.append(u.section(i, verts[j]))
        edge = _edge_label(u, ray, j)
        # iota_i sends edge 0 to angle i*alpha (i even) or (i+1)*alpha (i odd)
        goes_up = (edge == EDGE_ZERO) == (i % 2 == 1)
        i = i + 1 if goes_up else i - 1
        if u.is_integer:
            i %= K
        elif not (0 <= i < K):
            raise FillerConeHit("unfolded ray leaves the reflected copies")
    out.append(u.section(i, verts[-1]))
    out = np.array(out)
    delta = out[-1] - out[0]
    length = float(np.hypot(*delta))
    return (out[0], delta / length, length), out


def mirrored_unfolding(u: DihedralUnfolding) -> tuple[DihedralUnfolding, np.ndarray]:
    """The unfolding of the cone reflected across its bisector, and that reflection.

    Gluing copies counter-clockwise onto the reflected cone is the same as
    gluing clockwise onto the original one.
    """
    sigma = _mirror(u.alpha)
    src = ConeDomain(u.alpha, u.source.h.mirrored(u.alpha))
    return DihedralUnfolding(src), sigma


def mirror_ray(ray: BrokenRay, sigma: np.ndarray) -> BrokenRay:
    """Image of a cone broken ray under the bisector reflection (edge labels swap)."""
    edges = None if ray.edges is None else [1 - e for e in ray.edges]
    return BrokenRay(ray.vertices @ np.asarray(sigma).T, edges, ray.closed, ray.domain)


def collinearity_residual(points) -> float:
    """Max perpendicular distance to the first-last chord, relative to its length."""
    pts = np.asarray(points, dtype=float)
    delta = pts[-1] - pts[0]
    L = float(np.hypot(*delta))
    n = np.array([-delta[1], delta[0]]) / L
    return float(np.max(np.abs((pts - pts[0]) @ n)) / L)


def line_hits_filler(u: DihedralUnfolding, s: float, phi: float) -> bool:
    """Does the line x . (cos phi, sin phi) = s meet the closed filler cone?"""
    if u.is_integer:
        return False
    a0, a1 = u.filler_interval
    R = u.filler_radius
    # extreme values of cos(theta - phi) over the arc [a0, a1]
    ends = [math.cos(a0 - phi), math.cos(a1 - phi)]
    hi, lo = max(ends), min(ends)
    if (phi - a0) % TWO_PI <= a1 - a0:
        hi = 1.0
    if (phi + math.pi - a0) % TWO_PI <= a1 - a0:
        lo = -1.0
    hi = max(0.0, R * hi)
    lo = min(0.0, R * lo)
    return lo <= s <= hi


def _line_chord(u: DihedralUnfolding, s: float, n, d) -> tuple[float, float]:
    """Parameter interval of the line inside the unfolded region (first entry, first exit)."""
    h = u.source.h
    if h.is_constant:
        R = h.hmin
        if abs(s) >= R:
            raise EmptyIntersection("line misses the unfolded domain")
        half = math.sqrt(R * R - s * s)
        return -half, half

    def resid(t):
        x = s * n + t * d
        th = float(polar_angle(x[0], x[1]))
        if bool(u.in_filler(th)):
            return 1.0
        return math.hypot(*x) - float(h(float(u.fold_angle(th))))

    T = h.hmax
    ts = np.linspace(-T, T, 2001)
    vals = np.array([resid(t) for t in ts])
    neg = np.nonzero(vals < 0)[0]
    if len(neg) == 0:
        raise EmptyIntersection("line misses the unfolded domain")
    k0 = neg[0]
    k1 = k0
    while k1 + 1 < len(ts) and vals[k1 + 1] < 0:
        k1 += 1

    def bisect(lo, hi, inside_at_lo):
        while hi - lo > 1e-13 * T:
            mid = 0.5 * (lo + hi)
            if (resid(mid) < 0) == inside_at_lo:
                lo = mid
            else:
                hi = mid
        return lo if not inside_at_lo else hi

    t_in = bisect(ts[k0 - 1], ts[k0], False) if k0 > 0 else ts[0]
    t_out = bisect(ts[k1], ts[k1 + 1], True) if k1 + 1 < len(ts) else ts[-1]
    return t_in, t_out


def fold_line(u: DihedralUnfolding, s: float, phi: float) -> BrokenRay:
    """Fold the line {x : x . (cos phi, sin phi) = s} into a broken ray of the cone.

    The chord runs from the line's first entry into the unfolded region to
    its first exit, in the direction (-sin phi, cos phi).
    """
    if abs(s) < u.eps_tip:
        raise ApexLine("line passes through the apex")
    if line_hits_filler(u, s, phi):
        raise FillerConeHit("line crosses the filler cone")
    n = np.array([math.cos(phi), math.sin(phi)])
    d = np.array([-math.sin(phi), math.cos(phi)])
    t_in, t_out = _line_chord(u, s, n, d)
    K, a = u.K, u.alpha
    rays = range(K) if u.is_integer else range(1, K)
    crossings = []
    for j in rays:
        e = np.array([math.cos(j * a), math.sin(j * a)])
        eperp = np.array([-e[1], e[0]])
        dd = float(d @ eperp)
        if abs(dd) < 1e-15:
            continue
        t = -s * float(n @ eperp) / dd
        if float((s * n + t * d) @ e) <= 0.0:
            continue
        if t_in < t < t_out:
            crossings.append((t, j))
    crossings.sort()
    h_edge = {EDGE_ZERO: float(u.source.h(0.0)), EDGE_ALPHA: float(u.source.h(a))}
    ts = [t_in] + [t for t, _ in crossings] + [t_out]
    pts = s * n + np.array(ts)[:, None] * d
    edges = [j % 2 for _, j in crossings]
    for (t, j), lab in zip(crossings, edges):
        r = float(np.hypot(*(s * n + t * d)))
        if abs(r - h_edge[lab]) < u.eps_tip:
            raise TipHit("line meets a corner where an edge meets E")
    mid = pts[0] + 0.5 * (pts[1] - pts[0])
    sector, _ = fold_point(u, mid)
    _, folded = fold_points(u, pts)
    # snap reflection points exactly onto their edge rays
    for k, lab in enumerate(edges, start=1):
        e = u.source.edge_direction(lab)
        folded[k] = float(np.hypot(*folded[k])) * e
    return BrokenRay(folded, edges, domain="cone", initial_sector=sector)


def line_chord(u: DihedralUnfolding, s: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """End points of the admissible chord of a line (same conventions as fold_line)."""
    n = np.array([math.cos(phi), math.sin(phi)])
    d = np.array([-math.sin(phi), math.cos(phi)])
    t_in, t_out = _line_chord(u, s, n, d)
    return s * n + t_in * d, s * n + t_out * d


# ---------------------------------------------------------------------------
# fields

def _boundary_crossings(u: DihedralUnfolding, p0, dirn, length, samples: int = 2001):
    """Parameters in (0, length) where the segment crosses r = h(folded angle)."""
    h = u.source.h

    def resid(t):
        x = p0 + t * dirn
        th = polar_angle(x[..., 0], x[..., 1])
        return np.hypot(x[..., 0], x[..., 1]) - h(u.fold_angle(th))

    ts = np.linspace(0.0, length, samples)
    vals = resid(ts[:, None])
    out = []
    for k in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
        lo, hi = ts[k], ts[k + 1]
        s_lo = np.sign(vals[k])
        while hi - lo > 1e-13 * max(1.0, length):
            mid = 0.5 * (lo + hi)
            if np.sign(resid(np.array(mid))) == s_lo:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    return [t for t in out if 0.0 < t < length]


def fold_field(u: DihedralUnfolding, f: ScalarField2D) -> ScalarField2D:
    """The reflected field f o p on the unfolded region, zero elsewhere."""
    h = u.source.h
    R = h.hmax

    def func(x, y):
        pts = np.column_stack((np.ravel(x), np.ravel(y)))
        sector, folded = fold_points(u, pts)
        r = np.hypot(pts[:, 0], pts[:, 1])
        ft = polar_angle(folded[:, 0], folded[:, 1])
        ft = np.where(ft > u.alpha + 1e-12, 0.0, ft)
        ok = (sector >= 0) & (r < h(ft))
        out = np.zeros(len(pts))
        if np.any(ok):
            out[ok] = f(folded[ok, 0], folded[ok, 1])
        return out.reshape(np.shape(x))

    a, K = u.alpha, u.K

    def breaks(p0, dirn, length):
        out = []
        rays = range(K) if u.is_integer else range(K + 1)
        for j in rays:
            e = np.array([math.cos(j * a), math.sin(j * a)])
            eperp = np.array([-e[1], e[0]])
            dd = float(dirn @ eperp)
            if abs(dd) < 1e-15:
                continue
            t = -float(p0 @ eperp) / dd
            if 0.0 < t < length and float((p0 + t * dirn) @ e) > 0.0:
                out.append(t)
        if h.is_constant:
            out.extend(_circle_breaks(p0, dirn, length, (0.0, 0.0), h.hmin))
        else:
            out.extend(_boundary_crossings(u, p0, dirn, length))
        # breaks of f itself, pulled back piece by piece through the isometries
        cuts = sorted([0.0] + out + [length])
        for t0, t1 in zip(cuts[:-1], cuts[1:]):
            if t1 - t0 <= 1e-12:
                continue
            mid = p0 + 0.5 * (t0 + t1) * dirn
            try:
                sec, _ = fold_point(u, mid)
            except OutsideUnfolding:
                continue
            M = u.section_matrix(sec)
            q0 = M.T @ (p0 + t0 * dirn)
            qd = M.T @ dirn
            out.extend(t0 + b for b in f.breaks(q0, qd, t1 - t0) if 0.0 < b < t1 - t0)
        return out

    return ScalarField2D("analytic", (-R, R, -R, R), func=func, breaks_fn=breaks,
                         name="folded", params={"unfolding": u.describe(), "field": f.name})


# ---------------------------------------------------------------------------
# cube / torus

def cube_fold_point(x) -> np.ndarray:
    """Fold R^n (period 2 per axis) onto [0, 1]^n: 1 - |1 - (x mod 2)|."""
    return 1.0 - np.abs(1.0 - np.mod(np.asarray(x, dtype=float), 2.0))


def torus_geodesic_to_cube_orbit(n: int, k, x0, tol: float = 1e-9) -> BrokenRay:
    """Fold the closed torus geodesic x0 + 2 t k (t in [0, 1]) into a cube billiard orbit.

    Vertices are the folded start point and every face hit in between; the
    start point is repeated at the end.  ``edges`` holds the axis of each
    face hit.
    """
    k = np.asarray(k, dtype=int)
    x0 = np.asarray(x0, dtype=float)
    if k.shape != (n,) or x0.shape != (n,):
        raise ValueError("k and x0 must have length n")
    if not np.any(k):
        raise ValueError("k must be a nonzero integer vector")
    for i in range(n):
        if k[i] == 0 and abs(x0[i] - round(x0[i])) < tol:
            raise DegenerateOrbit(f"orbit lies in a face x_{i} = const")
    events = []
    for i in range(n):
        if k[i] == 0:
            continue
        # x0_i + 2 t k_i is an integer
        lo, hi = sorted((x0[i], x0[i] + 2 * k[i]))
        for j in range(int(math.ceil(lo - 1e-12)), int(math.floor(hi + 1e-12)) + 1):
            t = (j - x0[i]) / (2.0 * k[i])
            if -1e-12 <= t < 1.0 - 1e-12:
                events.append((max(t, 0.0), i))
    events.sort()
    for (t1, i1), (t2, i2) in zip(events, events[1:]):
        if t2 - t1 < tol:
            raise DegenerateOrbit("orbit passes through an edge or corner of the cube")
    if len(events) > 1 and events[-1][0] > 1 - tol and events[0][0] < tol:
        raise DegenerateOrbit("orbit passes through an edge or corner of the cube")
    ts = [t for t, _ in events]
    axes = [i for _, i in events]
    start_on_face = bool(ts) and ts[0] == 0.0
    if start_on_face:
        params = ts + [1.0]
    else:
        params = [0.0] + ts + [1.0]
    pts = x0 + 2.0 * np.array(params)[:, None] * k
    verts = cube_fold_point(pts)
    # face hits land exactly on integers
    for row, t in enumerate(params):
        for i in range(n):
            if k[i] and abs((x0[i] + 2 * t * k[i]) - round(x0[i] + 2 * t * k[i])) < 1e-12:
                verts[row, i] = float(round(verts[row, i]))
    return BrokenRay(verts, edges=axes, closed=True, domain=f"cube{n}")


def cube_reflection_residual(ray: BrokenRay) -> float:
    """Reflection-law residual at every face hit of a cube orbit."""
    v = ray.vertices
    dirs = np.diff(v, axis=0)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    n = v.shape[1]
    worst = 0.0
    count = len(dirs)
    for j in range(count):
        d_in, d_out = dirs[j - 1], dirs[j]
        p = v[j]
        on_face = [i for i in range(n) if abs(p[i]) < 1e-12 or abs(p[i] - 1) < 1e-12]
        if not on_face:
            worst = max(worst, float(np.max(np.abs(d_in - d_out))))
            continue
        expected = d_in.copy()
        for i in on_face:
            expected[i] = -expected[i]
        worst = max(worst, float(np.max(np.abs(expected - d_out))))
    return worst


# ---------------------------------------------------------------------------
# sphere / octant

def octant_fold_point(x) -> np.ndarray:
    """p(x, y, z) = (|x|, |y|, |z|)."""
    return np.abs(np.asarray(x, dtype=float))


def circle_basis(omega) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit normal and an orthonormal basis of the great circle orthogonal to it."""
    w = np.asarray(omega, dtype=float)
    w = w / np.linalg.norm(w)
    helper = np.eye(3)[int(np.argmin(np.abs(w)))]
    e1 = np.cross(w, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(w, e1)
    return w, e1, e2


@dataclass
class OctantOrbit:
    """Periodic broken ray of the octant: the fold of one half of a great circle.

    The circle c(t) = cos t e1 + sin t e2 satisfies p(c(t + pi)) = p(c(t)),
    so t in [0, pi] covers one period of the folded trajectory.
    ``breaks`` are the parameters where c crosses a coordinate plane
    (reflections of the folded path).
    """

    normal: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    breaks: np.ndarray

    def circle_point(self, t) -> np.ndarray:
        """c(t) on the sphere, before folding."""
        t = np.asarray(t, dtype=float)
        return np.cos(t)[..., None] * self.e1 + np.sin(t)[..., None] * self.e2

    def point(self, t) -> np.ndarray:
        return octant_fold_point(self.circle_point(t))

    @property
    def vertices(self) -> np.ndarray:
        return self.point(np.concatenate((self.breaks, [self.breaks[0] + math.pi]))
                          if len(self.breaks) else np.array([0.0, math.pi]))

    @property
    def length(self) -> float:
        return math.pi


def octant_orbit(omega) -> OctantOrbit:
    w, e1, e2 = circle_basis(omega)
    tb = []
    for i in range(3):
        # cos t e1_i + sin t e2_i = 0
        if abs(e1[i]) < 1e-15 and abs(e2[i]) < 1e-15:
            raise DegenerateOrbit("great circle lies in a coordinate plane")
        t = math.atan2(-e1[i], e2[i]) % math.pi
        tb.append(t)
    return OctantOrbit(w, e1, e2, np.sort(np.array(tb)))
