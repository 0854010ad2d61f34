"""Planar domains with reflecting boundary parts and billiard tracing.

A :class:`ConeDomain` is the sector ``0 < theta < alpha, 0 < r < h(theta)``
with apex at the origin.  Its two edge rays reflect; the outer curve
``r = h(theta)`` is the set of tomography where broken rays start and end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidOrbit, MaxReflectionsExceeded, TangentialHit, TipHit

GEOM_TOL = 1e-9
TWO_PI = 2.0 * math.pi

EDGE_ZERO = 0   # edge ray at angle 0
EDGE_ALPHA = 1  # edge ray at angle alpha


def polar_angle(x, y):
    """Polar angle in [0, 2 pi)."""
    th = np.arctan2(y, x)
    return np.where(th < 0.0, th + TWO_PI, th)


# ---------------------------------------------------------------------------
# boundary radius registry

@dataclass(frozen=True)
class BoundaryRadius:
    """Outer boundary radius h(theta) of a cone, theta in [0, alpha]."""

    kind: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    hmin: float
    hmax: float

    def __call__(self, theta):
        return self.func(np.asarray(theta, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def constant(cls, value: float = 1.0) -> "BoundaryRadius":
        v = float(value)
        if not v > 0:
            raise ValueError("boundary radius must be positive")
        return cls("constant", {"value": v}, lambda th: np.full(np.shape(th), v), v, v)

    @classmethod
    def piecewise(cls, angles: Sequence[float], values: Sequence[float]) -> "BoundaryRadius":
        """h = values[i] for angles[i-1] <= theta < angles[i] (angles are interior cuts)."""
        cuts = np.asarray(angles, dtype=float)
        vals = np.asarray(values, dtype=float)
        if len(vals) != len(cuts) + 1 or np.any(vals <= 0) or np.any(np.diff(cuts) <= 0):
            raise ValueError("piecewise radius needs increasing cuts and len(cuts)+1 positive values")
        return cls("piecewise", {"angles": cuts.tolist(), "values": vals.tolist()},
                   lambda th: vals[np.searchsorted(cuts, th, side="right")],
                   float(vals.min()), float(vals.max()))

    @classmethod
    def smooth(cls, base: float = 1.0, amplitude: float = 0.1, frequency: float = 1.0,
               phase: float = 0.0) -> "BoundaryRadius":
        """h = base * (1 + amplitude * cos(frequency * theta + phase))."""
        if not (base > 0 and 0 <= abs(amplitude) < 1):
            raise ValueError("smooth radius needs base > 0 and |amplitude| < 1")
        b, a, w, ph = float(base), float(amplitude), float(frequency), float(phase)
        return cls("smooth", {"base": b, "amplitude": a, "frequency": w, "phase": ph},
                   lambda th: b * (1.0 + a * np.cos(w * th + ph)),
                   b * (1 - abs(a)), b * (1 + abs(a)))

    def mirrored(self, alpha: float) -> "BoundaryRadius":
        """theta -> h(alpha - theta): the radius of the cone reflected across its bisector."""
        if self.is_constant:
            return self
        base = self.func
        a = float(alpha)
        return BoundaryRadius("mirrored", {"alpha": a, "of": self.describe()},
                              lambda th: base(a - np.asarray(th, dtype=float)),
                              self.hmin, self.hmax)

    @classmethod
    def from_spec(cls, spec) -> "BoundaryRadius":
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        spec = dict(spec)
        kind = spec.pop("kind")
        if kind == "constant":
            return cls.constant(**spec)
        if kind == "piecewise":
            return cls.piecewise(**spec)
        if kind == "smooth":
            return cls.smooth(**spec)
        raise ValueError(f"unknown boundary radius kind {kind!r}")


# ---------------------------------------------------------------------------
# domains

@dataclass(frozen=True)
class ConeDomain:
    """Sector of opening ``alpha`` with outer radius ``h``.

    E (tomography set) is the outer curve, R the two open edge rays, and C
    the apex plus the two points where the edges meet E.
    """

    alpha: float
    h: BoundaryRadius = field(default_factory=BoundaryRadius.constant)

    def __post_init__(self):
        if not (0.0 < self.alpha <= TWO_PI + 1e-15):
            raise ValueError("opening angle must lie in (0, 2 pi]")
        if not isinstance(self.h, BoundaryRadius):
            object.__setattr__(self, "h", BoundaryRadius.from_spec(self.h))

    @property
    def eps_tip(self) -> float:
        return 1e-9 * self.h.hmin

    @property
    def corners(self) -> np.ndarray:
        a = self.alpha
        return np.array([[0.0, 0.0], [self.h(0.0), 0.0],
                         [self.h(a) * math.cos(a), self.h(a) * math.sin(a)]])

    def edge_direction(self, edge: int) -> np.ndarray:
        a = 0.0 if edge == EDGE_ZERO else self.alpha
        return np.array([math.cos(a), math.sin(a)])

    def edge_normal(self, edge: int) -> np.ndarray:
        a = 0.0 if edge == EDGE_ZERO else self.alpha
        return np.array([-math.sin(a), math.cos(a)])

    def angle_in_sector(self, theta):
        return np.asarray(theta) <= self.alpha

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        """Open-domain membership (points within ``tol`` of the boundary count as outside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = polar_angle(pts[:, 0], pts[:, 1])
        inside = (th > 0) & (th < self.alpha) & (r > 0)
        inside &= r < self.h(np.clip(th, 0, self.alpha)) - tol
        if tol > 0:
            # distance to the edge rays
            d0 = np.where(pts[:, 0] > 0, np.abs(pts[:, 1]), r)
            na = self.edge_normal(EDGE_ALPHA)
            ea = self.edge_direction(EDGE_ALPHA)
            da = np.where(pts @ ea > 0, np.abs(pts @ na), r)
            inside &= (d0 > tol) & (da > tol)
        return inside

    def on_tomography(self, p, tol: float = GEOM_TOL) -> bool:
        x, y = float(p[0]), float(p[1])
        th = float(polar_angle(x, y))
        if self.alpha >= TWO_PI - 1e-15 and th > TWO_PI - 1e-12:
            th = TWO_PI
        if th > self.alpha + tol:
            # points just below the edge at angle 0 come out near 2 pi
            if th > TWO_PI - tol:
                th = 0.0
            else:
                return False
        return abs(math.hypot(x, y) - float(self.h(min(th, self.alpha)))) < tol * max(1.0, self.h.hmax)

    def on_reflecting(self, p, tol: float = GEOM_TOL) -> int | None:
        """Edge label of a point on R, or None."""
        p = np.asarray(p, dtype=float)
        r = math.hypot(*p)
        if r <= self.eps_tip:
            return None
        for edge in (EDGE_ZERO, EDGE_ALPHA):
            e = self.edge_direction(edge)
            s = float(p @ e)
            if s > 0 and abs(float(p @ self.edge_normal(edge))) < tol * max(1.0, r):
                a = 0.0 if edge == EDGE_ZERO else self.alpha
                if s < float(self.h(a)) + tol:
                    return edge
        return None

    def describe(self) -> dict:
        return {"alpha": self.alpha, "h": self.h.describe()}


@dataclass(frozen=True)
class RectTube:
    """The strip (0, W) x (0, L): sides reflect, bottom and top are E."""

    width: float
    length: float

    def __post_init__(self):
        if not (self.width > 0 and self.length > 0):
            raise ValueError("tube width and length must be positive")

    def describe(self) -> dict:
        return {"width": self.width, "length": self.length}


# ---------------------------------------------------------------------------
# broken rays

@dataclass
class BrokenRay:
    """Polyline of a billiard trajectory.

    ``edges`` holds one label per interior (reflection) vertex.  For closed
    orbits the first vertex is repeated as the last.
    """

    vertices: np.ndarray
    edges: list | None = None
    closed: bool = False
    domain: str = ""
    initial_sector: int | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or len(self.vertices) < 2:
            raise ValueError("a broken ray needs at least two vertices")

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @property
    def total_length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def reflections(self) -> int:
        if self.closed:
            return len(self.vertices) - 1
        return len(self.vertices) - 2

    def directions(self) -> np.ndarray:
        d = np.diff(self.vertices, axis=0)
        return d / np.linalg.norm(d, axis=1)[:, None]

    def reversed(self) -> "BrokenRay":
        edges = None if self.edges is None else list(reversed(self.edges))
        return BrokenRay(self.vertices[::-1].copy(), edges, self.closed, self.domain)

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist(), "length": self.total_length,
                "reflections": self.reflections}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str, **kw) -> "BrokenRay":
        d = json.loads(text)
        return cls(np.array(d["vertices"]), **kw)


def reflect_direction(d, n, tol: float = 1e-12) -> np.ndarray:
    """Specular reflection d - 2 (d.n) n of a unit direction on a unit normal."""
    d = np.asarray(d, dtype=float)
    n = np.asarray(n, dtype=float)
    dn = float(d @ n)
    if abs(dn) < tol:
        raise TangentialHit(f"tangential incidence (d.n = {dn:.3e})")
    return d - 2.0 * dn * n


def reflection_residual(ray: BrokenRay, normals: Sequence[np.ndarray]) -> float:
    """Max deviation of the reflection law over the interior vertices
    (for a closed orbit the last vertex reflects into the first segment)."""
    dirs = ray.directions()
    worst = 0.0
    for j, n in enumerate(normals):
        expected = dirs[j] - 2.0 * (dirs[j] @ n) * n
        nxt = dirs[(j + 1) % len(dirs)] if ray.closed else dirs[j + 1]
        worst = max(worst, float(np.max(np.abs(expected - nxt))))
    return worst


def _segment_apex_distance(p, d, t):
    s = float(np.clip(-(p @ d), 0.0, t))
    q = p + s * d
    return math.hypot(*q)


def _exit_param(domain: ConeDomain, p, d) -> float:
    """Parameter of the first crossing of E from an interior (or E) point."""
    hfun = domain.h
    if hfun.is_constant:
        R = hfun.hmin
        b = float(p @ d)
        c = float(p @ p) - R * R
        disc = b * b - c
        if disc <= 0:
            raise TangentialHit("ray does not cross the outer boundary")
        return -b + math.sqrt(disc)

    def resid(t):
        q = p + t * d
        th = float(polar_angle(q[0], q[1]))
        if th > domain.alpha:
            # outside the sector angular range: compare with the nearer edge value
            th = domain.alpha if th - domain.alpha < TWO_PI - th else 0.0
        return math.hypot(*q) - float(hfun(th))

    step = 0.01 * hfun.hmin
    t_max = 2.0 * (math.hypot(*p) + hfun.hmax) + step
    t0 = 1e-9 * hfun.hmin
    t = t0
    prev = t0
    while t < t_max:
        t = min(t + step, t_max)
        if resid(t) >= 0.0:
            lo, hi = prev, t
            while hi - lo > 1e-13 * hfun.hmax:
                mid = 0.5 * (lo + hi)
                if resid(mid) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = t
    raise TangentialHit("ray does not cross the outer boundary")


def _edge_hits(domain: ConeDomain, p, d, t_min):
    """Candidate (t, edge) hits of the two edge rays (as half-lines)."""
    hits = []
    same_ray = abs(domain.alpha - TWO_PI) < 1e-12
    for edge in (EDGE_ZERO, EDGE_ALPHA):
        if same_ray and edge == EDGE_ALPHA:
            break
        e = domain.edge_direction(edge)
        n = domain.edge_normal(edge)
        dn = float(d @ n)
        if abs(dn) < 1e-15:
            continue
        t = -float(p @ n) / dn
        if t <= t_min:
            continue
        s = float((p + t * d) @ e)
        if s <= 0.0:
            continue
        label = edge
        if same_ray:
            # slit: the upper side is edge 0, the lower side edge alpha
            label = EDGE_ZERO if d[1] < 0 else EDGE_ALPHA
        hits.append((t, label, s))
    return hits


def trace_broken_ray(domain: ConeDomain, start, direction, max_reflections: int = 64,
                     tol: float = GEOM_TOL) -> BrokenRay:
    """Trace a billiard trajectory from ``start`` on E until it first returns to E.

    Raises
    ------
    TipHit
        A segment passes within ``domain.eps_tip`` of the apex or hits a
        corner where an edge meets E.
    MaxReflectionsExceeded
        More than ``max_reflections`` reflections.
    TangentialHit
        Grazing incidence on an edge or on E.
    """
    p = np.asarray(start, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if not domain.on_tomography(p, tol):
        raise ValueError(f"start point {p.tolist()} is not on the set of tomography")
    probe = p + 1e-6 * domain.h.hmin * d
    if not domain.contains(probe[None, :])[0]:
        raise ValueError("direction does not point into the domain")
    eps = domain.eps_tip
    scale = domain.h.hmax
    vertices = [p.copy()]
    edges = []
    t_min = 1e-12 * scale
    while True:
        t_exit = _exit_param(domain, p, d)
        hits = [h for h in _edge_hits(domain, p, d, t_min) if h[0] < t_exit]
        t_next = min([h[0] for h in hits], default=t_exit)
        if _segment_apex_distance(p, d, t_next) < eps:
            raise TipHit("segment passes through the apex")
        if not hits:
            q = p + t_exit * d
            for c in domain.corners[1:]:
                if np.linalg.norm(q - c) < eps:
                    raise TipHit("ray exits through a corner of the domain")
            vertices.append(q)
            break
        t, edge, s = min(hits)
        a = 0.0 if edge == EDGE_ZERO else domain.alpha
        if abs(s - float(domain.h(a))) < eps:
            raise TipHit("ray hits a corner where an edge meets E")
        if len(edges) >= max_reflections:
            raise MaxReflectionsExceeded(f"more than {max_reflections} reflections")
        p = p + t * d
        n = domain.edge_normal(edge)
        # grazing at an edge is tangential incidence
        d = reflect_direction(d, n, tol=1e-12)
        d = d / np.linalg.norm(d)
        vertices.append(p.copy())
        edges.append(edge)
    return BrokenRay(np.array(vertices), edges, domain="cone")


def cone_normals(domain: ConeDomain, ray: BrokenRay) -> list[np.ndarray]:
    return [domain.edge_normal(e) for e in (ray.edges or [])]


def disk_star_orbit(q: int, p: int, phase: float = 0.0) -> BrokenRay:
    """Closed star-polygon billiard orbit of the unit disc.

    Vertices sit at angles ``phase + 2 pi j p / q`` for j = 0..q.
    """
    if q < 2 or not (0 < p < q):
        raise InvalidOrbit("need q >= 2 and 0 < p < q")
    if math.gcd(p, q) != 1:
        raise InvalidOrbit(f"gcd({p}, {q}) != 1")
    ang = phase + TWO_PI * p * np.arange(q + 1) / q
    verts = np.column_stack((np.cos(ang), np.sin(ang)))
    verts[-1] = verts[0]
    return BrokenRay(verts, closed=True, domain="disk")


def disk_normals(ray: BrokenRay) -> list[np.ndarray]:
    """Unit normals at the reflection vertices of a closed disc orbit (v1..v_q)."""
    v = ray.vertices[1:]
    return [x / np.linalg.norm(x) for x in v]


def rect_tube_trace(tube: RectTube, start, direction, max_reflections: int = 1000,
                    tol: float = 1e-12) -> BrokenRay:
    """Trace from the bottom of the tube to its top, reflecting on the sides."""
    W, L = tube.width, tube.length
    p = np.asarray(start, dtype=float).copy()
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if abs(p[1]) > GEOM_TOL or not (0.0 < p[0] < W):
        raise ValueError("start must lie on the open bottom segment")
    if abs(d[1]) < tol:
        raise TangentialHit("ray is parallel to the tube cross-section")
    if d[1] < 0:
        raise ValueError("direction must point into the tube")
    vertices = [p.copy()]
    edges = []
    eps = 1e-9 * min(W, L)
    while True:
        t_top = (L - p[1]) / d[1]
        if d[0] > 0:
            t_side, side = (W - p[0]) / d[0], 1
        elif d[0] < 0:
            t_side, side = -p[0] / d[0], 0
        else:
            t_side, side = math.inf, None
        if abs(t_top - t_side) * math.hypot(*d) < eps:
            raise TipHit("ray hits a corner of the tube")
        if t_top < t_side:
            p = p + t_top * d
            p[1] = L
            vertices.append(p.copy())
            break
        if len(edges) >= max_reflections:
            raise MaxReflectionsExceeded(f"more than {max_reflections} reflections")
        p = p + t_side * d
        p[0] = W if side == 1 else 0.0
        d = reflect_direction(d, np.array([1.0, 0.0]))
        vertices.append(p.copy())
        edges.append(side)
    return BrokenRay(np.array(vertices), edges, domain="tube")
