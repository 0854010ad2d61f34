"""Scalar fields on the plane, radial profiles and segment quadrature.

Every transform in the package integrates through :func:`line_integral`,
a composite Simpson rule that splits the segment at the points where the
integrand is known not to be smooth (``breaks``).  Fields advertise those
points through :meth:`ScalarField2D.breaks`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureError

DEFAULT_DENSITY = 64
ENDPOINT_NUDGE = 1e-11
_INF_BOX = (-np.inf, np.inf, -np.inf, np.inf)


@lru_cache(maxsize=512)
def _simpson_unit(n_panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Simpson on [0, 1] (n_panels even)."""
    nodes = np.linspace(0.0, 1.0, n_panels + 1)
    w = np.ones(n_panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= 1.0 / (3.0 * n_panels)
    nodes.flags.writeable = False
    w.flags.writeable = False
    return nodes, w


def panel_count(length: float, density: float) -> int:
    n = max(2, int(math.ceil(density * length)))
    return n + (n % 2)


def simpson_pieces(length: float, breaks: Sequence[float], density: float):
    """Arclength nodes and weights on [0, length], split at ``breaks``.

    The two end nodes of every piece are moved inward by ``ENDPOINT_NUDGE``
    times the piece length, so a jump sitting exactly on a break is sampled
    by its one-sided limits.
    """
    cuts = [0.0]
    for b in sorted(breaks):
        if cuts[-1] + 1e-13 * max(length, 1.0) < b < length * (1 - 1e-13):
            cuts.append(float(b))
    cuts.append(length)
    ts, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        nodes, w = _simpson_unit(panel_count(b - a, density))
        t = a + (b - a) * nodes
        t[0] += ENDPOINT_NUDGE * (b - a)
        t[-1] -= ENDPOINT_NUDGE * (b - a)
        ts.append(t)
        ws.append((b - a) * w)
    return np.concatenate(ts), np.concatenate(ws)


def line_integral(func: Callable[[np.ndarray], np.ndarray], p0, p1, h: float = 0.0,
                  offset: float = 0.0, density: float = DEFAULT_DENSITY,
                  breaks: Sequence[float] = ()) -> float:
    """Integrate ``func`` over the segment p0 -> p1 with weight exp(h (t + offset)).

    ``func`` maps an (N, dim) array of points to N values.  ``breaks`` are
    arclength positions in (0, L) where the integrand may have a kink or a
    jump; the Simpson rule is restarted at each of them.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    delta = p1 - p0
    length = float(np.sqrt(delta @ delta))
    if length == 0.0:
        raise ValueError("degenerate segment: p0 == p1")
    u = delta / length
    t, w = simpson_pieces(length, breaks, density)
    values = np.asarray(func(p0 + t[:, None] * u), dtype=float)
    if h != 0.0:
        values = values * np.exp(h * (t + offset))
    if not np.all(np.isfinite(values)):
        raise QuadratureError("non-finite field value on segment")
    return float(values @ w)


def _circle_breaks(p0, u, length, center, radius):
    d = np.asarray(p0, dtype=float) - np.asarray(center, dtype=float)
    b = float(d @ u)
    c = float(d @ d) - radius * radius
    disc = b * b - c
    if disc <= 0.0:
        return []
    r = math.sqrt(disc)
    return [t for t in (-b - r, -b + r) if 0.0 < t < length]


def _box_breaks(p0, u, length, box):
    # Crossings of the support box boundary; values jump to zero there.
    out = []
    for axis, lo, hi in ((0, box[0], box[1]), (1, box[2], box[3])):
        if u[axis] == 0.0:
            continue
        for edge in (lo, hi):
            if np.isfinite(edge):
                t = (edge - p0[axis]) / u[axis]
                if 0.0 < t < length:
                    out.append(float(t))
    return out


class ScalarField2D:
    """Real field on the plane, either grid-sampled or analytic.

    Evaluation outside ``support`` (an axis-aligned box
    ``(xmin, xmax, ymin, ymax)``) returns exactly 0.  Grid fields interpolate
    bilinearly.  Instances are treated as immutable.
    """

    def __init__(self, kind: str, support=_INF_BOX, *, func=None, values=None,
                 origin=(0.0, 0.0), spacing=1.0, breaks_fn=None, name: str = "",
                 params: dict | None = None):
        if kind not in ("grid", "analytic"):
            raise ValueError(f"unknown field kind {kind!r}")
        self.kind = kind
        self.name = name
        self.params = dict(params or {})
        self._breaks_fn = breaks_fn
        if kind == "grid":
            values = np.array(values, dtype=float)
            if values.ndim != 2 or min(values.shape) < 2:
                raise ValueError("grid values must be a 2-D array with at least 2x2 samples")
            if not np.all(np.isfinite(values)):
                raise ValueError("grid values must be finite")
            values.flags.writeable = False
            self.values = values
            self.origin = (float(origin[0]), float(origin[1]))
            self.spacing = float(spacing)
            ny, nx = values.shape
            self.support = (self.origin[0], self.origin[0] + (nx - 1) * self.spacing,
                            self.origin[1], self.origin[1] + (ny - 1) * self.spacing)
            self._func = self._bilinear
        else:
            if func is None:
                raise ValueError("analytic field needs a function")
            self.support = tuple(float(v) for v in support)
            self._func = func
            self.values = None

    # -- construction -------------------------------------------------
    @classmethod
    def from_grid(cls, values, origin=(0.0, 0.0), spacing=1.0, name="grid"):
        return cls("grid", values=values, origin=origin, spacing=spacing, name=name)

    @classmethod
    def analytic(cls, key: str, **params) -> "ScalarField2D":
        """Build a field from the analytic registry (see :data:`ANALYTIC_FIELDS`)."""
        try:
            builder = ANALYTIC_FIELDS[key]
        except KeyError:
            raise KeyError(f"unknown analytic field {key!r}; known: {sorted(ANALYTIC_FIELDS)}")
        return builder(**params)

    # -- evaluation ---------------------------------------------------
    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        xmin, xmax, ymin, ymax = self.support
        inside = (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        out = np.zeros(x.shape)
        if np.all(inside):
            out = np.asarray(self._func(x, y), dtype=float) * np.ones(x.shape)
        elif np.any(inside):
            out[inside] = self._func(x[inside], y[inside])
        return out

    def points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return self(pts[..., 0], pts[..., 1])

    def _bilinear(self, x, y):
        ny, nx = self.values.shape
        fx = (x - self.origin[0]) / self.spacing
        fy = (y - self.origin[1]) / self.spacing
        ix = np.clip(np.floor(fx).astype(int), 0, nx - 2)
        iy = np.clip(np.floor(fy).astype(int), 0, ny - 2)
        tx = fx - ix
        ty = fy - iy
        v = self.values
        return ((1 - tx) * (1 - ty) * v[iy, ix] + tx * (1 - ty) * v[iy, ix + 1]
                + (1 - tx) * ty * v[iy + 1, ix] + tx * ty * v[iy + 1, ix + 1])

    def breaks(self, p0, u, length) -> list[float]:
        """Arclength positions in (0, length) where the field is not smooth."""
        p0 = np.asarray(p0, dtype=float)
        out = _box_breaks(p0, u, length, self.support)
        if self._breaks_fn is not None:
            out.extend(self._breaks_fn(p0, np.asarray(u, dtype=float), length))
        return out

    def grid_points(self):
        ny, nx = self.values.shape
        xs = self.origin[0] + self.spacing * np.arange(nx)
        ys = self.origin[1] + self.spacing * np.arange(ny)
        return np.meshgrid(xs, ys)

    def __repr__(self):
        return f"ScalarField2D(kind={self.kind!r}, name={self.name!r})"

    # -- I/O ----------------------------------------------------------
    def to_csv(self, path):
        if self.kind != "grid":
            raise ValueError("only grid fields serialize to CSV")
        ny, nx = self.values.shape
        lines = ["nx,ny,ox,oy,spacing",
                 f"{nx},{ny},{self.origin[0]!r},{self.origin[1]!r},{self.spacing!r}"]
        lines += [",".join(repr(float(v)) for v in row) for row in self.values]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ScalarField2D":
        rows = Path(path).read_text().strip().splitlines()
        if rows[0].strip() != "nx,ny,ox,oy,spacing":
            raise ValueError("missing grid CSV header")
        nx, ny, ox, oy, sp = rows[1].split(",")
        values = np.array([[float(v) for v in r.split(",")] for r in rows[2:]])
        if values.shape != (int(ny), int(nx)):
            raise ValueError(f"grid CSV shape {values.shape} does not match header")
        return cls.from_grid(values, (float(ox), float(oy)), float(sp))

    def to_pgm(self, path):
        """16-bit binary PGM plus a JSON sidecar ``<path>.json`` with the scaling."""
        if self.kind != "grid":
            raise ValueError("only grid fields serialize to PGM")
        v = self.values
        lo, hi = float(v.min()), float(v.max())
        scale = (hi - lo) if hi > lo else 1.0
        q = np.rint((v - lo) / scale * 65535).astype(">u2")
        ny, nx = v.shape
        # row 0 of the image is the top (largest y)
        data = q[::-1].tobytes()
        Path(path).write_bytes(f"P5\n{nx} {ny}\n65535\n".encode() + data)
        meta = {"min": lo, "max": hi, "nx": nx, "ny": ny, "ox": self.origin[0],
                "oy": self.origin[1], "spacing": self.spacing}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_pgm(cls, path) -> "ScalarField2D":
        raw = Path(path).read_bytes()
        parts = raw.split(b"\n", 3)
        if parts[0] != b"P5":
            raise ValueError("not a binary PGM")
        nx, ny = (int(t) for t in parts[1].split())
        if int(parts[2]) != 65535:
            raise ValueError("expected a 16-bit PGM")
        q = np.frombuffer(parts[3], dtype=">u2").reshape(ny, nx)[::-1].astype(float)
        meta = json.loads(Path(str(path) + ".json").read_text())
        lo, hi = meta["min"], meta["max"]
        values = lo + q / 65535 * ((hi - lo) if hi > lo else 1.0)
        return cls.from_grid(values, (meta["ox"], meta["oy"]), meta["spacing"])


def integrate_segment(field: ScalarField2D, p0, p1, h: float = 0.0, offset: float = 0.0,
                      density: float = DEFAULT_DENSITY) -> float:
    """Integral of ``field`` along p0 -> p1 weighted by exp(h (t + offset)).

    ``h`` is a signed constant attenuation; ``offset`` is the arclength
    already travelled before p0, so consecutive segments of a broken ray
    chain correctly.  Composite Simpson with ``density`` panels per unit
    length, restarted at the field's break points.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    delta = p1 - p0
    length = float(np.hypot(*delta))
    if length == 0.0:
        raise ValueError("degenerate segment: p0 == p1")
    u = delta / length
    return line_integral(field.points, p0, p1, h=h, offset=offset, density=density,
                         breaks=field.breaks(p0, u, length))


# ---------------------------------------------------------------------------
# analytic registry

def _constant(value: float = 1.0):
    return ScalarField2D("analytic", func=lambda x, y: np.full(np.shape(x), float(value)),
                         name="constant", params={"value": value})


def _gaussian(amplitude=1.0, center=(0.0, 0.0), sigma=0.1):
    cx, cy = map(float, center)
    # beyond this radius the gaussian is below 1e-16 of its peak
    cut = sigma * math.sqrt(2.0 * math.log(1e16))
    s2 = 2.0 * sigma * sigma

    def f(x, y):
        return amplitude * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / s2)

    return ScalarField2D("analytic", (cx - cut, cx + cut, cy - cut, cy + cut), func=f,
                         name="gaussian",
                         params={"amplitude": amplitude, "center": [cx, cy], "sigma": sigma})


def _bump(amplitude=1.0, center=(0.0, 0.0), radius=0.25):
    cx, cy = map(float, center)
    R = float(radius)

    def f(x, y):
        rho2 = ((x - cx) ** 2 + (y - cy) ** 2) / (R * R)
        out = np.zeros(np.shape(rho2))
        m = rho2 < 1.0
        out[m] = amplitude * np.exp(1.0 - 1.0 / (1.0 - rho2[m]))
        return out

    return ScalarField2D("analytic", (cx - R, cx + R, cy - R, cy + R), func=f,
                         breaks_fn=lambda p, u, L: _circle_breaks(p, u, L, (cx, cy), R),
                         name="bump", params={"amplitude": amplitude, "center": [cx, cy],
                                              "radius": R})


def _disk(amplitude=1.0, center=(0.0, 0.0), radius=0.5):
    cx, cy = map(float, center)
    R = float(radius)

    def f(x, y):
        return np.where((x - cx) ** 2 + (y - cy) ** 2 < R * R, float(amplitude), 0.0)

    return ScalarField2D("analytic", (cx - R, cx + R, cy - R, cy + R), func=f,
                         breaks_fn=lambda p, u, L: _circle_breaks(p, u, L, (cx, cy), R),
                         name="disk", params={"amplitude": amplitude, "center": [cx, cy],
                                              "radius": R})


def _radial_harmonic(coefficients=(1.0,), k=1, trig="cos", radius=1.0):
    """(sum_j a_j r^j) * cos(k theta) (or sin) inside the disc of ``radius``."""
    coeffs = np.asarray(coefficients, dtype=float)
    R = float(radius)
    if trig not in ("cos", "sin"):
        raise ValueError("trig must be 'cos' or 'sin'")
    trig_fn = np.cos if trig == "cos" else np.sin

    def f(x, y):
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        val = np.polynomial.polynomial.polyval(r, coeffs) * trig_fn(k * th)
        return np.where(r < R, val, 0.0)

    return ScalarField2D("analytic", (-R, R, -R, R), func=f,
                         breaks_fn=lambda p, u, L: _circle_breaks(p, u, L, (0.0, 0.0), R),
                         name="radial_harmonic",
                         params={"coefficients": coeffs.tolist(), "k": k, "trig": trig,
                                 "radius": R})


def _profile_harmonic(profile: "RadialProfile", k=1, trig="cos"):
    """g(r) * cos(k theta) for a radial profile g on [0, 1]."""
    trig_fn = np.cos if trig == "cos" else np.sin
    lo, hi = profile.domain

    def f(x, y):
        r = np.hypot(x, y)
        val = profile(np.clip(r, lo, hi)) * trig_fn(k * np.arctan2(y, x))
        return np.where((r >= lo) & (r <= hi), val, 0.0)

    return ScalarField2D("analytic", (-hi, hi, -hi, hi), func=f,
                         breaks_fn=lambda p, u, L: _circle_breaks(p, u, L, (0.0, 0.0), hi),
                         name="profile_harmonic",
                         params={"profile": profile.describe(), "k": k, "trig": trig})


def _sum(terms: Sequence[ScalarField2D]):
    terms = list(terms)
    if not terms:
        raise ValueError("sum needs at least one term")
    box = (min(t.support[0] for t in terms), max(t.support[1] for t in terms),
           min(t.support[2] for t in terms), max(t.support[3] for t in terms))

    def f(x, y):
        return sum(t(x, y) for t in terms)

    def brk(p, u, L):
        out = []
        for t in terms:
            out.extend(t.breaks(p, u, L))
        return out

    return ScalarField2D("analytic", box, func=f, breaks_fn=brk, name="sum",
                         params={"terms": [{"name": t.name, "params": t.params} for t in terms]})


ANALYTIC_FIELDS: dict[str, Callable[..., ScalarField2D]] = {
    "constant": _constant,
    "gaussian": _gaussian,
    "bump": _bump,
    "disk": _disk,
    "radial_harmonic": _radial_harmonic,
    "profile_harmonic": _profile_harmonic,
    "sum": _sum,
}


# ---------------------------------------------------------------------------
# radial / axial profiles

@dataclass(frozen=True)
class RadialProfile:
    """A bounded real function g on ``domain`` (default [0, 1]).

    ``compact`` claims that g vanishes outside (eps, 1 - eps) of the domain
    (relative); the claim is checked by sampling at construction.
    """

    func: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float] = (0.0, 1.0)
    name: str = "custom"
    params: dict = dc_field(default_factory=dict)
    compact: bool = False
    eps: float = 0.0

    def __post_init__(self):
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError("profile domain must be a non-empty interval")
        t = np.linspace(lo, hi, 4001)
        v = np.asarray(self.func(t), dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("profile must be bounded and finite")
        if self.compact:
            span = hi - lo
            outside = (t <= lo + self.eps * span) | (t >= hi - self.eps * span)
            if np.any(v[outside] != 0.0):
                raise ValueError(f"profile {self.name!r} is not supported inside "
                                 f"(eps, 1-eps) with eps={self.eps}")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lo, hi = self.domain
        inside = (t >= lo) & (t <= hi)
        return np.where(inside, self.func(np.clip(t, lo, hi)), 0.0)

    def integral(self, density: float = 1024) -> float:
        lo, hi = self.domain
        return line_integral(lambda p: self(p[:, 0]), [lo], [hi], density=density)

    def describe(self) -> dict:
        return {"name": self.name, "domain": list(self.domain), **self.params}

    @classmethod
    def make(cls, key: str, domain=(0.0, 1.0), **params) -> "RadialProfile":
        try:
            return PROFILES[key](domain=tuple(map(float, domain)), **params)
        except KeyError:
            raise KeyError(f"unknown profile {key!r}; known: {sorted(PROFILES)}")


def _p_bump(domain, center=0.5, halfwidth=0.3, amplitude=1.0):
    lo, hi = domain
    c = lo + center * (hi - lo)
    w = halfwidth * (hi - lo)

    def g(t):
        u2 = ((t - c) / w) ** 2
        out = np.zeros(np.shape(u2))
        m = u2 < 1.0
        out[m] = amplitude * np.exp(1.0 - 1.0 / (1.0 - u2[m]))
        return out

    eps = min(center - halfwidth, 1.0 - center - halfwidth) * 0.999
    return RadialProfile(g, domain, "bump", {"center": center, "halfwidth": halfwidth,
                                             "amplitude": amplitude},
                         compact=eps > 0, eps=max(eps, 0.0))


def _p_trig_mode(domain, index=1, amplitude=1.0):
    """index 0: constant; 2j-1: sin(2 pi j t / L); 2j: cos(2 pi j t / L)."""
    lo, hi = domain
    L = hi - lo
    j = (index + 1) // 2
    if index == 0:
        g = lambda t: np.full(np.shape(t), float(amplitude))
    elif index % 2 == 1:
        g = lambda t: amplitude * np.sin(2 * np.pi * j * (t - lo) / L)
    else:
        g = lambda t: amplitude * np.cos(2 * np.pi * j * (t - lo) / L)
    return RadialProfile(g, domain, "trig_mode", {"index": index, "amplitude": amplitude})


def _p_exp_trunc(domain, rate=1.0, amplitude=1.0):
    lo = domain[0]
    return RadialProfile(lambda t: amplitude * np.exp(-rate * (t - lo)), domain, "exp_trunc",
                         {"rate": rate, "amplitude": amplitude})


def _p_constant(domain, value=1.0):
    return RadialProfile(lambda t: np.full(np.shape(t), float(value)), domain, "constant",
                         {"value": value})


def _p_samples(domain, values=(0.0, 0.0)):
    lo, hi = domain
    vals = np.asarray(values, dtype=float)
    xs = np.linspace(lo, hi, len(vals))
    return RadialProfile(lambda t: np.interp(t, xs, vals), domain, "samples",
                         {"values": vals.tolist()})


PROFILES = {
    "bump": _p_bump,
    "trig_mode": _p_trig_mode,
    "exp_trunc": _p_exp_trunc,
    "constant": _p_constant,
    "samples": _p_samples,
}
