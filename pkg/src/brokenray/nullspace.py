"""Explicit null-space constructions and the attenuated cylinder probe.

* A reflecting tube: f(x, t) = g(t) with zero-mean g integrates to zero
  over every broken ray, because the axial speed is preserved at each
  reflection.
* The unit disc: f = g(r) cos(theta) integrates to zero over every closed
  star-polygon orbit, because the chords of one orbit are rotations of each
  other by a nontrivial root of unity.
* The cylinder with constant attenuation a: the transform of f = g(x) along
  the geodesic of axial speed b is b^{-1} times the Laplace transform of g
  at a / b.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidNullProfile, TangentialHit, TipHit, UnderdeterminedProbe
from .fields import RadialProfile, ScalarField2D, line_integral, simpson_pieces
from .planar import RectTube, rect_tube_trace
from .transforms import AttenuationSpec, brt_forward

TUBE_DENSITY = 1024


@dataclass
class CheckReport:
    check: str
    parameters: dict
    value: float
    value_name: str = "max_residual"
    passed: bool | None = None
    extra: dict = field(default_factory=dict)
    # per-sample table (header, rows) for CSV output; not part of the JSON report
    samples: tuple | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"check": self.check, "parameters": self.parameters,
               self.value_name: self.value, "pass": self.passed}
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# tube

def _axial_field(tube: RectTube, g: RadialProfile) -> ScalarField2D:
    return ScalarField2D("analytic", (0.0, tube.width, 0.0, tube.length),
                         func=lambda x, y: g(y), name="axial", params={"g": g.describe()})


def random_tube_rays(tube: RectTube, count: int, rng: np.random.Generator,
                     max_angle: float = math.radians(84.0)):
    """``count`` broken rays from uniform bottom points with angles to the axis in
    [-max_angle, max_angle].  Rays through a corner are redrawn."""
    rays = []
    while len(rays) < count:
        x = rng.uniform(0.0, tube.width)
        psi = rng.uniform(-max_angle, max_angle)
        try:
            rays.append(rect_tube_trace(tube, (x, 0.0), (math.sin(psi), math.cos(psi))))
        except (TipHit, TangentialHit, ValueError):
            continue
    return rays


def tube_ray_integrals(tube: RectTube, g: RadialProfile, rays, density: float = TUBE_DENSITY):
    """Integrals of f(x, t) = g(t) over each ray, and the closed forms (1 / v_axial) int g."""
    f = _axial_field(tube, g)
    mean = g.integral(density)
    vals = np.array([brt_forward(f, ray, density=density) for ray in rays])
    v_axial = np.array([abs(ray.directions()[0][1]) for ray in rays])
    return vals, mean / v_axial


def tube_null_check(tube: RectTube, g: RadialProfile, n_rays: int = 1000, seed: int = 0,
                    density: float = TUBE_DENSITY, tol: float = 1e-9) -> CheckReport:
    """Max |integral| over random broken rays of the tube for a zero-mean profile."""
    if tuple(g.domain) != (0.0, tube.length):
        g = RadialProfile(g.func, (0.0, tube.length), g.name, g.params)
    mean = g.integral(density)
    if abs(mean) > 1e-10:
        raise InvalidNullProfile(f"profile mean {mean:.3e} is not zero")
    rng = np.random.default_rng(seed)
    rays = random_tube_rays(tube, n_rays, rng)
    vals, closed = tube_ray_integrals(tube, g, rays, density)
    axial = max(float(np.ptp([abs(d[1]) for d in ray.directions()])) for ray in rays)
    worst = float(np.max(np.abs(vals)))
    rows = [(float(r.vertices[0][0]), float(math.atan2(*r.directions()[0])), r.reflections, float(v))
            for r, v in zip(rays, vals)]
    return CheckReport("tube-null", {"tube": tube.describe(), "g": g.describe(),
                                     "rays": n_rays, "seed": seed, "density": density},
                       worst, passed=bool(worst < tol),
                       extra={"max_closed_form_deviation": float(np.max(np.abs(vals - closed))),
                              "max_axial_speed_variation": axial,
                              "max_reflections": max(r.reflections for r in rays)},
                       samples=(("x0", "angle_to_axis", "reflections", "integral"), rows))


def tube_witness(tube: RectTube, g: RadialProfile, n_rays: int = 1000, seed: int = 0,
                 density: float = TUBE_DENSITY) -> CheckReport:
    """Largest |integral| over random rays for a profile without the zero-mean condition."""
    if tuple(g.domain) != (0.0, tube.length):
        g = RadialProfile(g.func, (0.0, tube.length), g.name, g.params)
    rays = random_tube_rays(tube, n_rays, np.random.default_rng(seed))
    vals, _ = tube_ray_integrals(tube, g, rays, density)
    k = int(np.argmax(np.abs(vals)))
    return CheckReport("tube-witness", {"tube": tube.describe(), "g": g.describe(),
                                        "rays": n_rays, "seed": seed},
                       float(abs(vals[k])), "max_abs_integral",
                       extra={"witness_ray": rays[k].to_dict()})


# ---------------------------------------------------------------------------
# disc

def _orbit_chord_integrals(func, q, p, phases, density):
    """Sum over each orbit's chords of the integral of ``func`` (vectorised).

    All chords of one orbit have the same length, so they share Simpson nodes.
    Returns (integrals per phase, orbit length).
    """
    chord = 2.0 * math.sin(math.pi * p / q)
    t, w = simpson_pieces(chord, (), density)
    j = np.arange(q)
    ang0 = phases[:, None] + 2.0 * math.pi * p * j[None, :] / q        # (P, q)
    ang1 = ang0 + 2.0 * math.pi * p / q
    v0 = np.stack((np.cos(ang0), np.sin(ang0)), axis=-1)               # (P, q, 2)
    d = np.stack((np.cos(ang1), np.sin(ang1)), axis=-1) - v0
    d /= chord
    pts = v0[:, :, None, :] + t[None, None, :, None] * d[:, :, None, :]
    vals = func(pts[..., 0], pts[..., 1])                              # (P, q, nodes)
    return (vals @ w).sum(axis=1), q * chord


def orbit_family(Q: int):
    """All (q, p) with 2 <= q <= Q, 0 < p < q, gcd(p, q) = 1."""
    return [(q, p) for q in range(2, Q + 1) for p in range(1, q) if math.gcd(p, q) == 1]


def disk_null_check(g: RadialProfile, Q: int = 64, n_phases: int = 32,
                    density: float = 64, tol: float = 1e-9) -> CheckReport:
    """Max over star-polygon orbits of |integral of g(r) cos(theta)| / orbit length."""
    phases = 2.0 * math.pi * np.arange(n_phases) / n_phases

    def f(x, y):
        r = np.hypot(x, y)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(r > 0, x / np.where(r > 0, r, 1.0), 0.0)
        return g(r) * c

    worst, arg = 0.0, None
    rows = []
    for q, p in orbit_family(Q):
        vals, length = _orbit_chord_integrals(f, q, p, phases, density)
        k = int(np.argmax(np.abs(vals)))
        rows.append((q, p, float(phases[k]), float(abs(vals[k]) / length)))
        if abs(vals[k]) / length > worst or arg is None:
            worst = max(worst, abs(vals[k]) / length)
            arg = (q, p, float(phases[k]))
    return CheckReport("disk-null", {"g": g.describe(), "Q": Q, "phases": n_phases,
                                     "density": density},
                       worst, passed=bool(worst < tol),
                       extra={"orbits": len(orbit_family(Q)) * n_phases,
                              "worst_orbit": {"q": arg[0], "p": arg[1], "phase": arg[2]}},
                       samples=(("q", "p", "worst_phase", "normalized_residual"), rows))


def disk_witness(g: RadialProfile, Q: int = 64, n_phases: int = 32,
                 density: float = 64) -> CheckReport:
    """For f = g(r) (no angular factor): the orbit with the largest normalized integral."""
    phases = 2.0 * math.pi * np.arange(n_phases) / n_phases
    best, arg = -math.inf, None
    for q, p in orbit_family(Q):
        vals, length = _orbit_chord_integrals(lambda x, y: g(np.hypot(x, y)), q, p, phases,
                                              density)
        k = int(np.argmax(np.abs(vals)))
        if abs(vals[k]) / length > best:
            best = abs(vals[k]) / length
            arg = (q, p, float(phases[k]))
    return CheckReport("disk-witness", {"g": g.describe(), "Q": Q, "phases": n_phases},
                       float(best), "max_normalized_integral",
                       extra={"witness_orbit": {"q": arg[0], "p": arg[1], "phase": arg[2]}})


# ---------------------------------------------------------------------------
# cylinder with constant attenuation

def cylinder_att_forward(g: RadialProfile, a: float, b: float,
                         density: float = 256) -> float:
    """Attenuated integral of f = g(x) along the unit-speed geodesic of axial speed b.

    The cylinder [0, L] x S^1 is unrolled; the geodesic is
    t -> (b t, sqrt(1 - b^2) t), t in [0, L / b], with weight e^{-a t}.
    """
    if not (0.0 < b <= 1.0):
        raise ValueError("axial speed b must lie in (0, 1]")
    if a < 0:
        raise ValueError("attenuation a must be non-negative")
    lo, L = g.domain
    T = (L - lo) / b
    p0 = np.array([lo, 0.0])
    p1 = np.array([L, math.sqrt(max(0.0, 1.0 - b * b)) * T])
    return line_integral(lambda pts: g(pts[:, 0]), p0, p1,
                         h=AttenuationSpec.decay(a).h, density=density)


def laplace_transform(g: RadialProfile, s: float, density: float = 256) -> float:
    """int_lo^L e^{-s (u - lo)} g(u) du by composite Simpson."""
    lo, L = g.domain
    return line_integral(lambda pts: g(pts[:, 0]), [lo], [L], h=-s, density=density)


def cylinder_identity_residual(g: RadialProfile, a: float, b: float,
                               density: float = 256) -> float:
    """|forward - b^{-1} Lap(g)(a / b)| with matched Simpson nodes.

    The Laplace integral runs over a length b times shorter, so its node
    density is divided by b; the panels then correspond one to one.
    """
    fwd = cylinder_att_forward(g, a, b, density)
    lap = laplace_transform(g, a / b, density / b) / b
    return abs(fwd - lap)


def cylinder_null_residual(length: float = 1.0, n_slopes: int = 64,
                           density: float = 256) -> float:
    """Without attenuation every zero-mean g is invisible; max over slopes for g = sin(2 pi x / L)."""
    g = RadialProfile.make("trig_mode", (0.0, length), index=1)
    slopes = np.linspace(1.0 / n_slopes, 1.0, n_slopes)
    return max(abs(cylinder_att_forward(g, 0.0, b, density)) for b in slopes)


@dataclass
class ProbeResult:
    a: float
    length: float
    sigma_min: float
    null_vector: np.ndarray
    singular_values: np.ndarray
    matrix: np.ndarray
    slopes: np.ndarray

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("null_vector", "singular_values", "slopes"):
            d[k] = np.asarray(d[k]).tolist()
        d.pop("matrix")
        return d


def cylinder_injectivity_probe(a: float, length: float = 1.0, M: int = 8, n_slopes: int = 64,
                               density: float = 256) -> ProbeResult:
    """Smallest singular value of the map from trig-mode coefficients of g to
    the attenuated cylinder transform on the slope grid b = 1/n, 2/n, ..., 1."""
    if M > n_slopes:
        raise UnderdeterminedProbe(f"{M} basis functions but only {n_slopes} slopes")
    slopes = np.linspace(1.0 / n_slopes, 1.0, n_slopes)
    modes = [RadialProfile.make("trig_mode", (0.0, length), index=k) for k in range(M)]
    A = np.array([[cylinder_att_forward(g, a, b, density) for g in modes] for b in slopes])
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    return ProbeResult(float(a), float(length), float(s[-1]), vt[-1], s, A, slopes)
