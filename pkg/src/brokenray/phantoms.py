"""Analytic phantoms with declared, sampling-verified symmetry classes.

Symmetry classes
----------------
none
    no constraint (planar phantoms on cones).
fold-of-torus-field
    a field on R^n, 2-periodic per axis, with f = f o p for the cube fold p.
even-spherical
    a field on S^2 with f(-x) = f(x).
n-odd-at-boundary
    a field on the cube whose odd normal derivatives of order <= n vanish
    on the faces (what a fold of a smooth torus field satisfies).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SymmetryError
from .fields import ScalarField2D
from .inversion import HarmonicTable, cartesian_sph_harm
from .unfolding import cube_fold_point, octant_fold_point

SYMMETRY_CLASSES = ("none", "fold-of-torus-field", "even-spherical", "n-odd-at-boundary")
SYMMETRY_TOL = 1e-9
SYMMETRY_SAMPLES = 1000


@dataclass
class PhantomSpec:
    key: str
    params: dict = field(default_factory=dict)
    symmetry: str = "none"

    def __post_init__(self):
        if self.symmetry not in SYMMETRY_CLASSES:
            raise ValueError(f"unknown symmetry class {self.symmetry!r}")

    def to_dict(self) -> dict:
        return {"key": self.key, "params": self.params, "symmetry": self.symmetry}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(d["key"], dict(d.get("params", {})), d.get("symmetry", "none"))


# ---------------------------------------------------------------------------
# torus fields

class TorusField:
    """f(x) = sum_m a_m prod_i cos(pi m_i x_i) on R^n, m_i >= 0.

    Such a field is 2-periodic and even in every coordinate, so it equals
    its own cube fold.
    """

    def __init__(self, n: int, terms: dict):
        self.n = int(n)
        self.terms = {tuple(int(v) for v in m): float(a) for m, a in terms.items() if a != 0.0}
        for m in self.terms:
            if len(m) != self.n or min(m) < 0:
                raise ValueError("frequencies must be non-negative integer vectors of length n")
        self._M = np.array(sorted(self.terms), dtype=float).reshape(-1, self.n)
        self._a = np.array([self.terms[tuple(int(v) for v in m)] for m in self._M])

    @property
    def band(self) -> int:
        return int(self._M.max()) if len(self._M) else 0

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.ones((len(pts), len(self._a)))
        for i in range(self.n):
            out *= np.cos(np.pi * np.outer(pts[:, i], self._M[:, i]))
        return out @ self._a

    def derivative(self, pts, axis: int, order: int) -> np.ndarray:
        """Exact partial derivative of the given order along ``axis``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.ones((len(pts), len(self._a)))
        for i in range(self.n):
            arg = np.pi * np.outer(pts[:, i], self._M[:, i])
            if i == axis:
                # d^k/dx^k cos(w x) = w^k cos(w x + k pi / 2)
                w = np.pi * self._M[:, i]
                out *= w ** order * np.cos(arg + order * np.pi / 2)
            else:
                out *= np.cos(arg)
        return out @ self._a

    def fourier_coeffs(self) -> dict:
        """Coefficients c_m of sum c_m exp(i pi m . x) (all sign patterns)."""
        out: dict = {}
        for m, a in self.terms.items():
            nz = [i for i in range(self.n) if m[i]]
            for signs in itertools.product((1, -1), repeat=len(nz)):
                mm = list(m)
                for i, s in zip(nz, signs):
                    mm[i] *= s
                out[tuple(mm)] = out.get(tuple(mm), 0.0) + a / 2 ** len(nz)
        return out

    @classmethod
    def random(cls, n: int, band: int, seed: int = 0, decay: float = 1.0) -> "TorusField":
        rng = np.random.default_rng(seed)
        terms = {}
        for m in itertools.product(range(band + 1), repeat=n):
            terms[m] = float(rng.normal()) / (1.0 + sum(v * v for v in m)) ** (decay / 2)
        return cls(n, terms)

    @classmethod
    def separable(cls, factors) -> "TorusField":
        """prod_i (sum_k factors[i][k] cos(pi k x_i))."""
        n = len(factors)
        terms = {}
        for m in itertools.product(*[range(len(f)) for f in factors]):
            terms[m] = float(np.prod([factors[i][m[i]] for i in range(n)]))
        return cls(n, terms)


# ---------------------------------------------------------------------------
# sphere fields

class SphereField:
    """A function on S^2 given by a callable on (N, 3) unit vectors."""

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], name: str = "", params=None):
        self._func = func
        self.name = name
        self.params = dict(params or {})

    def __call__(self, pts) -> np.ndarray:
        return np.asarray(self._func(np.atleast_2d(np.asarray(pts, dtype=float))), dtype=float)

    @classmethod
    def even_polynomial(cls, coeffs: dict) -> "SphereField":
        """sum a_ijk x^(2i) y^(2j) z^(2k): invariant under every coordinate reflection."""
        items = sorted((tuple(int(v) for v in k), float(a)) for k, a in coeffs.items())

        def f(p):
            x2, y2, z2 = p[:, 0] ** 2, p[:, 1] ** 2, p[:, 2] ** 2
            return sum(a * x2 ** i * y2 ** j * z2 ** k for (i, j, k), a in items)

        return cls(f, "even_polynomial", {"coeffs": [[list(k), a] for k, a in items]})

    @classmethod
    def random_even_polynomial(cls, degree: int, seed: int = 0) -> "SphereField":
        """Random octant-symmetric polynomial of degree 2 * degree (harmonic degree <= 2 * degree)."""
        rng = np.random.default_rng(seed)
        coeffs = {}
        for i, j, k in itertools.product(range(degree + 1), repeat=3):
            if i + j + k <= degree:
                coeffs[(i, j, k)] = float(rng.normal())
        return cls.even_polynomial(coeffs)

    @classmethod
    def harmonics(cls, terms) -> "SphereField":
        """sum c Y_lm over (l, m, c) triples (real orthonormal harmonics)."""
        terms = [(int(l), int(m), float(c)) for l, m, c in terms]
        table = HarmonicTable(max(l for l, _, _ in terms), {(l, m): c for l, m, c in terms})
        return cls(table.evaluate, "harmonics", {"terms": [list(t) for t in terms]})

    def odd_extension(self) -> "SphereField":
        """sign(x y) f(p(x)): antipodally even but odd under single reflections."""
        base = self

        def g(p):
            return np.sign(p[:, 0] * p[:, 1]) * base(octant_fold_point(p))

        return SphereField(g, "odd_extension", {"base": self.name})

    def folded(self) -> "SphereField":
        """f o p: the octant fold, restricted back to S^2."""
        base = self
        return SphereField(lambda p: base(octant_fold_point(p)), "folded", {"base": self.name})


def sphere_harmonic_term(l: int, m: int) -> Callable:
    return lambda p: cartesian_sph_harm(l, m, p)


# ---------------------------------------------------------------------------
# verification

def _sphere_samples(rng, count):
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def symmetry_residual(obj, symmetry: str, seed: int = 0, count: int = SYMMETRY_SAMPLES) -> float:
    """Max sampled violation of the declared symmetry class."""
    rng = np.random.default_rng(seed)
    if symmetry == "none":
        return 0.0
    if symmetry == "fold-of-torus-field":
        x = rng.uniform(-2.0, 4.0, size=(count, obj.n))
        ref = obj(x)
        return max(float(np.max(np.abs(ref - obj(cube_fold_point(x))))),
                   float(np.max(np.abs(ref - obj(x + 2.0)))))
    if symmetry == "even-spherical":
        p = _sphere_samples(rng, count)
        return float(np.max(np.abs(obj(p) - obj(-p))))
    if symmetry == "n-odd-at-boundary":
        worst = 0.0
        for axis in range(obj.n):
            x = rng.uniform(0.0, 1.0, size=(count, obj.n))
            x[:, axis] = rng.integers(0, 2, size=count)
            scale = 1.0
            for order in range(1, obj.n + 1, 2):
                d = obj.derivative(x, axis, order)
                scale = max(scale, float(np.pi * max(obj.band, 1)) ** order)
                worst = max(worst, float(np.max(np.abs(d))) / scale)
        return worst
    raise ValueError(f"unknown symmetry class {symmetry!r}")


# ---------------------------------------------------------------------------
# registry

def _planar(key):
    def build(**params):
        return ScalarField2D.analytic(key, **params)
    return build


def _cone_blob(alpha, radius=0.55, angle_fraction=0.5, kind="gaussian", width=0.08,
               amplitude=1.0):
    """Gaussian (sigma = width) or bump (radius = width) at polar (radius, angle_fraction * alpha)."""
    th = angle_fraction * alpha
    c = (radius * math.cos(th), radius * math.sin(th))
    if kind == "gaussian":
        return ScalarField2D.analytic("gaussian", amplitude=amplitude, center=c, sigma=width)
    if kind == "bump":
        return ScalarField2D.analytic("bump", amplitude=amplitude, center=c, radius=width)
    raise ValueError(f"unknown blob kind {kind!r}")


def _torus_random(n=2, band=8, seed=0, decay=1.0):
    return TorusField.random(n, band, seed, decay)


def _torus_separable(factors):
    return TorusField.separable(factors)


def _torus_cosine(n=2, m=(1, 0), amplitude=1.0):
    return TorusField(n, {tuple(m): amplitude})


def _sphere_poly(degree=3, seed=0, coeffs=None):
    if coeffs is not None:
        return SphereField.even_polynomial({tuple(k): a for k, a in coeffs})
    return SphereField.random_even_polynomial(degree, seed)


def _sphere_harmonics(terms):
    return SphereField.harmonics(terms)


def _sphere_odd(degree=3, seed=0):
    return SphereField.random_even_polynomial(degree, seed).odd_extension()


PHANTOMS = {
    "gaussian": _planar("gaussian"),
    "bump": _planar("bump"),
    "disk": _planar("disk"),
    "radial_harmonic": _planar("radial_harmonic"),
    "cone_blob": _cone_blob,
    "torus_random": _torus_random,
    "torus_separable": _torus_separable,
    "torus_cosine": _torus_cosine,
    "sphere_poly": _sphere_poly,
    "sphere_harmonics": _sphere_harmonics,
    "sphere_odd_extension": _sphere_odd,
}


def make_phantom(spec: PhantomSpec, seed: int = 0):
    """Build the phantom and verify its declared symmetry class.

    Raises SymmetryError when the sampled residual exceeds 1e-9.
    """
    try:
        builder = PHANTOMS[spec.key]
    except KeyError:
        raise KeyError(f"unknown phantom {spec.key!r}; known: {sorted(PHANTOMS)}")
    obj = builder(**spec.params)
    res = symmetry_residual(obj, spec.symmetry, seed)
    if res > SYMMETRY_TOL:
        raise SymmetryError(f"phantom {spec.key!r} violates {spec.symmetry!r} "
                            f"(sampled residual {res:.3e})")
    return obj
