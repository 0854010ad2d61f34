"""Command line scenario runner.

A scenario is a small TOML file naming a geometry, a phantom, transform
resolutions, an inversion method and pass thresholds.  Every subcommand
takes ``--config`` (a path, or the name of a bundled scenario) and writes
CSV / PGM / JSON tables plus PNG figures into ``--out``.

Exit codes: 0 pass, 1 computational failure, 2 configuration error,
3 a declared threshold was missed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import re
import shutil
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import plotting
from .errors import BrokenRayError, ConfigError, TraceError
from .fields import RadialProfile, ScalarField2D
from .inversion import (GridSpec, reconstruct_cone_general, reconstruct_cone_integer,
                        reconstruct_cube_periodic, reconstruct_octant_periodic)
from .nullspace import (cylinder_identity_residual, cylinder_injectivity_probe,
                        cylinder_null_residual, disk_null_check, disk_witness, tube_null_check,
                        tube_witness)
from .phantoms import PhantomSpec, TorusField, make_phantom
from .planar import BoundaryRadius, ConeDomain, RectTube, rect_tube_trace, trace_broken_ray
from .transforms import (AttenuationSpec, assemble_sinogram, brt_forward, default_angles,
                         default_offsets, periodic_brt)
from .unfolding import DihedralUnfolding

log = logging.getLogger("brokenray")

EXIT_PASS, EXIT_FAILURE, EXIT_CONFIG, EXIT_THRESHOLD = 0, 1, 2, 3

# section -> key -> accepted python types (after TOML parsing)
NUM = (int, float)
SCHEMA = {
    "": {"name": (str,), "description": (str,), "seed": (int,)},
    "geometry": {"kind": (str,), "alpha": NUM + (str,), "h": NUM + (dict,),
                 "width": NUM, "length": NUM, "n": (int,)},
    "phantom": {"key": (str,), "symmetry": (str,), "params": (dict,)},
    "transform": {"angles": (int,), "offsets": (int,), "s_max": NUM, "density": NUM,
                  "band": (int,), "lmax": (int,), "attenuation": NUM, "slopes": (int,),
                  "modes": (int,), "unfolded": (bool,)},
    "inversion": {"method": (str,), "grid": (int,), "extent": NUM, "window": (str,),
                  "max_iter": (int,), "rtol": NUM, "oversample": (int,),
                  "both_orientations": (bool,), "support_radius": NUM},
    "check": {"profile": (str,), "profile_params": (dict,), "witness_profile": (str,),
              "witness_params": (dict,), "rays": (int,), "Q": (int,), "phases": (int,),
              "density": NUM, "identity_grid": (int,), "test_points": (int,)},
    "trace": {"start": (list,), "direction": (list,), "count": (int,),
              "max_reflections": (int,)},
    "thresholds": {"rel_l2_error": NUM, "max_abs_error": NUM, "max_residual": NUM,
                   "sigma_min": NUM, "sector_consistency_ratio": NUM,
                   "identity_residual": NUM, "null_residual": NUM, "witness": NUM},
    "output": {"figures": (bool,)},
}

GEOMETRIES = ("cone", "tube", "disk", "cube", "octant", "cylinder")
METHODS = {
    "fbp": ("cone",), "cgls": ("cone",), "fourier": ("cube",), "funk": ("octant",),
    "tube-null": ("tube",), "disk-null": ("disk",), "cylinder-probe": ("cylinder",),
    "trace": ("cone", "tube"),
}
SUBCOMMANDS = {
    "trace": ("trace",),
    "forward": ("trace",),
    "sinogram": ("fbp", "cgls"),
    "reconstruct": ("fbp", "cgls"),
    "periodic-cube": ("fourier",),
    "octant": ("funk",),
    "null-check": ("tube-null", "disk-null"),
    "att-probe": ("cylinder-probe",),
    "run": tuple(METHODS),
}


# ---------------------------------------------------------------------------
# configuration

def _key_line(text: str, section: str, key: str) -> int | None:
    """1-based line of ``key = ...`` inside ``[section]`` (None when not found)."""
    current = ""
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for no, line in enumerate(text.splitlines(), 1):
        head = re.match(r"^\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            if current == f"{section}.{key}" if section else current == key:
                return no
            continue
        if current == section and pat.match(line):
            return no
    return None


def _where(path, text, section, key=None) -> str:
    line = _key_line(text, section, key) if key else None
    if line is None and section:
        for no, ln in enumerate(text.splitlines(), 1):
            if re.match(r"^\s*\[" + re.escape(section) + r"\]", ln):
                line = no
                break
    return f"{path}:{line}" if line else str(path)


def parse_angle(value) -> float:
    """Float, or a string such as ``"pi/3"``, ``"2pi/3"``, ``"2*pi/7"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = re.fullmatch(r"\s*([0-9.]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*", str(value))
    if not m:
        raise ValueError(f"cannot read angle {value!r}")
    num = float(m.group(1)) if m.group(1) else 1.0
    den = float(m.group(2)) if m.group(2) else 1.0
    return num * math.pi / den


def resolve_config(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = resources.files("brokenray") / "scenarios" / f"{name_or_path}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"{name_or_path}: no such file or bundled scenario "
                      f"(bundled: {', '.join(bundled_scenarios())})")


def bundled_scenarios() -> list[str]:
    folder = resources.files("brokenray") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def load_config(path) -> dict:
    """Parse and validate a scenario file; raises ConfigError with file:line context."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for key, value in cfg.items():
        if isinstance(value, dict) and key in SCHEMA and key != "":
            allowed = SCHEMA[key]
            for sub, v in value.items():
                if sub not in allowed:
                    raise ConfigError(f"{_where(path, text, key, sub)}: unknown key {sub!r} in "
                                      f"[{key}] (allowed: {', '.join(sorted(allowed))})")
                if not isinstance(v, allowed[sub]) or (isinstance(v, bool) and bool not in allowed[sub]):
                    raise ConfigError(f"{_where(path, text, key, sub)}: [{key}] {sub} has the wrong "
                                      f"type {type(v).__name__}")
        elif key in SCHEMA[""]:
            if not isinstance(value, SCHEMA[""][key]) or isinstance(value, bool):
                raise ConfigError(f"{_where(path, text, '', key)}: {key} has the wrong type")
        else:
            raise ConfigError(f"{_where(path, text, '', key)}: unknown key or table {key!r}")

    geo = cfg.get("geometry", {})
    kind = geo.get("kind")
    if kind not in GEOMETRIES:
        raise ConfigError(f"{_where(path, text, 'geometry', 'kind')}: geometry kind must be one "
                          f"of {', '.join(GEOMETRIES)}")
    method = cfg.get("inversion", {}).get("method")
    if method not in METHODS:
        raise ConfigError(f"{_where(path, text, 'inversion', 'method')}: method must be one of "
                          f"{', '.join(METHODS)}")
    if kind not in METHODS[method]:
        raise ConfigError(f"{_where(path, text, 'inversion', 'method')}: method {method!r} does "
                          f"not apply to a {kind} geometry")
    if kind == "cone":
        try:
            alpha = parse_angle(geo.get("alpha", "pi/2"))
            h = BoundaryRadius.from_spec(geo.get("h", 1.0))
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"{_where(path, text, 'geometry', 'alpha')}: {exc}") from None
        if not 0 < alpha <= 2 * math.pi:
            raise ConfigError(f"{_where(path, text, 'geometry', 'alpha')}: alpha must lie in (0, 2 pi]")
        if method == "fbp" and DihedralUnfolding(ConeDomain(alpha, h)).m is None:
            raise ConfigError(f"{_where(path, text, 'inversion', 'method')}: FBP needs an "
                              "opening angle pi/m with integer m; use method = \"cgls\"")
    if method in ("fbp", "cgls", "fourier", "funk") or method == "trace" and "phantom" in cfg:
        if "key" not in cfg.get("phantom", {}):
            raise ConfigError(f"{_where(path, text, 'phantom')}: [phantom] key is required "
                              f"for method {method!r}")
    if "phantom" in cfg:
        try:
            PhantomSpec.from_dict(cfg["phantom"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{_where(path, text, 'phantom', 'symmetry')}: {exc}") from None
    if method in ("tube-null", "disk-null") and "profile" not in cfg.get("check", {}):
        raise ConfigError(f"{_where(path, text, 'check')}: [check] profile is required")
    cfg.setdefault("name", path.stem)
    cfg.setdefault("seed", 0)
    return cfg


# ---------------------------------------------------------------------------
# outputs

def _json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")


def evaluate_thresholds(values: dict, thresholds: dict) -> dict:
    """Per-threshold verdicts.  ``sigma_min`` and ``witness`` are lower bounds,
    ``sector_consistency_ratio`` bounds consistency / error, the rest are upper bounds."""
    out = {}
    for key, limit in sorted(thresholds.items()):
        if key == "sector_consistency_ratio":
            v = values.get("sector_consistency")
            err = values.get("rel_l2_error")
            ok = v is not None and err is not None and v < limit * err
        elif key in ("sigma_min", "witness"):
            v = values.get(key)
            ok = v is not None and v > limit
        else:
            v = values.get(key)
            ok = v is not None and v < limit
        out[key] = {"limit": limit, "value": v, "pass": bool(ok)}
    return out


# ---------------------------------------------------------------------------
# geometry / phantom builders

def cone_from_config(cfg) -> DihedralUnfolding:
    geo = cfg["geometry"]
    return DihedralUnfolding(ConeDomain(parse_angle(geo.get("alpha", "pi/2")),
                                        BoundaryRadius.from_spec(geo.get("h", 1.0))))


def phantom_from_config(cfg, geometry=None):
    spec = PhantomSpec.from_dict(cfg["phantom"])
    if spec.key == "cone_blob" and "alpha" not in spec.params and geometry is not None:
        spec = PhantomSpec(spec.key, {"alpha": geometry.alpha, **spec.params}, spec.symmetry)
    return make_phantom(spec, seed=cfg["seed"]), spec


def _random_cone_rays(u, count, rng, max_reflections):
    dom = u.source
    rays = []
    while len(rays) < count:
        th = rng.uniform(0.02, 0.98) * dom.alpha
        r = float(dom.h(th)) * (1 - 1e-12)
        start = np.array([r * math.cos(th), r * math.sin(th)])
        psi = th + math.pi + rng.uniform(-1.3, 1.3)
        try:
            rays.append(trace_broken_ray(dom, start, (math.cos(psi), math.sin(psi)),
                                         max_reflections=max_reflections))
        except TraceError:
            continue
    return rays


def _random_tube_rays(tube, count, rng, max_reflections):
    rays = []
    while len(rays) < count:
        x = rng.uniform(0.0, tube.width)
        psi = rng.uniform(-1.3, 1.3)
        try:
            rays.append(rect_tube_trace(tube, (x, 0.0), (math.sin(psi), math.cos(psi)),
                                        max_reflections=max_reflections))
        except TraceError:
            continue
    return rays


# ---------------------------------------------------------------------------
# runners; each writes into ``out`` and returns (values, extra metrics)

def run_trace(cfg, out: Path, threads: int, figures: bool, forward: bool = True):
    geo = cfg["geometry"]
    tr = cfg.get("trace", {})
    maxr = tr.get("max_reflections", 64)
    rng = np.random.default_rng(cfg["seed"])
    if geo["kind"] == "cone":
        u = cone_from_config(cfg)
        domain = u.source
        if "start" in tr:
            rays = [trace_broken_ray(domain, tr["start"], tr.get("direction", [-1.0, 0.0]),
                                     max_reflections=maxr)]
        else:
            rays = _random_cone_rays(u, tr.get("count", 8), rng, maxr)
    else:
        domain = RectTube(float(geo.get("width", 1.0)), float(geo.get("length", 3.0)))
        if "start" in tr:
            rays = [rect_tube_trace(domain, tr["start"], tr.get("direction", [0.0, 1.0]),
                                    max_reflections=maxr)]
        else:
            rays = _random_tube_rays(domain, tr.get("count", 8), rng, maxr)
    rows = []
    for i, ray in enumerate(rays):
        for j, v in enumerate(ray.vertices):
            rows.append((i, j, float(v[0]), float(v[1])))
    _csv(out / "vertices.csv", ("ray", "vertex", "x", "y"), rows)
    _json(out / "rays.json", [ray.to_dict() for ray in rays])
    values = {"rays": len(rays), "max_reflections": max(r.reflections for r in rays)}
    if forward and "phantom" in cfg:
        f, _ = phantom_from_config(cfg, domain if isinstance(domain, ConeDomain) else None)
        a = float(cfg.get("transform", {}).get("attenuation", 0.0))
        att = AttenuationSpec.decay(a) if a else None
        dens = cfg.get("transform", {}).get("density", 64)
        vals = [brt_forward(f, ray, att, density=dens) for ray in rays]
        _csv(out / "forward.csv", ("ray", "length", "reflections", "value"),
             [(i, r.total_length, r.reflections, v) for i, (r, v) in enumerate(zip(rays, vals))])
        values["max_abs_value"] = float(np.max(np.abs(vals)))
    if figures:
        plotting.rays_figure(rays, out / "rays.png", domain)
    return values, {}


def _cone_sinogram(cfg, u, f, threads):
    tf = cfg.get("transform", {})
    dens = tf.get("density", 64)
    angles = default_angles(tf.get("angles", 360))
    offsets = default_offsets(tf.get("s_max", 1.05 * u.source.h.hmax), tf.get("offsets", 257))
    sino = assemble_sinogram(u, lambda ray: brt_forward(f, ray, density=dens), angles, offsets,
                             threads=threads)
    return sino, dens


def run_sinogram(cfg, out: Path, threads: int, figures: bool):
    u = cone_from_config(cfg)
    f, _ = phantom_from_config(cfg, u)
    sino, _ = _cone_sinogram(cfg, u, f, threads)
    sino.to_csv(out / "sinogram.csv")
    if figures:
        plotting.sinogram_figure(sino, out / "sinogram.png")
    return {"excluded_fraction": sino.excluded_fraction}, {}


def run_reconstruct(cfg, out: Path, threads: int, figures: bool):
    u = cone_from_config(cfg)
    f, _ = phantom_from_config(cfg, u)
    inv = cfg["inversion"]
    sino, dens = _cone_sinogram(cfg, u, f, threads)
    oracle = lambda ray: brt_forward(f, ray, density=dens)  # noqa: E731
    extent = inv.get("extent", 1.05 * u.source.h.hmax)
    if inv["method"] == "fbp":
        grid = GridSpec(inv.get("grid", 512), extent)
        rec = reconstruct_cone_integer(u, oracle, grid, window=inv.get("window", "hann"),
                                       threads=threads, sinogram=sino)
    else:
        grid = GridSpec(inv.get("grid", 128), extent)
        rec = reconstruct_cone_general(u, oracle, grid, max_iter=inv.get("max_iter", 500),
                                       rtol=inv.get("rtol", 1e-6), threads=threads,
                                       sinogram=sino, oversample=inv.get("oversample", 4),
                                       support_radius=inv.get("support_radius", 0.0),
                                       both_orientations=inv.get("both_orientations", True))
    err = rec.error_against(f)
    sino.to_csv(out / "sinogram.csv")
    rec.field.to_csv(out / "reconstruction.csv")
    rec.field.to_pgm(out / "reconstruction.pgm")
    values = {"rel_l2_error": err, "excluded_fraction": sino.excluded_fraction}
    extra = {"grid": grid.n, "extent": extent, "info": rec.info}
    if rec.sector_consistency is not None:
        values["sector_consistency"] = rec.sector_consistency
    if rec.residuals is not None:
        res = np.asarray(rec.residuals)
        values["residual_monotone"] = bool(np.all(np.diff(res) <= 1e-12 * res[0]))
        _csv(out / "residuals.csv", ("iteration", "residual"), enumerate(res.tolist()))
    if figures:
        X, Y = rec.field.grid_points()
        truth = ScalarField2D.from_grid(np.where(rec.mask, f(X, Y), 0.0), rec.field.origin,
                                        rec.field.spacing)
        plotting.sinogram_figure(sino, out / "sinogram.png")
        plotting.comparison_figure(truth, rec.field, out / "reconstruction.png", rec.mask)
        if rec.residuals is not None:
            plotting.residuals_figure(rec.residuals, out / "residuals.png")
    return values, extra


def _test_points(rng, count, dim, octant=False):
    if octant:
        p = np.abs(rng.normal(size=(count, 3)))
        return p / np.linalg.norm(p, axis=1)[:, None]
    return rng.uniform(0.0, 1.0, size=(count, dim))


def run_cube(cfg, out: Path, threads: int, figures: bool):
    n = int(cfg["geometry"].get("n", 2))
    f, _ = phantom_from_config(cfg)
    if not isinstance(f, TorusField) or f.n != n:
        raise ConfigError(f"phantom must be a torus field of dimension {n}")
    tf = cfg.get("transform", {})
    band = tf.get("band", f.band)
    dens = tf.get("density", 256)
    rows = []

    def data(orbit):
        v = periodic_brt(f, orbit, density=dens)
        rows.append((orbit, v))
        return v

    rec = reconstruct_cube_periodic(n, data, band)
    rng = np.random.default_rng(cfg["seed"])
    pts = _test_points(rng, cfg.get("check", {}).get("test_points", 2000), n)
    err = float(np.max(np.abs(rec(pts).real - f(pts))))
    truth = f.fourier_coeffs()
    keys = sorted(rec.table.coeffs)
    coef_err = [abs(rec.table[m] - truth.get(m, 0.0)) for m in keys]
    _csv(out / "coefficients.csv", [f"m{i + 1}" for i in range(n)] + ["re", "im", "true", "abs_error"],
         [(*m, rec.table[m].real, rec.table[m].imag, truth.get(m, 0.0), e)
          for m, e in zip(keys, coef_err)])
    _csv(out / "orbit_data.csv", ("orbit", "reflections", "length", "value"),
         [(i, o.reflections, o.total_length, v) for i, (o, v) in enumerate(rows)])
    values = {"max_abs_error": err, "max_coefficient_error": float(max(coef_err)),
              "orbits": len(rows)}
    if figures:
        plotting.scatter_figure(np.arange(len(keys)), coef_err, out / "coefficient_error.png",
                                "coefficient index", "abs error", "Fourier coefficient error")
    return values, {"band": band, "density": dens}


def run_octant(cfg, out: Path, threads: int, figures: bool):
    f, _ = phantom_from_config(cfg)
    tf = cfg.get("transform", {})
    lmax = tf.get("lmax", 6)
    dens = tf.get("density", 64)
    unfolded = tf.get("unfolded", False)
    rows = []

    def data(orbit):
        v = periodic_brt(f, orbit, density=dens, unfolded=unfolded)
        rows.append((*orbit.normal, v))
        return v

    rec = reconstruct_octant_periodic(data, lmax)
    rng = np.random.default_rng(cfg["seed"])
    pts = _test_points(rng, cfg.get("check", {}).get("test_points", 2000), 3, octant=True)
    err = float(np.max(np.abs(rec(pts) - f(pts))))
    keys = sorted(rec.table.coeffs)
    _csv(out / "harmonics.csv", ("l", "m", "coefficient"),
         [(l, m, rec.table.coeffs[(l, m)]) for l, m in keys])
    _csv(out / "orbit_data.csv", ("w1", "w2", "w3", "value"), rows)
    values = {"max_abs_error": err, "flip_asymmetry": rec.flip_asymmetry,
              "odd_energy": rec.table.odd_energy}
    if figures:
        per_l = [math.sqrt(sum(rec.table.coeffs[k] ** 2 for k in keys if k[0] == l))
                 for l in range(lmax + 1)]
        plotting.bars_figure(range(lmax + 1), per_l, out / "harmonic_energy.png",
                             "harmonic energy per degree", "norm")
    return values, {"lmax": lmax, "density": dens, "unfolded": unfolded}


def _profile(cfg, key, params_key, domain):
    chk = cfg.get("check", {})
    return RadialProfile.make(chk[key], domain, **chk.get(params_key, {}))


def run_null(cfg, out: Path, threads: int, figures: bool):
    chk = cfg.get("check", {})
    method = cfg["inversion"]["method"]
    if method == "tube-null":
        geo = cfg["geometry"]
        tube = RectTube(float(geo.get("width", 1.0)), float(geo.get("length", 3.0)))
        g = _profile(cfg, "profile", "profile_params", (0.0, tube.length))
        dens = chk.get("density", 1024)
        rep = tube_null_check(tube, g, chk.get("rays", 1000), cfg["seed"], dens)
        values = {"max_residual": rep.value}
        extra = {"report": rep.to_dict()}
        if "witness_profile" in chk:
            gw = _profile(cfg, "witness_profile", "witness_params", (0.0, tube.length))
            wit = tube_witness(tube, gw, chk.get("rays", 1000), cfg["seed"], dens)
            values["witness"] = wit.value
            extra["witness"] = wit.to_dict()
    else:
        g = _profile(cfg, "profile", "profile_params", (0.0, 1.0))
        Q, P, dens = chk.get("Q", 64), chk.get("phases", 32), chk.get("density", 64)
        rep = disk_null_check(g, Q, P, dens)
        values = {"max_residual": rep.value}
        extra = {"report": rep.to_dict()}
        if "witness_profile" in chk:
            gw = _profile(cfg, "witness_profile", "witness_params", (0.0, 1.0))
            wit = disk_witness(gw, min(Q, 16), P, dens)
            values["witness"] = wit.value
            extra["witness"] = wit.to_dict()
    header, rows = rep.samples
    _csv(out / "samples.csv", header, rows)
    if figures:
        plotting.scatter_figure(np.arange(len(rows)), [r[-1] for r in rows],
                                out / "residuals.png", "sample", "|integral|", rep.check)
    return values, extra


def run_probe(cfg, out: Path, threads: int, figures: bool):
    geo, tf, chk = cfg["geometry"], cfg.get("transform", {}), cfg.get("check", {})
    L = float(geo.get("length", 1.0))
    a = float(tf.get("attenuation", 1.0))
    M, S = tf.get("modes", 8), tf.get("slopes", 64)
    dens = tf.get("density", 256)
    probe = cylinder_injectivity_probe(a, L, M, S, dens)
    G = chk.get("identity_grid", 16)
    ident = 0.0
    slopes = np.linspace(1.0 / G, 1.0, G)
    for k in range(G):
        g = RadialProfile.make("trig_mode", (0.0, L), index=k)
        for b in slopes:
            ident = max(ident, cylinder_identity_residual(g, a, b, dens))
    values = {"sigma_min": probe.sigma_min, "identity_residual": ident,
              "null_residual": cylinder_null_residual(L, S, dens)}
    _csv(out / "singular_values.csv", ("index", "sigma"), enumerate(probe.singular_values.tolist()))
    _csv(out / "probe_matrix.csv", ["b"] + [f"mode{k}" for k in range(M)],
         [(b, *row) for b, row in zip(probe.slopes.tolist(), probe.matrix.tolist())])
    if figures:
        plotting.bars_figure(range(len(probe.singular_values)), probe.singular_values,
                             out / "singular_values.png", f"singular values, a = {a:g}", "sigma")
    return values, {"probe": probe.to_dict()}


RUNNERS = {
    "trace": run_trace, "fbp": run_reconstruct, "cgls": run_reconstruct, "fourier": run_cube,
    "funk": run_octant, "tube-null": run_null, "disk-null": run_null,
    "cylinder-probe": run_probe,
}


# ---------------------------------------------------------------------------
# entry point

def execute(command: str, cfg: dict, out: Path, threads: int = 1) -> int:
    """Run ``command`` on a validated config, writing all outputs atomically into ``out``."""
    method = cfg["inversion"]["method"]
    if method not in SUBCOMMANDS[command]:
        raise ConfigError(f"subcommand {command!r} cannot run method {method!r} "
                          f"(accepts: {', '.join(SUBCOMMANDS[command])})")
    figures = cfg.get("output", {}).get("figures", True)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        t0 = time.perf_counter()
        if command == "sinogram":
            values, extra = run_sinogram(cfg, tmp, threads, figures)
        elif command == "trace":
            values, extra = run_trace(cfg, tmp, threads, figures, forward=False)
        else:
            values, extra = RUNNERS[method](cfg, tmp, threads, figures)
        log.info("%s finished in %.1f s", cfg["name"], time.perf_counter() - t0)
        verdicts = evaluate_thresholds(values, cfg.get("thresholds", {}))
        if "residual_monotone" in values:
            mono = values["residual_monotone"]
            verdicts["residual_monotone"] = {"limit": True, "value": mono, "pass": mono}
        passed = all(v["pass"] for v in verdicts.values())
        metrics = {"scenario": cfg["name"], "command": command, "method": method,
                   "seed": cfg["seed"], "geometry": cfg["geometry"],
                   "phantom": cfg.get("phantom"), **values, "details": extra,
                   "thresholds": verdicts, "pass": passed}
        _json(tmp / "metrics.json", metrics)
        out.mkdir(exist_ok=True)
        for p in sorted(tmp.iterdir()):
            shutil.move(str(p), str(out / p.name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    for key, v in verdicts.items():
        log.info("  %-26s %-12s %s", key, _fmt(v["value"]), "pass" if v["pass"] else "FAIL")
    return EXIT_PASS if passed else EXIT_THRESHOLD


def _fmt(v):
    return f"{v:.3e}" if isinstance(v, float) else str(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brokenray", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"methods: {', '.join(SUBCOMMANDS[name])}")
        p.add_argument("--config", required=True, help="scenario TOML file or bundled name")
        p.add_argument("--out", default=None, help="output directory (default: out/<name>)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--verbose", "-v", action="store_true")
    sub.add_parser("list", help="list bundled scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(bundled_scenarios()))
        return EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(resolve_config(args.config))
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        out = Path(args.out) if args.out else Path("out") / cfg["name"]
        return execute(args.command, cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BrokenRayError, ArithmeticError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception:
        log.exception("unexpected failure")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
