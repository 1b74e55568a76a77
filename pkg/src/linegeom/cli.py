"""Command-line interface: ``linegeom <command> ...``.

Every command takes its parameters from positional arguments and flags, from
a JSON file given with ``--config`` (flags win), or both.  The merged
configuration is validated against the command's schema in
``linegeom/schemas``.  A JSON summary goes to stdout; files go to ``--out``.

Exit codes: 0 ok, 2 bad input, 3 numeric failure or failed ``--check``,
4 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from . import mesh_export as me
from . import pluecker_classifier as pk
from . import projective_core as pc
from . import quadratic_complex as qc
from . import quartic_zoo as qz
from . import ray_systems as rs
from .errors import EmptyIsosurface, ExportError, InputError, LineGeomError, NumericError
from .tolerances import tolerances

log = logging.getLogger("linegeom")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# ----------------------------------------------------------------- helpers


def load_schema(name: str) -> dict:
    return json.loads(resources.files("linegeom").joinpath("schemas", f"{name}.json").read_text())


def _validate(obj, name: str):
    try:
        jsonschema.validate(obj, load_schema(name))
    except jsonschema.ValidationError as e:
        raise InputError(f"{name}: {e.message}") from None


def _defaults(name: str) -> dict:
    return {k: v["default"] for k, v in load_schema(name)["properties"].items() if "default" in v}


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from None


def _plain(x):
    """Convert numpy scalars/arrays and tuples so ``json.dumps`` is stable."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _write_json(path, obj):
    me._atomic_write(path, dumps(obj).encode("utf-8"))


def _kv(spec: str, key: str):
    """Parse ``key=value`` or a bare value."""
    if spec is None:
        return None
    s = str(spec)
    if "=" in s:
        k, v = s.split("=", 1)
        if k != key:
            raise InputError(f"expected {key}=..., got {s!r}")
        return v
    return s


def _res(spec):
    if spec is None or isinstance(spec, int):
        return spec
    try:
        return int(_kv(spec, "res"))
    except ValueError:
        raise InputError(f"bad resolution {spec!r}") from None


def _floats(s: str, n: int | None = None) -> list[float]:
    try:
        v = [float(t) for t in s.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {s!r}") from None
    if n is not None and len(v) != n:
        raise InputError(f"expected {n} numbers, got {len(v)}")
    return v


def _mesh_summary(mesh, S) -> dict:
    med, lim = me.mesh_residual(mesh, S)
    return {"triangles": len(mesh.triangles), "vertices": len(mesh.vertices), "components": mesh.components(),
            "residual_median": med, "residual_bound": lim, "resolution": mesh.provenance["resolution"]}


def _mesh_problems(tag, mesh, S) -> list[str]:
    return [f"{tag}: {p}" for p in me.check_mesh(mesh, S)]


# ----------------------------------------------------------------- commands


def run_fresnel(cfg: dict, out: str) -> tuple[dict, list]:
    a2, b2, c2 = cfg["a2"], cfg["b2"], cfg["c2"]
    S = qz.fresnel_surface(a2, b2, c2, strict=cfg["strict"])
    summary = {"family": "fresnel", "params": [a2, b2, c2]}
    problems = []
    if cfg["nodes"] or cfg["cones"] or cfg["check"]:
        ns = qz.fresnel_real_nodes(a2, b2, c2)
        summary["nodes"] = len(ns)
        if cfg["nodes"]:
            me.write_csv(os.path.join(out, "nodes.csv"), ns.to_rows(), header=["x", "y", "z", "signature"])
        cones = [qz.tangent_cone_at_node(S, p) for p in ns.points]
        if cfg["cones"]:
            _write_json(os.path.join(out, "cones.json"), [
                {"apex": c.apex, "signature": c.signature, "real": c.real, "axis": c.axis,
                 "half_angles": c.half_angles, "eigenvalues": c.eigenvalues} for c in cones])
        if cfg["check"]:
            if len(ns) != 4:
                problems.append(f"expected 4 real nodes, found {len(ns)}")
            if len(ns) and np.abs(ns.points[:, 1]).max() > 1e-9:
                problems.append("node off the plane y = 0")
            for c in cones:
                if not c.real or sorted(c.signature) != [1, 2]:
                    problems.append(f"cone at {c.apex} has signature {c.signature}")
    if cfg["sections"]:
        cs = qz.ellipsoid_circular_sections(a2, b2, c2)
        secs = {"planes": [p.c for p in cs.planes], "radius": cs.radius, "degenerate": cs.degenerate}
        _write_json(os.path.join(out, "sections.json"), secs)
        summary["sections"] = secs
    if cfg["mesh"]:
        mesh = me.marching_cubes(S, None, cfg["mesh"])
        me.write_stl(mesh, os.path.join(out, "fresnel.stl"), scale=cfg["scale"])
        summary["mesh"] = _mesh_summary(mesh, S)
        problems += _mesh_problems("mesh", mesh, S) if cfg["check"] else []
    return summary, problems


def _kummer_starts(S, n, seed):
    rng = np.random.default_rng(seed)
    starts = []
    tries = 0
    r_max = 0.95 * float(S.box[1][0])
    while len(starts) < n and tries < 200 * n:
        tries += 1
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        ts = np.linspace(0, r_max, 241)
        f = S(ts[:, None] * d)
        idx = np.nonzero(np.diff(np.sign(f)))[0]
        if len(idx) == 0:
            continue
        from scipy.optimize import brentq

        t = brentq(lambda t: S(t * d), ts[idx[0]], ts[idx[0] + 1], xtol=1e-15)
        p = t * d
        if qz.gauss_curvature_sign(S, p) == "negative":
            starts.append(p)
    return starts


def run_kummer(cfg: dict, out: str) -> tuple[dict, list]:
    mu2 = cfg["mu2"]
    S = qz.kummer_surface(mu2)
    summary = {"family": "kummer", "params": [mu2], "lambda": S.meta["lambda"]}
    problems = []
    need_nodes = cfg["nodes"] or cfg["tropes"] or cfg["incidence"] or cfg["asymptotic"] or cfg["check"]
    ns = qz.kummer_nodes(S) if need_nodes else None
    if ns is not None:
        summary["nodes"] = len(ns)
        if cfg["nodes"]:
            me.write_csv(os.path.join(out, "nodes.csv"), ns.to_rows(), header=["x", "y", "z", "signature"])
    if cfg["tropes"] or cfg["incidence"] or cfg["check"]:
        tr = qz.kummer_tropes(S, ns)
        inc = tr.incidence.astype(int)
        summary["tropes"] = len(tr.planes)
        summary["incidence_row_sums"] = sorted(set(inc.sum(axis=1).tolist()))
        summary["incidence_col_sums"] = sorted(set(inc.sum(axis=0).tolist()))
        summary["max_square_residual"] = max(tr.square_residuals) if tr.square_residuals else None
        if cfg["tropes"]:
            me.write_csv(os.path.join(out, "tropes.csv"), tr.to_rows(),
                         header=["a", "b", "c", "d", *[f"node{k}" for k in range(6)]])
        if cfg["incidence"]:
            me.write_csv(os.path.join(out, "incidence.csv"), inc.tolist())
        if cfg["check"]:
            if len(tr.planes) != 16 or summary["incidence_row_sums"] != [6] or summary["incidence_col_sums"] != [6]:
                problems.append("trope configuration is not (16, 6)")
            if tr.square_residuals and max(tr.square_residuals) > 1e-7:
                problems.append(f"trope square residual {max(tr.square_residuals):.2e}")
    if cfg["asymptotic"]:
        src = _kv(cfg["asymptotic"], "from")
        if src == "auto":
            starts = _kummer_starts(S, cfg["n_curves"], cfg["seed"])
        else:
            starts = [qz._project(S, np.array(_floats(src, 3)))]
        curves, causes = [], []
        for p in starts:
            for d in qz.asymptotic_directions(S, p):
                trc = qz.trace_asymptotic_curve(S, p, d, nodes=ns)
                if len(trc.points) >= 2:
                    curves.append(trc.points)
                causes.append({"start": p, "cause": trc.cause, "node": trc.node_index, "points": len(trc.points)})
                log.info("asymptotic curve from %s: %s after %d points", np.round(p, 4).tolist(), trc.cause,
                         len(trc.points))
        me.write_obj(os.path.join(out, "asymptotic.obj"), polylines=me.PolylineSet(curves, "asymptotic"),
                     scale=cfg["scale"])
        _write_json(os.path.join(out, "asymptotic.json"), causes)
        summary["asymptotic"] = {c: sum(1 for x in causes if x["cause"] == c) for c in ("node", "parabolic", "box", "budget")}
        if cfg["check"] and summary["asymptotic"]["budget"]:
            problems.append("asymptotic trace exhausted its step budget")
    if cfg["mesh"]:
        mesh = me.marching_cubes(S, None, cfg["mesh"])
        me.write_stl(mesh, os.path.join(out, "kummer.stl"), scale=cfg["scale"])
        summary["mesh"] = _mesh_summary(mesh, S)
        problems += _mesh_problems("mesh", mesh, S) if cfg["check"] else []
    return summary, problems


def _classification_check(p, cls) -> list[str]:
    out = []
    for iv in cls.intervals:
        lo, hi = iv.lo, iv.hi
        if math.isinf(lo) and math.isinf(hi):
            x = 0.0
        elif math.isinf(lo):
            x = hi - 1.0
        elif math.isinf(hi):
            x = lo + 1.0
        else:
            x = 0.5 * (lo + hi)
        t = pk.latitudinal_conic(*p, x).type
        if t != iv.type:
            out.append(f"interval ({lo}, {hi}) typed {iv.type} but midpoint section is {t}")
    return out


def _classification_json(p) -> dict:
    cls = pk.classify(*p)
    ss = pk.special_sections(*p)
    d = cls.to_json()
    d["special_sections"] = {"circles": ss.circles, "rectangular_hyperbolas": ss.rectangular_hyperbolas,
                             "flags": ss.flags}
    d["singular_lines"] = [{"x": s.x, "origin": s.origin, "direction": s.direction} for s in
                           pk.singular_line_geometry(*p)]
    return d


def run_classify(cfg: dict, out: str) -> tuple[dict, list]:
    p = tuple(cfg[k] for k in "EUCFRB")
    d = _classification_json(p)
    return d, _classification_check(p, pk.classify(*p)) if cfg["check"] else []


def run_equatorial(cfg: dict, out: str) -> tuple[dict, list]:
    p = tuple(cfg[k] for k in "EUCFRB")
    S = qz.equatorial_surface(*p)
    summary = {"family": "equatorial", "params": list(p)}
    problems = []
    if cfg["nodes"] or cfg["check"]:
        ns = qz.find_nodes(S, seed=cfg["seed"])
        summary["nodes"] = len(ns)
        if cfg["nodes"]:
            me.write_csv(os.path.join(out, "nodes.csv"), ns.to_rows(), header=["x", "y", "z", "signature"])
        if cfg["check"] and len(ns) > 8:
            problems.append(f"{len(ns)} nodes exceed the bound 8")
    if cfg["classify"] or cfg["sections"] or cfg["check"]:
        d = _classification_json(p)
        if cfg["classify"]:
            summary["symbol"] = d["symbol"]
            summary["compact"] = d["compact"]
            _write_json(os.path.join(out, "classification.json"), d)
        if cfg["sections"]:
            summary["special_sections"] = d["special_sections"]
            summary["singular_lines"] = d["singular_lines"]
        if cfg["check"]:
            problems += _classification_check(p, pk.classify(*p))
    if cfg["mesh"]:
        mesh = me.marching_cubes(S, None, cfg["mesh"])
        me.write_stl(mesh, os.path.join(out, "equatorial.stl"), scale=cfg["scale"])
        summary["mesh"] = _mesh_summary(mesh, S)
        problems += _mesh_problems("mesh", mesh, S) if cfg["check"] else []
    return summary, problems


def run_pencil(cfg: dict, out: str) -> tuple[dict, list]:
    ptype = cfg["type"]
    theta = math.radians(cfg["theta"]) if ptype != 3 else 0.0
    k = tuple(cfg.get("k") or (0.5, 0.8))
    M = rs.thin_pencil_model(f=cfg["f"], theta=theta, pencil_type=ptype, rho=cfg["rho"], n=cfg["n"], k=k)
    summary = {"type": ptype, "f": cfg["f"], "theta_deg": cfg["theta"], "rho": cfg["rho"], "n": cfg["n"],
               "congruence": M.meta["congruence"]}
    problems = []
    C = M.congruence()
    if ptype in (1, 2):
        fr = rs.hamilton_frame(C, 0.0, 0.0)
        summary["axis_focal_plane_angle"] = fr.plane_angle
        summary["axis_foci_t"] = [fr.t_focal_1, fr.t_focal_2]
        want = math.pi / 2 if ptype == 1 else theta
        ok = abs(fr.plane_angle - want) <= 1e-6
        summary["angle_check"] = ok
        if not ok:
            problems.append(f"focal plane angle {fr.plane_angle} differs from {want}")
    else:
        fp = rs.focal_parameters(C, 0.0, 0.0)
        real_lines = all(np.all(np.isfinite(L.p)) for L in M.lines) and len(M.lines) == cfg["n"]
        summary["focal_kind"] = fp.kind
        summary["all_lines_real"] = bool(real_lines)
        if not real_lines or fp.kind != "complex":
            problems.append("elliptic pencil lost real lines or has real foci")
    if cfg["strings"]:
        me.write_obj(os.path.join(out, "strings.obj"), polylines=me.PolylineSet(list(M.segments), "string-segment"),
                     scale=cfg["scale"])
        me.write_csv(os.path.join(out, "strings.csv"), [[*a, *b] for a, b in M.segments.tolist()],
                     header=["x0", "y0", "z0", "x1", "y1", "z1"])
    if cfg.get("tubes"):
        mesh = me.tube_strings(M, cfg["tubes"], cfg["sides"])
        me.write_stl(mesh, os.path.join(out, "tubes.stl"), scale=cfg["scale"])
        summary["tubes"] = {"triangles": len(mesh.triangles)}
        if cfg["check"]:
            problems += [f"tubes: {p}" for p in me.check_mesh(mesh)]
    return summary, problems


def load_complex(path_or_obj) -> qc.QuadraticComplex:
    d = path_or_obj if isinstance(path_or_obj, dict) else _read_json(path_or_obj)
    _validate(d, "complex_input")
    if "Q" in d:
        return qc.QuadraticComplex.from_json(d["Q"])
    if "quadric" in d:
        return qc.tangent_complex_of_quadric(np.array(d["quadric"], float))
    if "tetrahedral" in d:
        t = d["tetrahedral"]
        return qc.tetrahedral_complex(np.array(t["planes"], float), t["lambda"])
    return qc.random_complex(np.random.default_rng(d["random"]))


def _auto_level(S, box, res) -> float:
    lo, hi = (np.asarray(b, float) for b in box)
    vals = me.sample_grid(S, lo, hi, (res + 1,) * 3)
    if vals.min() < 0 < vals.max():
        return 0.0
    # a doubled surface never changes sign; mesh a thin offset shell instead
    return float(1e-4 * np.abs(vals).max() * (1 if vals.max() > 0 else -1))


def run_complex(cfg: dict, out: str) -> tuple[dict, list]:
    K = load_complex(cfg["input"])
    summary = {"complex": K.to_json()}
    problems = []
    if cfg["singular_surface"]:
        b = cfg["box"]
        box = ((-b,) * 3, (b,) * 3)
        S = qc.SingularSurface(K, box)
        level = cfg["level"] if cfg["level"] is not None else _auto_level(S, box, cfg["singular_surface"])
        mesh = me.marching_cubes(S, box, cfg["singular_surface"], level=level)
        me.write_stl(mesh, os.path.join(out, "singular.stl"), scale=cfg["scale"])
        summary["singular_surface"] = dict(_mesh_summary(mesh, S), level=level)
        problems += _mesh_problems("singular surface", mesh, S) if cfg["check"] else []
    if cfg["g"] is not None:
        g = pc.Line6(cfg["g"])
        C = qc.congruence_from_complex_and_line(K, g)
        summary["congruence"] = {"domain": C.domain, "theta0": C.meta["theta0"]}
        if cfg["focal"]:
            fs = rs.focal_surface_samples(C, cfg["grid"])
            rows, s_res, c_res = [], [], []
            nq = np.linalg.norm(K.Q, 2)
            for (u, v), sheet, p in zip(fs.uv, fs.sheet, fs.points):
                P = np.append(p, 1.0)
                sr = qc.singular_function(K, P) / qc.singular_scale(K, P)
                cr = qc.complex_surface_function(K, g, P) / (nq**2 * max(1.0, np.abs(p).max()) ** 4)
                s_res.append(abs(sr))
                c_res.append(abs(cr))
                rows.append([float(u), float(v), int(sheet), *map(float, p), float(sr), float(cr)])
            me.write_csv(os.path.join(out, "focal.csv"), rows,
                         header=["theta", "s", "sheet", "x", "y", "z", "singular_residual", "complex_surface_residual"])
            summary["focal"] = {"samples": len(rows), "skipped": fs.skipped,
                                "singular_residual_max": max(s_res, default=0.0),
                                "complex_surface_residual_max": max(c_res, default=0.0)}
            if cfg["check"] and max(c_res, default=0.0) > 1e-9:
                problems.append(f"focal samples leave the complex surface by {max(c_res):.2e}")
    return summary, problems


def _curve_from_scene(c: dict) -> rs.PlaneCurve:
    try:
        if c["type"] == "ellipse":
            return rs.PlaneCurve.ellipse(c["a"], c["b"])
        if c["type"] == "circle":
            return rs.PlaneCurve.circle(c.get("r", 1.0), tuple(c.get("center", (0.0, 0.0))))
        return rs.PlaneCurve.line(c["normal"], c["offset"])
    except KeyError as e:
        raise InputError(f"curve of type {c['type']} needs {e.args[0]!r}") from None


def _curve_polyline(c: dict) -> np.ndarray:
    t = np.linspace(0, 2 * np.pi, 241)
    if c["type"] == "ellipse":
        return np.stack([c["a"] * np.cos(t), c["b"] * np.sin(t)], -1)
    if c["type"] == "circle":
        r = c.get("r", 1.0)
        cx, cy = c.get("center", (0.0, 0.0))
        return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], -1)
    n = np.asarray(c["normal"], float)
    n = n / np.linalg.norm(n)
    p0 = n * c["offset"] / np.linalg.norm(c["normal"])
    tan = np.array([-n[1], n[0]])
    return np.array([p0 - 3 * tan, p0 + 3 * tan])


def _scene_families(scene: dict):
    src = scene["source"]
    if src["type"] == "point":
        at = np.asarray(src.get("at", (0.0, 0.0)), float)
        lo, hi = src.get("range", (0.0, 2 * np.pi))
        return (lambda t: np.broadcast_to(at, np.shape(t) + (2,)).copy(),
                lambda t: np.stack([np.cos(t), np.sin(t)], -1), lo, hi)
    d = np.asarray(src.get("direction", (0.0, 1.0)), float)
    d = d / np.linalg.norm(d)
    perp = np.array([d[1], -d[0]])
    at = np.asarray(src.get("at", (0.0, 0.0)), float)
    lo, hi = src.get("range", (-0.95, 0.95))
    return (lambda t: at + np.asarray(t)[..., None] * perp,
            lambda t: np.broadcast_to(d, np.shape(t) + (2,)).copy(), lo, hi)


def run_caustic2d(cfg: dict, out: str) -> tuple[dict, list]:
    scene = cfg["scene"] if isinstance(cfg["scene"], dict) else _read_json(cfg["scene"])
    _validate(scene, "caustic_scene")
    scene = {**_defaults("caustic_scene"), **scene}
    curve = _curve_from_scene(scene["curve"])
    org, dirn, lo, hi = _scene_families(scene)
    ts = np.linspace(lo, hi, scene["samples"])
    mode = scene["mode"]
    n_ratio = scene.get("n_ratio")
    if mode == "diacaustic" and n_ratio is None:
        raise InputError("diacaustic scenes need n_ratio")
    caus = rs.caustic_2d(org, dirn, ts, mode, curve, n_ratio)
    pts = caus.points
    centre = pts.mean(axis=0)
    spread = float(np.abs(pts - centre).max()) if len(pts) else 0.0
    collapsed = spread <= 1e-6
    # neighbouring-ray oracle: intersect the bent rays at t - d and t + d
    d = 1e-5 * (hi - lo)

    def fam(t):
        O = np.broadcast_to(np.asarray(org(t), float).reshape(-1, 2), (len(t), 2))
        return rs._bend_rays_2d(O, np.asarray(dirn(t), float), curve, mode, n_ratio)

    o1, u1 = fam(caus.params - d)
    o2, u2 = fam(caus.params + d)
    den = u1[:, 0] * u2[:, 1] - u1[:, 1] * u2[:, 0]
    w = o2 - o1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (w[:, 0] * u2[:, 1] - w[:, 1] * u2[:, 0]) / den
    oracle = o1 + a[:, None] * u1
    ok = np.isfinite(oracle).all(axis=1) & (np.abs(den) > 1e-12)
    dev = float(np.abs(oracle[ok] - pts[ok]).max()) if ok.any() else 0.0
    summary = {"mode": mode, "samples": len(pts), "dropped": len(caus.dropped), "collapsed": collapsed,
               "spread": spread, "cusps": [] if collapsed else pts[caus.cusps], "oracle_max_deviation": dev}
    if collapsed:
        summary["point"] = centre
    problems = []
    if cfg["check"] and not collapsed and dev > 1e-5:
        problems.append(f"caustic deviates from the neighbouring-ray oracle by {dev:.2e}")
    if cfg["csv"]:
        cusp = np.zeros(len(pts), int)
        cusp[caus.cusps] = 1
        me.write_csv(os.path.join(out, "caustic.csv"),
                     [[float(t), float(p[0]), float(p[1]), int(c)] for t, p, c in zip(caus.params, pts, cusp)],
                     header=["t", "x", "y", "cusp"])
    if cfg["svg"]:
        n_rays = min(scene["rays"], len(caus.params))
        sel = np.linspace(0, len(caus.params) - 1, n_rays).round().astype(int) if n_rays else np.zeros(0, int)
        rays = []
        if len(sel):
            tsel = caus.params[sel]
            O = np.broadcast_to(np.asarray(org(tsel), float).reshape(-1, 2), (len(sel), 2))
            hit, u = fam(tsel)
            L = 1.5 * float(np.ptp(_curve_polyline(scene["curve"]), axis=0).max())
            rays = [np.array([o, h, h + L * uu]) for o, h, uu in zip(O, hit, u)]
        polys = [_curve_polyline(scene["curve"])]
        markers = [centre] if collapsed else list(pts[caus.cusps])
        if not collapsed and len(pts) >= 2:
            polys.append(pts)
        box = np.concatenate(polys[:1])
        view = (box.min(axis=0) - 0.1, box.max(axis=0) + 0.1)
        me.write_svg(os.path.join(out, "caustic.svg"), polylines=polys, rays=rays, points=markers, view=view)
    return summary, problems


# ----------------------------------------------------------------- gallery

GALLERY_SCENES = {
    "caustic_ellipse_focus": {"curve": {"type": "ellipse", "a": 2.0, "b": 1.0},
                              "source": {"type": "point", "at": [-math.sqrt(3.0), 0.0], "range": [0.1, 6.183185307179586]},
                              "samples": 201},
    "caustic_circle_parallel": {"curve": {"type": "circle", "r": 1.0},
                                "source": {"type": "parallel", "direction": [0.0, 1.0], "range": [-0.95, 0.95]},
                                "samples": 381},
    "caustic_circle_rim": {"curve": {"type": "circle", "r": 1.0},
                           "source": {"type": "point", "at": [1.0, 0.0],
                                      "range": [math.pi / 2 + 0.05, 3 * math.pi / 2 - 0.05]},
                           "samples": 301},
}


def gallery_jobs(quick: bool = False) -> list[tuple[str, str, dict]]:
    r = 48 if quick else 96
    rk = 64 if quick else 128
    jobs = [
        ("fresnel", "fresnel_4_2_1", {"a2": 4.0, "b2": 2.0, "c2": 1.0, "mesh": r, "nodes": True, "cones": True,
                                      "sections": True}),
        ("kummer", "kummer_1.5", {"mu2": 1.5, "mesh": rk, "nodes": True, "tropes": True, "incidence": True,
                                  "asymptotic": "auto"}),
        ("equatorial", "equatorial_nested", {"E": 1.0, "U": 0.0, "C": -4.0, "F": 1.0, "R": 0.0, "B": -1.0, "mesh": r,
                                          "nodes": True, "classify": True, "sections": True}),
        ("equatorial", "equatorial_interlaced", {"E": 1.0, "U": 0.5, "C": -2.0, "F": 1.0, "R": 0.5, "B": -2.0, "mesh": r,
                                           "nodes": True, "classify": True, "sections": True}),
        ("pencil", "pencil_type1", {"type": 1, "f": 0.5, "theta": 90.0, "rho": 0.2, "n": 64, "strings": True,
                                    "tubes": 0.004}),
        ("pencil", "pencil_type2", {"type": 2, "f": 0.5, "theta": 60.0, "rho": 0.2, "n": 64, "strings": True,
                                    "tubes": 0.004}),
        ("pencil", "pencil_type3", {"type": 3, "f": 0.5, "theta": 0.0, "rho": 0.2, "n": 64, "k": [0.5, 0.8],
                                    "strings": True, "tubes": 0.004}),
        ("complex", "complex_sphere", {"input": {"quadric": np.diag([1.0, 1.0, 1.0, -1.0]).tolist()},
                                       "singular_surface": 64}),
        ("complex", "complex_tetrahedral", {"input": {"tetrahedral": {"planes": [[1, 0, 0, 0.5], [0, 1, 0, 0.5],
                                                                                 [0, 0, 1, 0.5], [1, 1, 1, -1]],
                                                                      "lambda": 2.0}},
                                            "singular_surface": 64}),
        ("complex", "complex_generic", {"input": {"random": 1}, "g": [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], "focal": True}),
    ]
    for name, scene in GALLERY_SCENES.items():
        jobs.append(("caustic2d", name, {"scene": scene, "svg": True, "csv": True}))
    return jobs


def run_gallery(cfg: dict, out: str) -> tuple[dict, list]:
    problems = []
    results = {}
    for cmd, name, params in gallery_jobs(cfg["quick"]):
        sub = os.path.join(out, name)
        os.makedirs(sub, exist_ok=True)
        inputs = {k: v for k, v in params.items() if isinstance(v, dict)}
        for k, v in inputs.items():
            path = os.path.join(sub, f"{k}.json")
            _write_json(path, v)
        merged = {**_defaults(cmd), **params, "check": True, "seed": cfg["seed"], "scale": 1.0}
        merged.setdefault("level", None)
        merged.setdefault("g", None)
        merged.setdefault("singular_surface", None)
        merged.setdefault("mesh", None)
        merged.setdefault("asymptotic", None)
        t0 = time.perf_counter()
        summary, probs = COMMANDS[cmd][0](merged, sub)
        log.info("gallery %s: %.1f s", name, time.perf_counter() - t0)
        _write_json(os.path.join(sub, "summary.json"), summary)
        results[name] = {"command": cmd, "problems": probs}
        problems += [f"{name}: {p}" for p in probs]
    manifest = {"version": __version__, "files": sha256_tree(out, exclude=("manifest.json",))}
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return {"jobs": results, "files": len(manifest["files"])}, problems


def sha256_tree(root: str, exclude=()) -> dict:
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            rel = os.path.relpath(os.path.join(d, f), root).replace(os.sep, "/")
            if rel in exclude or f.startswith(".tmp-"):
                continue
            with open(os.path.join(d, f), "rb") as fh:
                out[rel] = hashlib.sha256(fh.read()).hexdigest()
    return dict(sorted(out.items()))


COMMANDS = {
    "fresnel": (run_fresnel, "Fresnel wave surface: nodes, tangent cones, circular sections, mesh"),
    "kummer": (run_kummer, "Kummer surface: nodes, tropes, incidence, asymptotic curves, mesh"),
    "equatorial": (run_equatorial, "equatorial complex surface: nodes, classification symbol, mesh"),
    "classify": (run_classify, "latitudinal classification of an equatorial parameter set"),
    "pencil": (run_pencil, "thin pencil string model"),
    "complex": (run_complex, "quadratic complex: singularity surface mesh, congruence focal samples"),
    "caustic2d": (run_caustic2d, "planar catacaustic or diacaustic of a scene"),
    "gallery": (run_gallery, "regenerate every model into a directory tree with a sha256 manifest"),
}


# ----------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    S = None  # unset flags are dropped so config values survive the merge
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=S, help="JSON file with parameters (flags override it)")
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--check", action="store_true", default=S, help="run invariant checks; exit 3 on violation")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--scale", type=float, default=S, help="length scale applied to exported geometry")
    common.add_argument("--tol", action="append", default=S, metavar="NAME=VALUE",
                        help="tolerance override (incidence, rank, double_root, double_root_fd)")
    common.add_argument("-v", "--verbose", action="store_true", default=False)

    p = argparse.ArgumentParser(prog="linegeom", description="Line geometry models and their exports.")
    p.add_argument("--version", action="version", version=f"linegeom {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name):
        return sub.add_parser(name, parents=[common], help=COMMANDS[name][1], description=COMMANDS[name][1])

    f = cmd("fresnel")
    for k in ("a2", "b2", "c2"):
        f.add_argument(k, type=float, nargs="?", default=S)
    f.add_argument("--mesh", nargs="?", const="res=96", default=S, metavar="res=N")
    f.add_argument("--nodes", action="store_true", default=S)
    f.add_argument("--cones", action="store_true", default=S)
    f.add_argument("--sections", action="store_true", default=S)
    f.add_argument("--non-strict", dest="strict", action="store_false", default=S)

    k = cmd("kummer")
    k.add_argument("mu2", type=float, nargs="?", default=S)
    k.add_argument("--mesh", nargs="?", const="res=128", default=S, metavar="res=N")
    k.add_argument("--nodes", action="store_true", default=S)
    k.add_argument("--tropes", action="store_true", default=S)
    k.add_argument("--incidence", action="store_true", default=S)
    k.add_argument("--asymptotic", nargs="?", const="from=auto", default=S, metavar="from=auto|x,y,z")
    k.add_argument("--n-curves", dest="n_curves", type=int, default=S)

    for name in ("equatorial", "classify"):
        e = cmd(name)
        for key in "EUCFRB":
            e.add_argument(key, type=float, nargs="?", default=S)
        if name == "equatorial":
            e.add_argument("--mesh", nargs="?", const="res=96", default=S, metavar="res=N")
            e.add_argument("--nodes", action="store_true", default=S)
            e.add_argument("--classify", action="store_true", default=S)
            e.add_argument("--sections", action="store_true", default=S)

    pe = cmd("pencil")
    pe.add_argument("type", type=int, nargs="?", default=S)
    pe.add_argument("f", type=float, nargs="?", default=S)
    pe.add_argument("theta", type=float, nargs="?", default=S, help="degrees")
    pe.add_argument("rho", type=float, nargs="?", default=S)
    pe.add_argument("n", type=int, nargs="?", default=S)
    pe.add_argument("--k", type=lambda s: _floats(s, 2), default=S, metavar="k1,k2")
    pe.add_argument("--strings", action="store_true", default=S)
    pe.add_argument("--tubes", nargs="?", type=float, const=0.005, default=S, metavar="RADIUS")
    pe.add_argument("--sides", type=int, default=S)

    c = cmd("complex")
    c.add_argument("input", nargs="?", default=S, help="complex JSON file")
    c.add_argument("--singular-surface", dest="singular_surface", nargs="?", const="res=64", default=S,
                   metavar="res=N")
    c.add_argument("--level", type=float, default=S)
    c.add_argument("--box", type=float, default=S)
    c.add_argument("--congruence", dest="g", default=S, metavar="g=p01,p02,p03,p23,p31,p12")
    c.add_argument("--focal", action="store_true", default=S)
    c.add_argument("--grid", type=int, default=S)

    ca = cmd("caustic2d")
    ca.add_argument("scene", nargs="?", default=S, help="scene JSON file")
    ca.add_argument("--svg", action="store_true", default=S)
    ca.add_argument("--csv", action="store_true", default=S)

    g = cmd("gallery")
    g.add_argument("--quick", action="store_true", default=S, help="coarser meshes")
    return p


def _config(ns: argparse.Namespace) -> tuple[str, dict]:
    args = {k: v for k, v in vars(ns).items() if v is not None}
    name = args.pop("command")
    args.pop("verbose", None)
    cfg = {}
    if "config" in args:
        cfg = _read_json(args.pop("config"))
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
    if "tol" in args:
        tol = dict(cfg.get("tolerances", {}))
        for item in args.pop("tol"):
            if "=" not in item:
                raise InputError(f"bad tolerance override {item!r}")
            key, val = item.split("=", 1)
            try:
                tol[key] = float(val)
            except ValueError:
                raise InputError(f"bad tolerance value {val!r}") from None
        args["tolerances"] = tol
    if "mesh" in args:
        args["mesh"] = _res(args["mesh"])
    if "singular_surface" in args:
        args["singular_surface"] = _res(args["singular_surface"])
    if "g" in args:
        args["g"] = _floats(_kv(args["g"], "g"), 6)
    cfg.update(args)
    _validate(cfg, name)
    merged = _defaults(name)
    merged.update(cfg)
    for key, v in load_schema(name)["properties"].items():
        merged.setdefault(key, None)
    return name, merged


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        name, cfg = _config(ns)
        out = cfg.get("out") or "."
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as e:
            raise ExportError(f"cannot create {out}: {e}") from e
        with tolerances(**(cfg.get("tolerances") or {})):
            summary, problems = COMMANDS[name][0](cfg, out)
        if cfg.get("check"):
            summary = dict(summary, check={"ok": not problems, "problems": problems})
        sys.stdout.write(dumps(summary))
        if cfg.get("check") and problems:
            for p in problems:
                log.error("check failed: %s", p)
            return EXIT_NUMERIC
        return EXIT_OK
    except EmptyIsosurface as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as e:
        print(f"numeric failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ExportError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except LineGeomError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
