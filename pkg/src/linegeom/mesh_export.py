"""Isosurface meshing and deterministic file writers.

All ASCII writers format floats with ``repr`` (shortest round-trip decimal), so
identical arrays always produce identical bytes.  Files are written to a
temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage import measure

from .errors import DegenerateSegment, EmptyIsosurface, ExportError, InputError


class EmptyGeometry(UserWarning):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int64
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise InputError("triangle index out of range")

    def __len__(self):
        return len(self.triangles)

    @property
    def empty(self) -> bool:
        return len(self.triangles) == 0

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def area(self) -> float:
        return float(self.areas().sum())

    def normals(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, ln, out=np.zeros_like(n), where=ln > 0)

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        return int(len(used) - len(self.edges()) + len(self.triangles))

    def components(self) -> int:
        """Number of edge-connected components among referenced vertices."""
        if self.empty:
            return 0
        e = self.edges()
        n = len(self.vertices)
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        return int(len(np.unique(labels[np.unique(self.triangles)])))

    def scaled(self, s: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * s, self.triangles.copy(), dict(self.provenance, scale=s))

    @staticmethod
    def merge(meshes) -> "TriangleMesh":
        verts, tris, off = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + off)
            off += len(m.vertices)
        if not verts:
            return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
        return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


_KINDS = ("asymptotic", "caustic2d", "ruling", "string-segment", "generic")


@dataclass
class PolylineSet:
    polylines: list
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown polyline kind {self.kind!r}")
        out = []
        for pl in self.polylines:
            a = np.asarray(pl, dtype=float)
            if a.ndim != 2 or a.shape[1] not in (2, 3):
                raise InputError("polylines must be (n, 2) or (n, 3) arrays")
            if len(a) < 2:
                raise InputError("polyline needs at least two points")
            if not np.all(np.isfinite(a)):
                raise InputError("non-finite polyline coordinate")
            out.append(a)
        self.polylines = out


# ----------------------------------------------------------------- meshing


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LINEGEOM_THREADS", "1")))
    except ValueError:
        return 1


def sample_grid(F, lo, hi, shape) -> np.ndarray:
    """Values of ``F`` on the node grid, evaluated in x-slabs (optionally threaded)."""
    axes = [np.linspace(lo[i], hi[i], shape[i]) for i in range(3)]
    Y, Z = np.meshgrid(axes[1], axes[2], indexing="ij")

    def slab(ix):
        xs = axes[0][ix]
        pts = np.stack(np.broadcast_arrays(xs[:, None, None], Y[None], Z[None]), axis=-1)
        return np.asarray(F(pts), dtype=float)

    chunks = np.array_split(np.arange(shape[0]), max(1, min(shape[0], 4 * _threads())))
    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(n) as ex:
            parts = list(ex.map(slab, chunks))
    else:
        parts = [slab(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def _resolution(resolution) -> tuple[int, int, int]:
    r = (resolution,) * 3 if np.isscalar(resolution) else tuple(resolution)
    if len(r) != 3 or any(int(v) != v or v < 2 for v in r):
        raise InputError(f"resolution must be >= 2 cells per axis, got {resolution}")
    return tuple(int(v) for v in r)


def cleanup(mesh: TriangleMesh, bbox_diag: float) -> TriangleMesh:
    """Drop triangles with area below ``1e-14 * diag**2`` and unreferenced vertices."""
    if mesh.empty:
        return mesh
    t = mesh.triangles
    keep = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 2] != t[:, 0])
    keep &= mesh.areas() > 1e-14 * bbox_diag**2
    t = t[keep]
    used, inv = np.unique(t, return_inverse=True)
    return TriangleMesh(mesh.vertices[used], inv.reshape(-1, 3), mesh.provenance)


def marching_cubes(S, box=None, resolution=64, level: float = 0.0) -> TriangleMesh:
    """Triangulate ``S = level`` over ``box`` with ``resolution`` cells per axis.

    ``S`` is any callable on ``(..., 3)`` point arrays; its ``bbox`` is used
    when ``box`` is omitted.  The grid scale (max ``|S|`` over the samples)
    and the cell size are recorded in ``provenance`` for :func:`mesh_residual`.

    Raises
    ------
    EmptyIsosurface
        No sign change on the grid; the exception's ``mesh`` is the empty mesh.
    """
    res = _resolution(resolution)
    if box is None:
        box = S.bbox
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if not np.all(hi > lo):
        raise InputError("degenerate box")
    shape = tuple(r + 1 for r in res)
    vals = sample_grid(S, lo, hi, shape) - level
    spacing = tuple((hi - lo) / np.array(res))
    prov = {
        "family": getattr(S, "family", "callable"),
        "params": [float(p) for p in getattr(S, "params", ())],
        "box": [lo.tolist(), hi.tolist()],
        "resolution": list(res),
        "cell": float(max(spacing)),
        "grid_scale": float(np.abs(vals).max()),
        "level": float(level),
    }
    if not (vals.min() < 0 < vals.max()):
        err = EmptyIsosurface("no sign change on the sampling grid")
        err.mesh = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64), prov)
        raise err
    verts, faces, _, _ = measure.marching_cubes(vals, level=0.0, spacing=spacing, allow_degenerate=False,
                                                method="lewiner")
    mesh = TriangleMesh(verts.astype(float) + lo, faces.astype(np.int64), prov)
    return cleanup(mesh, float(np.linalg.norm(hi - lo)))


def mesh_residual(mesh: TriangleMesh, S) -> tuple[float, float]:
    """``(median |S(v)| / grid_scale, 1e-3 * cell)``; the invariant is ``first <= second``."""
    if mesh.empty:
        return 0.0, 0.0
    lvl = mesh.provenance.get("level", 0.0)
    r = np.abs(np.asarray(S(mesh.vertices), float) - lvl) / mesh.provenance["grid_scale"]
    return float(np.median(r)), 1e-3 * mesh.provenance["cell"]


def check_mesh(mesh: TriangleMesh, S=None) -> list[str]:
    """Problems found in ``mesh`` (empty list when it is valid)."""
    out = []
    if not np.all(np.isfinite(mesh.vertices)):
        out.append("non-finite vertex")
    if not mesh.empty:
        diag = float(np.linalg.norm(np.ptp(mesh.vertices, axis=0)))
        if np.any(mesh.areas() <= 1e-14 * diag**2):
            out.append("degenerate triangle")
    if S is not None:
        med, lim = mesh_residual(mesh, S)
        if med > lim:
            out.append(f"vertex residual {med:.3e} exceeds {lim:.3e}")
    return out


def sphere_mesh(center, radius: float, n_lat: int = 6, n_lon: int = 10) -> TriangleMesh:
    """Small UV sphere, used to mark nodes on exported models."""
    th = np.linspace(0, np.pi, n_lat + 1)[1:-1]
    ph = np.linspace(0, 2 * np.pi, n_lon, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    ring = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    verts = np.concatenate([[[0, 0, 1]], ring, [[0, 0, -1]]]) * radius + np.asarray(center, float)
    tris = []
    nr = len(th)
    idx = lambda i, j: 1 + i * n_lon + (j % n_lon)
    for j in range(n_lon):
        tris.append((0, idx(0, j), idx(0, j + 1)))
        tris.append((len(verts) - 1, idx(nr - 1, j + 1), idx(nr - 1, j)))
        for i in range(nr - 1):
            tris.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            tris.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    return TriangleMesh(verts, np.array(tris))


def tube_strings(model, radius: float, sides: int = 8) -> TriangleMesh:
    """Capped cylinder around every string segment (``4 * sides`` triangles each)."""
    if not (radius > 0) or not np.isfinite(radius):
        raise DegenerateSegment(f"radius must be positive, got {radius}")
    if int(sides) != sides or sides < 3:
        raise DegenerateSegment(f"need at least 3 sides, got {sides}")
    sides = int(sides)
    segs = np.asarray(getattr(model, "segments", model), dtype=float).reshape(-1, 2, 3)
    ang = 2 * np.pi * np.arange(sides) / sides
    meshes = []
    for a, b in segs:
        axis = b - a
        L = np.linalg.norm(axis)
        if L < 4 * radius:
            raise DegenerateSegment(f"segment of length {L:.3g} is shorter than 4*radius")
        t = axis / L
        helper = np.eye(3)[np.argmin(np.abs(t))]
        u = np.cross(t, helper)
        u /= np.linalg.norm(u)
        w = np.cross(t, u)
        circ = radius * (np.outer(np.cos(ang), u) + np.outer(np.sin(ang), w))
        verts = np.concatenate([a + circ, b + circ, [a, b]])
        ca, cb = 2 * sides, 2 * sides + 1
        tris = []
        for k in range(sides):
            k1 = (k + 1) % sides
            tris.append((k, k1, sides + k1))
            tris.append((k, sides + k1, sides + k))
            tris.append((ca, k1, k))
            tris.append((cb, sides + k, sides + k1))
        meshes.append(TriangleMesh(verts, np.array(tris)))
    out = TriangleMesh.merge(meshes)
    out.provenance = {"kind": "tubes", "radius": float(radius), "sides": sides, "segments": len(segs)}
    return out


# ----------------------------------------------------------------- writers


def _fmt(v) -> str:
    return repr(float(v))


def _atomic_write(path, data: bytes):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise ExportError(f"cannot write {path}: {e}") from e


def _warn_empty(what: str):
    warnings.warn(f"{what} has no geometry", EmptyGeometry, stacklevel=3)


_STL_RECORD = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def stl_bytes(mesh: TriangleMesh, mode: str = "binary", name: str = "linegeom") -> bytes:
    if mesh.empty:
        _warn_empty("mesh")
    if mode == "binary":
        rec = np.zeros(len(mesh.triangles), dtype=_STL_RECORD)
        rec["n"] = mesh.normals()
        rec["v"] = mesh.vertices[mesh.triangles]
        header = name.encode("ascii")[:80].ljust(80, b" ")
        return header + struct.pack("<I", len(rec)) + rec.tobytes()
    if mode != "ascii":
        raise InputError(f"unknown STL mode {mode!r}")
    buf = io.StringIO()
    buf.write(f"solid {name}\n")
    for n, tri in zip(mesh.normals(), mesh.vertices[mesh.triangles]):
        buf.write(f"  facet normal {' '.join(map(_fmt, n))}\n    outer loop\n")
        for v in tri:
            buf.write(f"      vertex {' '.join(map(_fmt, v))}\n")
        buf.write("    endloop\n  endfacet\n")
    buf.write(f"endsolid {name}\n")
    return buf.getvalue().encode("ascii")


def write_stl(mesh: TriangleMesh, path, mode: str = "binary", scale: float = 1.0):
    _atomic_write(path, stl_bytes(mesh.scaled(scale) if scale != 1.0 else mesh, mode))


def read_stl_count(path) -> tuple[int, int]:
    """``(count field, actual number of 50-byte records)`` of a binary STL file."""
    with open(path, "rb") as fh:
        data = fh.read()
    (n,) = struct.unpack_from("<I", data, 80)
    return n, (len(data) - 84) // 50


def obj_bytes(mesh: TriangleMesh | None = None, polylines: PolylineSet | None = None) -> bytes:
    buf = io.StringIO()
    off = 0
    if mesh is not None:
        for v in mesh.vertices:
            buf.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for t in mesh.triangles + 1:
            buf.write(f"f {t[0]} {t[1]} {t[2]}\n")
        off = len(mesh.vertices)
    if polylines is not None:
        for pl in polylines.polylines:
            p3 = pl if pl.shape[1] == 3 else np.c_[pl, np.zeros(len(pl))]
            for v in p3:
                buf.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
            buf.write("l " + " ".join(str(off + k + 1) for k in range(len(p3))) + "\n")
            off += len(p3)
    if off == 0:
        _warn_empty("OBJ")
    return buf.getvalue().encode("ascii")


def write_obj(path, mesh: TriangleMesh | None = None, polylines: PolylineSet | None = None, scale: float = 1.0):
    if scale != 1.0:
        mesh = mesh.scaled(scale) if mesh is not None else None
        if polylines is not None:
            polylines = PolylineSet([p * scale for p in polylines.polylines], polylines.kind)
    _atomic_write(path, obj_bytes(mesh, polylines))


def csv_bytes(rows, header=None) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    n = 0
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
        n += 1
    if n == 0:
        _warn_empty("CSV")
    return buf.getvalue().encode("utf-8")


def write_csv(path, rows, header=None):
    """Rows of points, or a :class:`PolylineSet` (written as ``polyline, index, coords``)."""
    if isinstance(rows, PolylineSet):
        dim = rows.polylines[0].shape[1] if rows.polylines else 3
        header = header or ["polyline", "index", *"xyz"[:dim]]
        rows = [[i, k, *map(float, p)] for i, pl in enumerate(rows.polylines) for k, p in enumerate(pl)]
    elif isinstance(rows, np.ndarray):
        rows = [list(map(float, r)) for r in rows.reshape(len(rows), -1)]
    _atomic_write(path, csv_bytes(rows, header))


def svg_bytes(polylines=(), rays=(), points=(), size: int = 600, margin: float = 0.05, view=None) -> bytes:
    """SVG 1.1 of 2D polylines, ray segments ``(start, end)`` and point markers.

    ``view`` is ``((xmin, ymin), (xmax, ymax))``; by default it is fitted to
    the geometry.  The y-axis points up.
    """
    pls = [np.asarray(p, float)[:, :2] for p in (polylines.polylines if isinstance(polylines, PolylineSet) else polylines)]
    rays = [np.asarray(r, float)[:, :2] for r in rays]
    pts = np.asarray(points, float).reshape(-1, 2)
    allp = np.concatenate(pls + rays + [pts]) if (pls or rays or len(pts)) else np.zeros((0, 2))
    if len(allp) == 0:
        _warn_empty("SVG")
    if view is None:
        lo = allp.min(axis=0) if len(allp) else np.array([-1.0, -1.0])
        hi = allp.max(axis=0) if len(allp) else np.array([1.0, 1.0])
    else:
        lo, hi = np.asarray(view[0], float), np.asarray(view[1], float)
    span = float(max(hi - lo)) or 1.0
    lo = lo - margin * span
    span *= 1 + 2 * margin
    s = size / span

    def tx(p):
        return f"{_fmt(round((p[0] - lo[0]) * s, 4))},{_fmt(round(size - (p[1] - lo[1]) * s, 4))}"

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        '<g fill="none" stroke="#999999" stroke-width="0.5">',
    ]
    out += [f'<polyline points="{" ".join(tx(p) for p in r)}"/>' for r in rays]
    out.append('</g>')
    out.append('<g fill="none" stroke="#000000" stroke-width="1">')
    out += [f'<polyline points="{" ".join(tx(p) for p in pl)}"/>' for pl in pls]
    out.append('</g>')
    out.append('<g fill="#cc0000" stroke="none">')
    for p in pts:
        x, y = tx(p).split(",")
        out.append(f'<circle class="marker" cx="{x}" cy="{y}" r="3"/>')
    out.append('</g>')
    out.append('</svg>')
    return ("\n".join(out) + "\n").encode("utf-8")


def write_svg(path, polylines=(), rays=(), points=(), **kw):
    _atomic_write(path, svg_bytes(polylines, rays, points, **kw))
