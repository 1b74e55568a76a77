import struct
import warnings

import numpy as np
import pytest

from linegeom import mesh_export as me
from linegeom import quartic_zoo as qz
from linegeom import ray_systems as rs
from linegeom.errors import DegenerateSegment, EmptyIsosurface, ExportError, InputError

SPHERE = qz.quadric_surface(np.diag([1.0, 1.0, 1.0, -1.0]))
BOX = ((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))

# component count of the Kummer mu2 = 1.5 mesh at 128 cells, recorded on first run
KUMMER_COMPONENTS = 11


def test_sphere_area_and_euler():
    m = me.marching_cubes(SPHERE, BOX, 64)
    assert abs(m.area() - 4 * np.pi) <= 0.02 * 4 * np.pi
    assert m.euler_characteristic() == 2
    assert m.components() == 1


def test_sphere_residual_fine_grid():
    m = me.marching_cubes(SPHERE, BOX, 96)
    med, lim = me.mesh_residual(m, SPHERE)
    assert med <= lim
    assert me.check_mesh(m, SPHERE) == []


def test_residual_shrinks_quadratically():
    r = [me.mesh_residual(me.marching_cubes(SPHERE, BOX, n), SPHERE)[0] for n in (16, 32, 64)]
    assert r[1] < r[0] / 3 and r[2] < r[1] / 3


@pytest.mark.slow
def test_kummer_mesh():
    K = qz.kummer_surface(1.5)
    m = me.marching_cubes(K, None, 128)
    assert not m.empty
    med, lim = me.mesh_residual(m, K)
    assert med <= lim
    assert m.components() == KUMMER_COMPONENTS


@pytest.mark.parametrize("res", [1, 0, (4, 4, 1), 2.5])
def test_bad_resolution(res):
    with pytest.raises(InputError):
        me.marching_cubes(SPHERE, BOX, res)


def test_empty_isosurface():
    with pytest.raises(EmptyIsosurface) as ei:
        me.marching_cubes(SPHERE, ((3, 3, 3), (4, 4, 4)), 8)
    assert ei.value.mesh.empty


def test_level_offset():
    m = me.marching_cubes(SPHERE, BOX, 48, level=3.0)
    r = np.linalg.norm(m.vertices, axis=1)
    assert np.allclose(r, 2.0, atol=0.02)


def test_threaded_grid_identical(monkeypatch):
    a = me.marching_cubes(SPHERE, BOX, 24)
    monkeypatch.setenv("LINEGEOM_THREADS", "4")
    b = me.marching_cubes(SPHERE, BOX, 24)
    assert me.obj_bytes(a) == me.obj_bytes(b)


def _one_triangle():
    return me.TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def test_single_triangle_stl(tmp_path):
    p = tmp_path / "t.stl"
    me.write_stl(_one_triangle(), p)
    data = p.read_bytes()
    assert len(data) == 134
    assert struct.unpack_from("<I", data, 80)[0] == 1
    assert struct.unpack_from("<3f", data, 84) == (0.0, 0.0, 1.0)
    assert me.read_stl_count(p) == (1, 1)


def test_stl_count_matches(tmp_path):
    m = me.marching_cubes(SPHERE, BOX, 16)
    p = tmp_path / "s.stl"
    me.write_stl(m, p)
    n, recs = me.read_stl_count(p)
    assert n == recs == len(m)


def test_ascii_stl_roundtrips_floats(tmp_path):
    m = me.TriangleMesh([[0.1, 0.2, 0.3], [1 / 3, 0, 0], [0, 2 / 3, 0]], [[0, 1, 2]])
    p = tmp_path / "a.stl"
    me.write_stl(m, p, mode="ascii")
    txt = p.read_text()
    assert txt.startswith("solid ") and txt.rstrip().endswith("endsolid linegeom")
    vs = [list(map(float, l.split()[1:])) for l in txt.splitlines() if l.strip().startswith("vertex")]
    assert np.array_equal(np.array(vs), m.vertices)


def test_obj_golden_determinism(tmp_path):
    a = me.marching_cubes(SPHERE, BOX, 16)
    b = me.marching_cubes(SPHERE, BOX, 16)
    me.write_obj(tmp_path / "a.obj", a)
    me.write_obj(tmp_path / "b.obj", b)
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()


def test_obj_polylines(tmp_path):
    pl = me.PolylineSet([[[0, 0, 0], [1, 0, 0], [1, 1, 0]], [[0, 0], [0, 1]]], "ruling")
    me.write_obj(tmp_path / "p.obj", _one_triangle(), pl)
    lines = (tmp_path / "p.obj").read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 3 + 3 + 2
    assert "f 1 2 3" in lines
    assert "l 4 5 6" in lines and "l 7 8" in lines


def test_polyline_validation():
    with pytest.raises(InputError):
        me.PolylineSet([[[0, 0, 0]]], "asymptotic")
    with pytest.raises(InputError):
        me.PolylineSet([[[0, 0, 0], [np.nan, 0, 0]]])
    with pytest.raises(InputError):
        me.PolylineSet([], "bogus")


def test_csv(tmp_path):
    me.write_csv(tmp_path / "p.csv", np.array([[0.1, 2.0, -3.5]]), header=["x", "y", "z"])
    assert (tmp_path / "p.csv").read_text() == "x,y,z\n0.1,2.0,-3.5\n"
    me.write_csv(tmp_path / "l.csv", me.PolylineSet([[[0, 0], [1, 1]]]))
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "polyline,index,x,y"


def test_empty_geometry_warns(tmp_path):
    with pytest.warns(me.EmptyGeometry):
        me.write_csv(tmp_path / "e.csv", [])


def test_export_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError):
        me.write_stl(_one_triangle(), blocker / "sub" / "t.stl")


def test_caustic_svg_single_marker(tmp_path):
    curve = rs.PlaneCurve.ellipse(2.0, 1.0)
    c = np.sqrt(3.0)
    ts = np.linspace(0.2, 2 * np.pi - 0.2, 60)
    caus = rs.caustic_2d(lambda t: np.array([-c, 0.0]) + 0 * t[..., None],
                         lambda t: np.stack([np.cos(t), np.sin(t)], -1), ts, "catacaustic", curve)
    pts = caus.points[np.all(np.isfinite(caus.points), axis=1)]
    centre = pts.mean(axis=0, keepdims=True)
    assert np.abs(pts - centre).max() <= 1e-6
    me.write_svg(tmp_path / "c.svg", rays=[], points=centre, view=((-2, -1), (2, 1)))
    txt = (tmp_path / "c.svg").read_text()
    assert txt.count('class="marker"') == 1
    assert txt.startswith("<?xml") and 'version="1.1"' in txt


def test_tube_triangle_count():
    m = me.tube_strings(np.array([[[0, 0, 0], [1, 0, 0]]]), 0.05, 8)
    assert len(m) == 4 * 8
    assert m.euler_characteristic() == 2
    # radius check: side vertices sit at distance 0.05 from the axis
    side = m.vertices[:16]
    assert np.allclose(np.linalg.norm(side[:, 1:], axis=1), 0.05)


def test_tube_pencil_model():
    model = rs.thin_pencil_model(f=0.5, theta=np.pi / 2, pencil_type=1, rho=0.2, n=64)
    m = me.tube_strings(model, 0.005, 6)
    assert len(m) == 64 * 24
    assert np.all(np.isfinite(m.vertices))


@pytest.mark.parametrize("radius,sides", [(0.0, 8), (-1.0, 8), (0.05, 2)])
def test_tube_errors(radius, sides):
    with pytest.raises(DegenerateSegment):
        me.tube_strings(np.array([[[0, 0, 0], [1, 0, 0]]]), radius, sides)


def test_tube_short_segment():
    with pytest.raises(DegenerateSegment):
        me.tube_strings(np.array([[[0, 0, 0], [0.1, 0, 0]]]), 0.05, 8)


def test_cleanup_drops_degenerate():
    m = me.TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2], [0, 1, 3]])
    c = me.cleanup(m, 10.0)
    assert len(c) == 1 and len(c.vertices) == 3


def test_node_sphere_closed():
    s = me.sphere_mesh((1, 2, 3), 0.1)
    assert s.euler_characteristic() == 2
    assert np.allclose(np.linalg.norm(s.vertices - [1, 2, 3], axis=1), 0.1)
