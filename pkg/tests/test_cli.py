import contextlib
import hashlib
import io
import json
import math
import os
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from linegeom import cli
from linegeom import mesh_export as me


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def summary(argv):
    code, out, err = run(argv)
    assert code == 0, err
    return json.loads(out)


def test_fresnel_nodes_and_check(tmp_path):
    s = summary(["fresnel", 4, 2, 1, "--nodes", "--cones", "--check", "--out", tmp_path])
    assert s["nodes"] == 4 and s["check"]["ok"]
    rows = (tmp_path / "nodes.csv").read_text().splitlines()
    assert rows[0] == "x,y,z,signature" and len(rows) == 5
    cones = json.loads((tmp_path / "cones.json").read_text())
    assert all(c["real"] for c in cones)


def test_fresnel_mesh_residual(tmp_path):
    s = summary(["fresnel", 4, 2, 1, "--mesh", "res=48", "--check", "--out", tmp_path])
    assert s["mesh"]["residual_median"] <= s["mesh"]["residual_bound"]
    assert me.read_stl_count(tmp_path / "fresnel.stl")[0] == s["mesh"]["triangles"]


@pytest.mark.parametrize("argv", [["fresnel", 1, 1, 1], ["kummer", 1.0], ["pencil", 1, 0.5, 60, 0.2, 64],
                                  ["fresnel", 4, 2, 1, "--mesh", "res=1"], ["complex", "missing.json"],
                                  ["fresnel", "--config", "missing.json"]])
def test_bad_input_exits_2(argv, tmp_path):
    code, out, err = run(argv + ["--out", tmp_path])
    assert code == 2 and out == "" and err


def test_argparse_error_exits_2(capsys):
    with pytest.raises(SystemExit) as ei:
        cli.main(["fresnel", "abc"])
    assert ei.value.code == 2


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"a2": 4, "b2": 2, "c2": 1, "bogus": 1}))
    assert run(["fresnel", "--config", cfg])[0] == 2


def test_config_merge_flags_win(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"a2": 4, "b2": 2, "c2": 1, "nodes": True}))
    assert summary(["fresnel", "--config", cfg, "--out", tmp_path])["params"] == [4.0, 2.0, 1.0]
    s = summary(["fresnel", 5, "--config", cfg, "--out", tmp_path])
    assert s["params"] == [5.0, 2.0, 1.0] and s["nodes"] == 4


def test_io_error_exits_4(tmp_path):
    f = tmp_path / "file"
    f.write_text("")
    assert run(["fresnel", 4, 2, 1, "--nodes", "--out", f / "sub"])[0] == 4


def test_numeric_failure_exits_3(tmp_path):
    inp = tmp_path / "k.json"
    inp.write_text(json.dumps({"quadric": np.diag([1.0, 1, 1, -1]).tolist()}))
    assert run(["complex", inp, "--singular-surface", "res=16", "--level", "1e6", "--out", tmp_path])[0] == 3


def test_kummer_outputs(tmp_path):
    s = summary(["kummer", 1.5, "--nodes", "--tropes", "--incidence", "--asymptotic", "--check", "--out", tmp_path])
    assert s["nodes"] == 16 and s["tropes"] == 16
    inc = np.loadtxt(tmp_path / "incidence.csv", delimiter=",")
    assert np.all(inc.sum(0) == 6) and np.all(inc.sum(1) == 6)
    causes = json.loads((tmp_path / "asymptotic.json").read_text())
    assert causes and {c["cause"] for c in causes} <= {"node", "parabolic", "box"}
    assert (tmp_path / "asymptotic.obj").read_text().count("\nl ") >= 1


def test_kummer_asymptotic_from_point(tmp_path):
    s = summary(["kummer", 1.5, "--asymptotic", "from=-0.181,-0.1345,-0.0782", "--out", tmp_path])
    assert s["asymptotic"]["node"] == 2
    assert (tmp_path / "asymptotic.obj").read_text().count("\nl ") == 2


def test_equatorial_classify(tmp_path):
    s = summary(["equatorial", 1, 0, -4, 1, 0, -1, "--classify", "--nodes", "--check", "--out", tmp_path])
    assert s["symbol"] == "I1 H2 E1 H2 I1" and s["nodes"] == 4


def test_classify_command():
    s = summary(["classify", 1, 0.5, -2, 1, 0.5, -2, "--check"])
    assert s["symbol"] == "I2 H2 E2 H2 I2" and s["check"]["ok"]


@pytest.mark.parametrize("ptype,theta", [(1, 90), (2, 60), (3, 0)])
def test_pencil(tmp_path, ptype, theta):
    s = summary(["pencil", ptype, 0.5, theta, 0.2, 32, "--strings", "--tubes", 0.004, "--check", "--out", tmp_path])
    assert s["check"]["ok"]
    if ptype == 2:
        assert s["axis_focal_plane_angle"] == pytest.approx(math.radians(60), abs=1e-6)
    obj = (tmp_path / "strings.obj").read_text()
    assert obj.count("\nl ") == 32
    assert me.read_stl_count(tmp_path / "tubes.stl")[0] == s["tubes"]["triangles"]


def test_complex_singular_surface_sphere(tmp_path):
    inp = tmp_path / "k.json"
    inp.write_text(json.dumps({"quadric": np.diag([1.0, 1, 1, -1]).tolist()}))
    s = summary(["complex", inp, "--singular-surface", "res=32", "--check", "--out", tmp_path])
    ss = s["singular_surface"]
    assert ss["level"] > 0
    m = me.read_stl_count(tmp_path / "singular.stl")[0]
    assert m == ss["triangles"]


def test_complex_focal_csv(tmp_path):
    inp = tmp_path / "k.json"
    inp.write_text(json.dumps({"random": 3}))
    s = summary(["complex", inp, "--congruence", "g=1,0,0,0,0,0", "--focal", "--grid", 8, "--check", "--out", tmp_path])
    rows = np.loadtxt(tmp_path / "focal.csv", delimiter=",", skiprows=1)
    assert len(rows) == s["focal"]["samples"]
    assert np.abs(rows[:, 7]).max() <= 1e-9


def test_complex_input_schema(tmp_path):
    inp = tmp_path / "k.json"
    inp.write_text(json.dumps({"Q": [1, 2, 3]}))
    assert run(["complex", inp, "--out", tmp_path])[0] == 2


def _scene(tmp_path, name):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cli.GALLERY_SCENES[name]))
    return p


def test_caustic_ellipse_collapses(tmp_path):
    s = summary(["caustic2d", _scene(tmp_path, "caustic_ellipse_focus"), "--svg", "--csv", "--check", "--out", tmp_path])
    assert s["collapsed"] and s["point"] == pytest.approx([math.sqrt(3), 0.0], abs=1e-6)
    root = ET.parse(tmp_path / "caustic.svg").getroot()
    assert root.tag.endswith("svg")


def test_caustic_nephroid(tmp_path):
    s = summary(["caustic2d", _scene(tmp_path, "caustic_circle_parallel"), "--csv", "--check", "--out", tmp_path])
    assert s["oracle_max_deviation"] <= 1e-5
    assert s["cusps"] == [pytest.approx([0.0, 0.5], abs=1e-9)]


def test_diacaustic_requires_index(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"curve": {"type": "circle"}, "source": {"type": "parallel"}, "mode": "diacaustic"}))
    assert run(["caustic2d", p])[0] == 2


def test_repeat_runs_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        code, out, _ = run(["fresnel", 4, 2, 1, "--nodes", "--mesh", "res=24", "--out", d])
        outs.append((out, cli.sha256_tree(d)))
    assert outs[0] == outs[1]


def test_thread_count_does_not_change_bytes(tmp_path):
    env = dict(os.environ)
    digests = []
    for n in ("1", "3"):
        env["LINEGEOM_THREADS"] = n
        d = tmp_path / n
        subprocess.run([sys.executable, "-m", "linegeom.cli", "kummer", "1.5", "--mesh", "res=40", "--out", str(d)],
                       check=True, env=env, capture_output=True)
        digests.append(hashlib.sha256((d / "kummer.stl").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_gallery_quick_manifest(tmp_path):
    s = summary(["gallery", "--quick", "--out", tmp_path])
    assert all(not j["problems"] for j in s["jobs"].values())
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["files"] == cli.sha256_tree(tmp_path, exclude=("manifest.json",))
    assert {"kummer_1.5/kummer.stl", "equatorial_nested/summary.json", "caustic_circle_rim/caustic.svg"} <= set(manifest["files"])
