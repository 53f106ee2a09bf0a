import json

import pytest

from martin_quadrant.cli import csv_bytes, fmt, main
from martin_quadrant.config import ConfigError, load_config, parse_config

M1_TEXT = """\
name = M1
seed = 7
q = 1 0
# the measure block
1 0 0.35
-1 0 0.15
0 1 0.35
0 -1 0.15
"""


def test_parse_fixture():
    cfg = parse_config(M1_TEXT)
    assert len(cfg.measure.entries) == 4
    assert cfg.seed == 7 and cfg.q == (1.0, 0.0)
    assert cfg.radii == (20.0, 30.0, 40.0, 60.0)


def test_mass_sum_error_names_sum():
    text = M1_TEXT.replace("0 -1 0.15", "0 -1 0.14")
    with pytest.raises(ConfigError, match="0.99"):
        parse_config(text)


def test_line_numbers():
    with pytest.raises(ConfigError, match="line 2: unknown key"):
        parse_config("seed = 1\ncolour = blue\n")
    with pytest.raises(ConfigError, match="line 3: duplicate offset"):
        parse_config("1 0 0.5\n-1 0 0.5\n1 0 0.1\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("q = 1\n")


def test_defaults_filled():
    cfg = parse_config("radii =\n")
    assert cfg.radii == (20.0, 30.0, 40.0, 60.0)
    assert cfg.measure.name == "M1" and cfg.margin == 0 and cfg.delta == 0.3


def test_measure_file(tmp_path):
    (tmp_path / "m.txt").write_text("1 0 0.5\n0 1 0.25\n-1 -1 0.25\n")
    (tmp_path / "run.cfg").write_text("name = tri\nmeasure_file = m.txt\n")
    cfg = load_config(tmp_path / "run.cfg")
    assert cfg.measure.as_dict()[(-1, -1)] == 0.25


def test_formatting():
    assert fmt(0.1) == "0.1" and fmt(1e-20) == "1e-20" and fmt(True) == "true"
    assert csv_bytes(["a", "b"], [[1, 2.5]]) == b"a,b\n1,2.5\n"


def test_geometry_sweep(tmp_path):
    assert main(["geometry", "--sweep", "64", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "geometry.csv").read_bytes().split(b"\n")
    assert lines[0].startswith(b"k,theta,q1,q2,a1,a2,rate")
    assert len([ln for ln in lines[1:] if ln]) == 64
    assert b"\r" not in (tmp_path / "geometry.csv").read_bytes()
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["passed"] and man["error"] is None and "geometry.csv" in man["outputs"]


def test_mc_deterministic_across_threads(tmp_path):
    cfg = tmp_path / "mc.cfg"
    cfg.write_text("twist = -0.2 -0.1\nmc_samples = 20000\nmc_horizon = 1000\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mc", "--config", str(cfg), "--out", str(a), "--seed", "3", "--threads", "1"]) == 0
    assert main(["mc", "--config", str(cfg), "--out", str(b), "--seed", "3", "--threads", "0"]) == 0
    assert (a / "mc.csv").read_bytes() == (b / "mc.csv").read_bytes()


def test_error_sets_exit_status(tmp_path):
    # ratio limits are undefined for the quadrant walk
    assert main(["limits", "ratiolimit", "--out", str(tmp_path)]) != 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["error"]["type"] == "ValueError"
    bad = tmp_path / "bad.cfg"
    bad.write_text("1 0 0.5\n-1 0 0.4\n")
    assert main(["validate", "--config", str(bad), "--out", str(tmp_path / "v")]) != 0
    man = json.loads((tmp_path / "v" / "manifest.json").read_text())
    assert "0.9" in man["error"]["message"]


def test_validate_and_limits(tmp_path):
    assert main(["validate", "--out", str(tmp_path)]) == 0
    cfg = tmp_path / "t.cfg"
    cfg.write_text("q = 1 1\nradii = 20 30\npoints = 2 3; 4 1\n")
    assert main(["limits", "theorem1", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    head = (tmp_path / "limits_theorem1.csv").read_text().splitlines()[0]
    assert head.startswith("radius,point_x,point_y,z_n_x,z_n_y,observed,target,relative_gap")
    verdict = json.loads((tmp_path / "limits_theorem1.json").read_text())
    assert verdict["passed"]
