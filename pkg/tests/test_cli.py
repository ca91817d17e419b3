import json
import subprocess
import sys

import numpy as np
import pytest

from brushopt import cli, io
from brushopt.generator import random_feasible
from brushopt.morphology import make_brush


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    assert run("generate", "--brush", "circle:5", "--shape", "24x20", "--seed", 7, "--out", a) == 0
    assert run("generate", "--brush", "circle:5", "--shape", "24x20", "--seed", 7, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert io.read_pgm(a).shape == (24, 20)


def test_generate_trace(tmp_path):
    trace = tmp_path / "t.jsonl"
    run("generate", "--brush", "notched:3", "--shape", "8", "--out", tmp_path / "d.csv", "--trace", trace)
    lines = [json.loads(l) for l in trace.read_text().splitlines()]
    assert lines and all({"step", "kind", "touches"} <= set(l) for l in lines)


def test_check_exit_codes(tmp_path, capsys):
    x = random_feasible(make_brush("circle", 5), (20, 20), seed=1)
    path = tmp_path / "d.pgm"
    io.write_pgm(path, x)
    assert run("check", path, "--brush", "circle:5", "--json", "--pitch", 20) == cli.EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["feasible"] and report["pitch_nm"] == 20
    y = x.copy()
    y[:, :] = -1
    y[10, 10] = 1
    io.write_pgm(path, y)
    assert run("check", path, "--brush", "circle:5") == cli.EXIT_INFEASIBLE


def test_bad_input_exit_code(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_text("P2\n1 1\n255\n7\n")
    assert run("check", path, "--brush", "circle:3") == cli.EXIT_BAD_INPUT
    assert run("export", tmp_path / "missing.csv") == cli.EXIT_BAD_INPUT
    cfg = tmp_path / "c.json"
    cfg.write_text('{"brush": "circle:3", "colour": "red"}')
    assert run("optimize", "--config", cfg, "--out", tmp_path / "r") == cli.EXIT_BAD_INPUT


def test_argparse_rejects_bad_brush():
    with pytest.raises(SystemExit):
        run("generate", "--brush", "star:3", "--out", "x.pgm")


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    assert run("generate", "--brush", "circle:3", "--shape", "6x6", "--out", "sub/d.pgm") == 0
    assert (tmp_path / "sub" / "d.pgm").exists()


def test_export_contours(tmp_path):
    x = -np.ones((6, 6), np.int8)
    x[1:4, 2:5] = 1
    io.write_csv(tmp_path / "d.csv", x)
    assert run("export", tmp_path / "d.csv", "--pitch", 20, "--out", tmp_path / "c.json") == 0
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["units"] == "nm" and len(doc["loops"]) == 1


def _config(tmp_path, **kw):
    d = {"problem": "bend", "pitch_nm": 40, "brush": "circle:3", "budget": 2, "seed": 0}
    d.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return path


def test_optimize_not_achieved_and_deterministic(tmp_path):
    cfg = _config(tmp_path)
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        assert run("optimize", "--config", cfg, "--out", out) == cli.EXIT_NOT_ACHIEVED
        assert not (out / cli.INCOMPLETE_MARKER).exists()
    names = sorted(p.name for p in outs[0].iterdir())
    assert {"config.json", "trajectory.csv", "best.pgm", "final.pgm", "initial.pgm", "spectra.csv"} <= set(names)
    assert names == sorted(p.name for p in outs[1].iterdir())
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n
    rows = (outs[0] / "trajectory.csv").read_text().splitlines()
    assert len(rows) == 1 + 3


def test_optimize_solver_failure_marker(tmp_path, monkeypatch):
    from brushopt import optimize

    def failing(cfg, problem=None, callback=None):
        return optimize.Trajectory(failed=True, error="step 0: singular matrix")

    monkeypatch.setattr(optimize, "run_optimization", failing)
    out = tmp_path / "r"
    assert run("optimize", "--config", _config(tmp_path), "--out", out) == cli.EXIT_SOLVER_FAILED
    assert (out / cli.FAILED_MARKER).exists() and (out / cli.INCOMPLETE_MARKER).exists()


def test_console_entry_point(tmp_path):
    out = tmp_path / "d.pgm"
    r = subprocess.run([sys.executable, "-m", "brushopt.cli", "generate", "--brush", "circle:3", "--shape", "8x8",
                        "--out", str(out)], capture_output=True, text=True)
    assert r.returncode == 0 and out.exists()
