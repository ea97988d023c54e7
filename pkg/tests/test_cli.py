import json
import subprocess
import sys

import numpy as np
import pytest

from gfd.cli import main

SIM = ["simulate", "--model", "bivnorm-rho", "--theta0", "0.5", "--n", "10", "--methods", "FS,F1,BJ", "--seed", "42", "--reps", "40"]


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _exit_code(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    capsys.readouterr()
    return info.value.code


def test_simulate_row_contract(tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert _run(SIM + ["--out", str(out)], capsys)[0] == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# gfd simulate")
    cfg = json.loads(lines[1][len("# config: "):])
    assert cfg["seed"] == 42 and cfg["reps"] == 40 and cfg["alphas"] == [0.025, 0.05, 0.5, 0.95, 0.975]
    assert lines[2].startswith("model,method,theta0")
    body = lines[3:]
    assert len(body) == 3 * 10
    for m in ("FS", "F1", "BJ"):
        assert sum(l.split(",")[1] == m for l in body) == 10


def test_simulate_is_deterministic_and_round_trips(tmp_path, capsys, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(SIM + ["--out", str(a)])
    main(SIM + ["--out", str(b)])
    assert a.read_text().split("\n", 2)[2] == b.read_text().split("\n", 2)[2]
    first = a.read_bytes()
    # rerunning from the echoed header overwrites the file with the same bytes
    assert main(["simulate", "--config", str(a)]) == 0
    assert a.read_bytes() == first
    monkeypatch.setenv("GFD_JOBS", "2")
    assert main(["simulate", "--config", str(a)]) == 0
    assert a.read_bytes() == first
    monkeypatch.delenv("GFD_JOBS")
    assert main(["simulate", "--config", str(a), "--jobs", "3"]) == 0
    assert a.read_bytes() == first
    capsys.readouterr()


def test_simulate_from_plain_json(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "location-normal", "theta0": [0.0], "n": [3], "methods": ["FS"], "reps": 20}))
    code, out, _ = _run(["simulate", "--config", str(cfg)], capsys)
    assert code == 0
    assert len([l for l in out.splitlines() if not l.startswith("#")]) == 11


def test_simulate_usage_errors(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert _exit_code(["simulate", "--model", "nosuch", "--theta0", "0.5", "--n", "10", "--out", str(out)], capsys) == 2
    assert not out.exists()
    assert _exit_code(["simulate", "--model", "bivnorm-rho", "--theta0", "0.5", "--out", str(out)], capsys) == 2
    assert _exit_code(SIM + ["--methods", "nosuch"], capsys) == 2
    assert _exit_code(SIM + ["--theta0", "2.0"], capsys) == 2
    assert _exit_code(SIM + ["--bogus"], capsys) == 2
    assert _exit_code(SIM + ["--jobs", "0"], capsys) == 2
    assert not out.exists()


def test_simulate_experiment_error_exit_3(capsys):
    argv = ["simulate", "--model", "scaled-normal", "--q", "1", "--theta0", "0.3", "--n", "2", "--methods", "F1", "--reps", "100"]
    code, _, err = _run(argv, capsys)
    assert code == 3 and "failed replications" in err


def test_delta_examples(capsys):
    code, out, _ = _run(["delta", "--model", "bivnorm-rho", "--dge", "matched", "--theta0", "0.5"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["order"] == "second"
    assert set(rep) == {"model", "dge", "theta0", "delta1", "delta2", "order"}
    assert abs(rep["delta1"]) < 1e-8 and abs(rep["delta2"]) < 1e-6

    _, out, _ = _run(["delta", "--model", "scaled-normal", "--q", "1", "--dge", "matched", "--theta0", "1"], capsys)
    rep = json.loads(out)
    assert rep["order"] == "first" and rep["delta2"] == pytest.approx(-2 / 27, abs=1e-6)

    _, out, _ = _run(["delta", "--model", "location-normal", "--dge", "jeffreys", "--theta0", "0"], capsys)
    assert json.loads(out)["delta1"] == 0.0


def test_delta_errors(capsys):
    assert _exit_code(["delta", "--model", "bivnorm-rho", "--dge", "matched", "--theta0", "0.5", "--alpha", "1"], capsys) == 2
    assert _exit_code(["delta", "--model", "bivnorm-rho", "--dge", "nosuch", "--theta0", "0.5"], capsys) == 2
    assert _exit_code(["delta", "--model", "bivnorm-rho", "--dge", "matched", "--theta0", "1.5"], capsys) == 2
    code, _, err = _run(["delta", "--model", "uniform-location", "--dge", "simple", "--theta0", "1"], capsys)
    assert code == 3 and err.startswith("gfd: error:")


def test_contour(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["contour", "--mu-range", "0.03:3:100", "--q-range", "0.03:3:100", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[2] == "mu,q,delta2"
    data = np.array([[float(v) for v in l.split(",")] for l in lines[3:]])
    assert data.shape == (10000, 3)
    i = np.argmin((data[:, 0] - 1) ** 2 + (data[:, 1] - 1) ** 2)
    assert data[i, 2] < 0 and data[i, 2] == pytest.approx(-2 / 27, abs=5e-3)

    code, text, _ = _run(["contour", "--mu-range", "0.5:3:6", "--q-range", "1:3:3"], capsys)
    rows = [l.split(",") for l in text.splitlines()[3:]]
    assert len(rows) == 18
    assert all(float(r[2]) == 0.0 for r in rows if float(r[1]) == 2.0)


@pytest.mark.parametrize("bad", ["0:3:10", "1:3", "a:b:c", "3:1:5", "0.1:3:0"])
def test_contour_malformed_range(bad, tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert _exit_code(["contour", "--mu-range", bad, "--q-range", "0.5:3:5", "--out", str(out)], capsys) == 2
    assert not out.exists()


def test_exactness_small(tmp_path, capsys):
    out = tmp_path / "e.csv"
    code, text, _ = _run(["exactness", "--reps", "100", "--out", str(out)], capsys)
    assert code == 0
    assert text.strip() == "PASS: 80/80 cells within 4 SE"
    assert len(out.read_text().splitlines()) == 3 + 80


def test_density_dump(tmp_path, capsys):
    data = tmp_path / "x.txt"
    data.write_text("1.0\n2.5\n3.0\n1.5\n")
    out = tmp_path / "d.csv"
    assert main(["density-dump", "--model", "location-normal", "--dge", "simple", "--data", str(data), "--out", str(out), "--points", "64"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# gfd density-dump") and lines[2] == "theta,pdf,cdf"
    assert len(lines) == 3 + 64
    biv = tmp_path / "b.csv"
    biv.write_text("0.1,0.2\n-0.5,0.3\n1.2,0.9\n")
    code, text, _ = _run(["density-dump", "--model", "bivnorm-rho", "--dge", "F1", "--data", str(biv)], capsys)
    assert code == 0 and text.splitlines()[2] == "theta,pdf,cdf"
    assert _exit_code(["density-dump", "--model", "bivnorm-rho", "--dge", "F1", "--data", str(tmp_path / "missing")], capsys) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "gfd.cli", "delta", "--model", "bivnorm-rho", "--dge", "F1", "--theta0", "0.2"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["order"] == "second"
    r = subprocess.run([sys.executable, "-m", "gfd.cli", "simulate", "--model", "nosuch"], capture_output=True, text=True)
    assert r.returncode == 2
