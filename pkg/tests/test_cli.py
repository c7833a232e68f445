import csv
import json
from pathlib import Path

import numpy as np
import pytest

from reconlab.cli import ArgError, main, parse_grid
from reconlab.ensembles import Multigraph, regular_tree
from reconlab.model import ModelSpec
from reconlab.replica import sphericity_estimate

DATA = Path(__file__).parent / "data"


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_grid():
    assert parse_grid("0.5,0.9") == [0.5, 0.9]
    assert parse_grid("1..6", int) == [1, 2, 3, 4, 5, 6]
    assert parse_grid("0..1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("2..8:3", int) == [2, 5, 8]
    for bad in ("", "a,b", "3..1", "0..1:0"):
        with pytest.raises(ArgError):
            parse_grid(bad)


def test_gen_poisson_format(tmp_path):
    out = tmp_path / "g.txt"
    assert main(["gen", "poisson", "--n", "1000", "--gamma", "1.0", "--seed", "7", "--out", str(out)]) == 0
    g = Multigraph.load(out)
    lines = out.read_text().splitlines()
    assert lines[0] == f"1000 {g.m}" and len(lines) == g.m + 1
    assert all(len(line.split()) == 3 for line in lines[1:])
    assert (tmp_path / "g.txt.manifest.json").exists()


def test_gen_trees_and_regular(tmp_path, capsys):
    assert main(["gen", "regular", "--n", "10", "--k", "2", "--seed", "1"]) == 0
    g = Multigraph.from_text(capsys.readouterr().out)
    assert np.all(g.degrees() == 3)
    out = tmp_path / "t.txt"
    assert main(["gen", "regular-tree", "--k", "2", "--depth", "2", "--out", str(out)]) == 0
    assert out.read_text() == regular_tree(2, 2).to_text()
    assert main(["gen", "gw-tree", "--gamma", "1.0", "--depth", "3", "--signed"]) == 0


def test_tree_scan_rows_manifest_and_plot(tmp_path):
    out = tmp_path / "tree.csv"
    argv = ["tree-scan", "ising", "--k", "2", "--theta", "0.5,0.9", "--t", "1..6", "--trials", "2000",
            "--seed", "1", "--jobs", "1", "--out", str(out), "--plot"]
    assert main(argv) == 0
    rows = read_rows(out)
    assert len(rows) == 12
    assert list(rows[0]) == ["ensemble", "k_or_gamma", "theta", "lambda", "t", "trials", "bias_mean",
                             "bias_stderr", "seed"]
    m = json.loads((tmp_path / "tree.csv.manifest.json").read_text())
    assert m["config"]["trials"] == 2000 and "numpy" in m["versions"] and m["wall_time_s"] >= 0
    assert (tmp_path / "tree.png").stat().st_size > 0


def test_sphericity_golden(tmp_path):
    out = tmp_path / "s.csv"
    argv = ["replica", "sphericity", "--model", "spinglass", "--gamma", "1.0", "--eps", "0.35", "--n", "8,10",
            "--trials", "20", "--seed", "3", "--jobs", "1", "--out", str(out)]
    assert main(argv) == 0
    assert out.read_text() == (DATA / "sphericity_golden.csv").read_text()
    # the column semantics: library mean of Q(xi)^2
    lib = sphericity_estimate(ModelSpec("spinglass", eps=0.35, gamma=1.0), [8, 10], 20, seed=3)
    rows = read_rows(out)
    for r, want in zip(rows, lib):
        assert r["model"] == "spinglass" and r["param1"] == "1" and r["param2"] == "0.35"
        assert int(r["N"]) == want["N"] and int(r["xi"]) == want["xi"]
        assert float(r["EQ2_mean"]) == pytest.approx(want["EQ2_mean"], rel=1e-11)


def test_phi_scan_cli(capsys):
    assert main(["replica", "phi-scan", "--q", "3", "--gamma", "1.0", "--eps-grid", "0.5", "--delta", "0.05",
                 "--delta-prime", "0.01", "--resolution", "30"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 1 and float(rows[0]["gap"]) > 0
    assert len(rows[0]["argmin_nu"].split()) == 9


def test_exact_cli(tmp_path, capsys):
    g = tmp_path / "edge.txt"
    g.write_text("2 1\n0 1 0\n")
    assert main(["exact", "--graph", str(g), "--theta", "0.5", "--t", "1"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert float(rows[0]["tv"]) == pytest.approx(0.25)
    spec = tmp_path / "m.json"
    spec.write_text(json.dumps({"kind": "ising", "theta": 0.5}))
    assert main(["exact", "--graph", str(g), "--model-file", str(spec), "--t", "0,1"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_graph_and_sg_scan(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["graph-scan", "--theta", "0,0.3", "--n", "30", "--t", "1,2", "--trials", "5", "--burn-in", "10",
                 "--mag-runs", "2", "--mag-sweeps", "20", "--jobs", "1", "--out", str(out)]) == 0
    assert len(read_rows(out)) == 8 and len(read_rows(tmp_path / "g_magnetization.csv")) == 2
    out = tmp_path / "sg.csv"
    assert main(["sg-scan", "--gamma", "0.5,4", "--eps", "0.3", "--n", "20", "--t", "1", "--trials", "4",
                 "--burn-in", "10", "--jobs", "1", "--out", str(out)]) == 0
    assert {r["regime"] for r in read_rows(out)} == {"sub", "super"}


def test_exit_codes(tmp_path, capsys):
    assert main(["tree-scan", "ising"]) == 2
    assert main(["bogus"]) == 2
    assert main(["tree-scan", "ising", "--theta", "0.5", "--t", "1", "--trials", "0"]) == 2
    assert main(["gen", "poisson", "--n", "5"]) == 2
    assert main(["exact", "--graph", str(tmp_path / "missing.txt")]) == 1
    assert main(["gen", "regular", "--n", "3", "--k", "2"]) == 1
    capsys.readouterr()


def _tree_csv(tmp_path, name, jobs, env=None):
    out = tmp_path / name
    argv = ["tree-scan", "spinglass", "--gamma", "1.5", "--eps", "0.2", "--t", "1..3", "--trials", "600",
            "--seed", "4", "--jobs", str(jobs), "--out", str(out)]
    assert main(argv) == 0
    return out.read_bytes()


def test_reruns_byte_identical_and_seed_override(tmp_path, monkeypatch):
    a = _tree_csv(tmp_path, "a.csv", 1)
    b = _tree_csv(tmp_path, "b.csv", 1)
    c = _tree_csv(tmp_path, "c.csv", 3)
    assert a == b == c
    monkeypatch.setenv("RECONLAB_SEED", "99")
    d = _tree_csv(tmp_path, "d.csv", 1)
    assert d != a and b",99\n" in d
    monkeypatch.setenv("RECONLAB_SEED", "x")
    assert main(["tree-scan", "ising", "--theta", "0.5", "--t", "1"]) == 2
