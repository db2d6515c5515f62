import json
import subprocess
import sys

import numpy as np
import pytest

from nmat.cli import main, read_snapshots

GAUSS_CFG = {"potential": {"radial": {"kind": "power", "C": 1, "b": 1}}}
WORKED_CFG = {"potential": {"radial": {"kind": "power"}, "poly": [0.2]}}
SAMPLE_CFG = {
    "potential": {"radial": {"kind": "power"}, "poly": [0.2]},
    "sampler": {"N": 12, "sweeps": 600, "burn_in": 200, "thin": 50, "seed": 3, "chains": 2},
    "density": {"center": [0.2, 0.0], "extent": 1.5, "n": 10},
}


def write_cfg(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("NMAT_THREADS", "1")
    return tmp_path


def curve_of(path):
    doc = json.loads(open(path).read())
    return doc, np.array([complex(x, y) for x, y in doc["curve"]])


# -- boundary --------------------------------------------------------------------------------


def test_boundary_gaussian(work):
    cfg = write_cfg(work / "g.json", GAUSS_CFG)
    assert main(["boundary", "--config", cfg, "--out", "b.json"]) == 0
    doc, curve = curve_of("b.json")
    assert doc["a"] == pytest.approx(1.0, abs=1e-12)
    assert np.abs(np.abs(curve) - 1).max() < 1e-8
    assert len(doc["config_fingerprint"]) == 64


def test_boundary_worked_case_and_svg(work):
    cfg = write_cfg(work / "w.json", WORKED_CFG)
    assert main(["boundary", "--config", cfg, "--out", "b.json", "--svg", "b.svg"]) == 0
    _, curve = curve_of("b.json")
    assert np.abs(np.abs(curve - 0.2) - 1).max() < 1e-8
    first = (work / "b.svg").read_bytes(), (work / "b.json").read_bytes()
    assert first[0].startswith(b"<?xml")
    assert main(["boundary", "--config", cfg, "--out", "b.json", "--svg", "b.svg"]) == 0
    assert ((work / "b.svg").read_bytes(), (work / "b.json").read_bytes()) == first


def test_boundary_breakdown_exit(work, capsys):
    cfg = write_cfg(work / "k.json", {"potential": {"radial": {"kind": "power"}, "poly": [5.0]}})
    assert main(["boundary", "--config", cfg, "--out", "b.json"]) == 2
    assert "boundary breakdown" in capsys.readouterr().err


def test_config_errors(work, capsys):
    bogus = write_cfg(work / "x.json", {**GAUSS_CFG, "bogus": 1})
    assert main(["boundary", "--config", bogus]) == 1
    assert "bogus" in capsys.readouterr().err
    bad = work / "bad.json"
    bad.write_text("{not json")
    assert main(["boundary", "--config", str(bad)]) == 1
    assert main(["boundary", "--config", str(work / "missing.json")]) == 1
    assert main(["boundary"]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1
    neg = write_cfg(work / "n.json", {"potential": {"radial": {"kind": "power", "b": -1}}})
    assert main(["boundary", "--config", neg]) == 1


# -- sample / density ---------------------------------------------------------------------------


def test_sample_deterministic_and_density(work):
    cfg = write_cfg(work / "s.json", SAMPLE_CFG)
    assert main(["sample", "--config", cfg, "--out", "a.jsonl"]) == 0
    assert main(["sample", "--config", cfg, "--out", "b.jsonl"]) == 0
    assert (work / "a.jsonl").read_bytes() == (work / "b.jsonl").read_bytes()
    header, snaps = read_snapshots("a.jsonl")
    assert header["N"] == 12 and header["chains"] == 2 and len(header["fingerprint"]) == 64
    assert len(snaps) == 2 * 8
    assert sorted({s.chain for s in snaps}) == [0, 1]
    assert not list(work.glob("*.part")) and not list(work.glob("*.ckpt"))

    assert main(["density", "--config", cfg, "a.jsonl", "--out", "d1.csv"]) == 0
    assert main(["density", "--config", cfg, "b.jsonl", "--out", "d2.csv", "--svg", "d.svg"]) == 0
    text = (work / "d1.csv").read_text()
    assert text == (work / "d2.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == f"# fingerprint {header['fingerprint']}" and lines[1] == "x,y,density"
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    assert rows.shape == (100, 3)
    cell = (2 * 1.5 / 10) ** 2
    assert rows[:, 2].sum() * cell == pytest.approx(1.0, abs=0.05)


def test_sample_seed_flag_changes_output(work):
    cfg = write_cfg(work / "s.json", SAMPLE_CFG)
    assert main(["sample", "--config", cfg, "--out", "a.jsonl"]) == 0
    assert main(["sample", "--config", cfg, "--out", "b.jsonl", "--seed", "4"]) == 0
    assert (work / "a.jsonl").read_bytes() != (work / "b.jsonl").read_bytes()


def test_sample_resume_matches(work):
    cfg = write_cfg(work / "s.json", SAMPLE_CFG)
    assert main(["sample", "--config", cfg, "--out", "ref.jsonl"]) == 0
    assert main(["sample", "--config", cfg, "--out", "r.jsonl", "--stop-after", "330"]) == 0
    assert not (work / "r.jsonl").exists()
    assert main(["sample", "--config", cfg, "--out", "r.jsonl", "--resume"]) == 0
    assert (work / "r.jsonl").read_bytes() == (work / "ref.jsonl").read_bytes()


def test_sample_threads_do_not_change_output(work, monkeypatch):
    cfg = write_cfg(work / "s.json", SAMPLE_CFG)
    assert main(["sample", "--config", cfg, "--out", "a.jsonl"]) == 0
    monkeypatch.setenv("NMAT_THREADS", "2")
    assert main(["sample", "--config", cfg, "--out", "b.jsonl"]) == 0
    assert (work / "a.jsonl").read_bytes() == (work / "b.jsonl").read_bytes()
    monkeypatch.setenv("NMAT_THREADS", "many")
    assert main(["sample", "--config", cfg, "--out", "c.jsonl"]) == 1


def test_density_refuses_other_fingerprint(work):
    cfg = write_cfg(work / "s.json", SAMPLE_CFG)
    other = write_cfg(work / "o.json", {**SAMPLE_CFG, "potential": {"radial": {"kind": "power"}, "poly": [0.1]}})
    assert main(["sample", "--config", cfg, "--out", "a.jsonl"]) == 0
    assert main(["density", "--config", other, "a.jsonl", "--out", "d.csv"]) == 1


# -- verify / compare ---------------------------------------------------------------------------------


def test_verify_exit_codes(work, capsys):
    cfg = write_cfg(work / "w.json", WORKED_CFG)
    assert main(["boundary", "--config", cfg, "--out", "b.json"]) == 0
    assert main(["verify", "--config", cfg, "b.json", "--out", "r.json"]) == 0
    rep = json.loads((work / "r.json").read_text())
    assert rep["ok"] and rep["variational_inside_dev"] < 5e-3
    assert main(["verify", "--config", cfg, "b.json", "--out", "r2.json", "--tol", "1e-15"]) == 3
    assert json.loads((work / "r2.json").read_text())["ok"] is False
    other = write_cfg(work / "o.json", GAUSS_CFG)
    capsys.readouterr()
    assert main(["verify", "--config", other, "b.json"]) == 1
    assert "fingerprint" in capsys.readouterr().err


def test_compare(work):
    doc = {**SAMPLE_CFG, "sampler": {"N": 32, "sweeps": 3000, "burn_in": 1000, "thin": 50, "seed": 1, "chains": 1}}
    cfg = write_cfg(work / "c.json", doc)
    assert main(["boundary", "--config", cfg, "--out", "b.json"]) == 0
    assert main(["sample", "--config", cfg, "--out", "s.jsonl"]) == 0
    code = main(["compare", "--config", cfg, "b.json", "s.jsonl", "--out", "cmp.json", "--svg", "o.svg"])
    rep = json.loads((work / "cmp.json").read_text())
    assert code == (0 if rep["ok"] else 3)
    assert rep["outside_fraction"] < 0.05
    assert rep["predicted_centroid"][0] == pytest.approx(0.2, abs=1e-8)
    assert (work / "o.svg").exists()
    assert main(["compare", "--config", cfg, "b.json", "s.jsonl", "--eps", "-1"]) == 1


# -- closed form / genmat demo ---------------------------------------------------------------------------


def test_closed_form(work, capsys):
    assert main(["closed-form", "--C", "1", "--b", "1", "--K", "0.2", "--out", "cf.json", "--points", "64"]) == 0
    out = capsys.readouterr().out
    assert "a = " in out and "beta = " in out
    doc, curve = curve_of("cf.json")
    assert doc["a"] == pytest.approx(1.0, abs=1e-14)
    assert doc["beta"][0] == pytest.approx(0.2, abs=1e-14)
    assert curve.size == 64 and np.abs(np.abs(curve - 0.2) - 1).max() < 1e-12
    assert main(["closed-form", "--C", "1", "--b", "1"]) == 1
    assert main(["closed-form", "--C", "1", "--b", "1", "--K", "1.5"]) == 2


def test_genmat_demo(work, capsys):
    cfg = write_cfg(work / "g.json", {"potential": {"radial": {"kind": "generalized", "alphas": [-1, 1]}},
                                      "sampler": {"N": 6, "seed": 2}})
    assert main(["genmat-demo", "--config", cfg, "--out", "demo.json"]) == 0
    diag = json.loads((work / "demo.json").read_text())
    assert diag["N"] == 6 and diag["m"] == 2
    assert diag["commutator_defect"] < 1e-10
    assert diag["monodromy_spectrum_error"] < 1e-8 and diag["round_trip_error"] < 1e-8
    power = write_cfg(work / "p.json", GAUSS_CFG)
    assert main(["genmat-demo", "--config", power]) == 1


def test_module_entry_point(work):
    res = subprocess.run([sys.executable, "-m", "nmat", "closed-form", "--C", "0.5", "--b", "2", "--K", "0.1",
                          "--out", "cf.json"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "nmat", "nope"], capture_output=True, text=True)
    assert res.returncode == 1
