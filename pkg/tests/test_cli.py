import subprocess
import sys

import pytest

from histlearn import io
from histlearn.cli import dispatch


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert dispatch("gen-data --preset type1 --r 1024 --records 100000 --seed 7 --out d.csv".split()) == 0
    assert dispatch("gen-queries --data d.csv --count 300 --seed 1 --out q.csv".split()) == 0
    assert dispatch("gen-queries --data d.csv --count 200 --seed 2 --out qt.csv".split()) == 0
    assert dispatch("label --data d.csv --queries q.csv --out train.csv".split()) == 0
    assert dispatch("label --data d.csv --queries qt.csv --out test.csv".split()) == 0
    return tmp_path


def test_pipeline(workdir, capsys):
    assert io.read_dataset("d.csv").total == 100_000
    argv = "train --method sphist --buckets 20 --qfrs train.csv --out h.csv --sketch-out sk.csv"
    assert dispatch(argv.split()) == 0
    assert len(io.read_histogram("h.csv")) <= 20
    capsys.readouterr()
    assert dispatch("evaluate --hist h.csv --qfrs test.csv".split()) == 0
    err = float(capsys.readouterr().out)
    assert 0 <= err < 100
    assert dispatch("estimate --sketch sk.csv --queries qt.csv --out est.csv".split()) == 0
    _, est = io.read_qfrs("est.csv")
    assert len(est) == 200


def test_idempotent(workdir):
    first = (workdir / "train.csv").read_bytes()
    assert dispatch("label --data d.csv --queries q.csv --out train.csv".split()) == 0
    assert (workdir / "train.csv").read_bytes() == first
    for method in ("equihist", "sphist", "online-equihist"):
        for out in ("a.csv", "b.csv"):
            assert dispatch(f"train --method {method} --qfrs train.csv --out {out}".split()) == 0
        assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()


def test_config_overrides(workdir):
    (workdir / "c.txt").write_text("method=equihist\nbuckets=8\nqfrs=train.csv\n")
    assert dispatch("train --config c.txt --out h.csv".split()) == 0
    assert len(io.read_histogram("h.csv")) == 8
    # explicit flags beat the file
    assert dispatch("train --config c.txt --buckets 4 --out h.csv".split()) == 0
    assert len(io.read_histogram("h.csv")) == 4
    (workdir / "bad.txt").write_text("colour=blue\n")
    assert dispatch("train --config bad.txt --qfrs train.csv --out h.csv".split()) == 1


def test_online_sim(workdir):
    argv = ("online-sim --data d.csv --stream 200 --test-size 100 --eval-every 50 "
            "--perturb-at 100 --decay 0.99 --out traj.csv")
    assert dispatch(argv.split()) == 0
    lines = (workdir / "traj.csv").read_text().splitlines()
    assert lines[0] == "step,avg_rel_error"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [50, 100, 101, 150, 200]


def test_sweep_requires_seed(workdir):
    (workdir / "e.txt").write_text("methods=equihist\nseeds=0\ntest_size=50\nsweep_values=30\nrecords=2000\n")
    assert dispatch("sweep --config e.txt --out r.csv".split()) == 1
    assert dispatch("sweep --config e.txt --seed 5 --out r.csv".split()) == 0
    assert (workdir / "r.csv").read_text().startswith("method,sweep_var")
    assert (workdir / "r.gp").exists()
    (workdir / "e.txt").write_text("methods=quadtree\n")
    assert dispatch("sweep --config e.txt --seed 5 --out r.csv".split()) == 1


@pytest.mark.parametrize(
    "argv, code",
    [
        ("", 1),
        ("frobnicate", 1),
        ("train --qfrs train.csv", 1),
        ("train --qfrs train.csv --out h.csv --buckets 0", 1),
        ("train --method equihist --qfrs train.csv --out h.csv --sketch-out s.csv", 1),
        ("train --qfrs missing.csv --out h.csv", 2),
        ("train --qfrs train.csv --out nodir/h.csv", 2),
        ("evaluate --hist d.csv --qfrs test.csv", 2),
        ("label --data d.csv --queries d.csv --out x.csv", 2),
        ("gen-queries --data d.csv --count 5 --max-volume-fraction 2 --out x.csv", 2),
    ],
)
def test_exit_codes(workdir, argv, code, capsys):
    assert dispatch(argv.split()) == code
    assert capsys.readouterr().err


def test_records_ingest(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "rec.csv").write_text("1,2\n2,2\n")
    assert dispatch("gen-data --records-csv rec.csv --r 2,2 --out d.csv".split()) == 0
    assert io.read_dataset("d.csv").counts.tolist() == [[0, 1], [0, 1]]
    (tmp_path / "rec.csv").write_text("1,9\n")
    assert dispatch("gen-data --records-csv rec.csv --r 2,2 --out d.csv".split()) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "histlearn", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "online-sim" in out.stdout
    out = subprocess.run([sys.executable, "-m", "histlearn", "train"], capture_output=True, text=True)
    assert out.returncode == 1 and "usage" in out.stderr
