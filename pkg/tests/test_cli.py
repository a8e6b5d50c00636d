import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nonlocal_cl import cli
from nonlocal_cl.cli import main
from nonlocal_cl.errors import BlowupAbort
from nonlocal_cl.io import read_csv

FAST = ["--override", "particles=1000", "--override", "dt=1e-3", "--override", "cells=500"]


def artifacts(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.suffix == ".csv":
            out[str(p.relative_to(root))] = p.read_bytes()
        elif p.suffix == ".json":
            d = json.loads(p.read_text())
            d.get("metadata", {}).pop("created", None)
            out[str(p.relative_to(root))] = d
    return out


def test_blowup_exact_summary(tmp_path):
    out = tmp_path / "bx"
    assert main(["simulate", "blowup-exact", "--out", str(out), *FAST]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert 0.48 <= s["lagrangian"]["extrapolated_blowup"] <= 0.52
    assert s["crossval"]["t"] == 0.25 and s["crossval"]["distance"] < 0.2
    assert s["bounds"]["T_q"] <= 0.5
    assert {"exact_l1_error", "steps"} <= set(s["eulerian"])
    assert (out / "figures" / "density.png").stat().st_size > 0
    assert (out / "figures" / "max_u.png").exists()
    snaps = sorted(p.name for p in (out / "snapshots").iterdir())
    assert "lagrangian_trajectories.csv" in snaps
    assert "eulerian_t0.250000.csv" in snaps
    header = (out / "diagnostics.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["solver", "t", "mass", "max_u"]
    assert "vel_min" in header and "l2" in header


def test_counterexample_centroid_series(tmp_path, capsys):
    out = tmp_path / "cx"
    rc = main(["simulate", "counterexample", "--alpha", "0.5", "--n", "36", "--out", str(out), "--no-plots",
               "--override", "particles=800", "--override", "dt=1e-3"])
    assert rc == 0
    s = json.loads((out / "summary.json").read_text())["lagrangian"]
    t = np.array(s["centroid_series"]["t"])
    c = np.array(s["centroid_series"]["centroid"])
    assert t[-1] == pytest.approx(1.0)
    assert np.max(np.abs(c - (0.5 * t + 0.25))) < 1e-9
    assert s["velocity_window_violations"] == 0
    assert not (out / "figures").exists()


def test_reruns_are_byte_identical(tmp_path):
    args = ["simulate", "pedestrian-demo", "--no-plots", *FAST, "--override", "t_end=0.3",
            "--override", "eulerian_t_end=0.3"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    a, b = artifacts(tmp_path / "a"), artifacts(tmp_path / "b")
    assert a.keys() == b.keys() and len(a) > 5
    for key in a:
        assert a[key] == b[key], key


def test_overlapping_datum_exits_with_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('scenario = "bad"\ndatum.pieces = [[0.0, 0.5, 2.0], [0.25, 0.75, 1.0]]\ndomain = [-1.0, 2.0]\n')
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "overlap" in capsys.readouterr().err


def test_bad_override_syntax(tmp_path):
    assert main(["simulate", "blowup-exact", "--override", "particles"]) == 2


def test_domain_too_small_exits_3(tmp_path):
    rc = main(["simulate", "blowup-exact", "--out", str(tmp_path / "d"), "--no-plots",
               "--override", "solver=eulerian", "--override", "domain=[0.0, 0.5]", "--override", "cells=50"])
    assert rc == 3


def test_io_failure_exits_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert main(["bounds", "blowup-exact", "--out", str(blocker / "sub")]) == 4


def test_study_single_point(tmp_path):
    out = tmp_path / "st"
    rc = main(["study", "counterexample", "--out", str(out), "--override", "study.alpha=[0.3333333333333333]",
               "--override", "study.n=[18]", "--override", "particles=400", "--override", "dt=1e-3"])
    assert rc == 0
    header, data = read_csv(out / "study.csv")
    assert data.shape[0] == 1
    row = dict(zip(header, data[0]))
    assert row["r"] == pytest.approx(1.0, abs=1e-12)
    assert (out / "points" / "alpha=0.333333_n=18" / "centroid.csv").exists()
    assert (out / "figures" / "study.png").exists()
    rep = json.loads((out / "study.json").read_text())
    assert rep["failures"] == []


def test_study_in_worker_pool_matches_serial(tmp_path):
    args = ["study", "counterexample", "--no-plots", "--override", "study.alpha=[0.0, 1.0]",
            "--override", "study.n=[18]", "--override", "particles=300", "--override", "dt=1e-3"]
    assert main([*args, "--out", str(tmp_path / "s1")]) == 0
    assert main([*args, "--out", str(tmp_path / "s2"), "--threads", "2"]) == 0
    assert artifacts(tmp_path / "s1") == artifacts(tmp_path / "s2")
    rep = json.loads((tmp_path / "s1" / "study.json").read_text())
    assert rep["centroid_gap"]["gap"] > 0.3


def test_study_empty_alpha_list_is_config_error(tmp_path):
    assert main(["study", "counterexample", "--out", str(tmp_path), "--override", "study.alpha=[]"]) == 2


def test_study_point_failure_gives_nonzero_exit(tmp_path, monkeypatch):
    real = cli.run_counterexample

    def flaky(alpha, n, cfg):
        if alpha == 1.0:
            raise BlowupAbort("non-finite particle position")
        return real(alpha, n, cfg)

    monkeypatch.setattr(cli, "run_counterexample", flaky)
    rc = main(["study", "counterexample", "--out", str(tmp_path / "f"), "--no-plots",
               "--override", "study.alpha=[0.0, 1.0]", "--override", "study.n=[18]", "--override", "particles=200",
               "--override", "dt=1e-2"])
    assert rc == 3
    rep = json.loads((tmp_path / "f" / "study.json").read_text())
    assert len(rep["points"]) == 1
    assert len(rep["failures"]) == 1 and "BlowupAbort" in rep["failures"][0]["error"]
    header, data = read_csv(tmp_path / "f" / "study.csv")
    assert data.shape[0] == 1


def test_bounds_command(tmp_path, capsys):
    assert main(["bounds", "blowup-exact", "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "T_q = 0.0866" in printed
    b = json.loads((tmp_path / "bounds.json").read_text())["bounds"]
    assert b["T_star_lower"] == pytest.approx(0.17328679513998632)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nonlocal_cl", "bounds", "counterexample"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "T_q" in proc.stdout
