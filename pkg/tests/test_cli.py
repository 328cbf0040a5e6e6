import json
import shutil
from pathlib import Path

import pytest

from w2swarm.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_distance(capsys):
    assert main(["distance", str(SCENARIOS / "cloud_a.json"), str(SCENARIOS / "cloud_b.json")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.1, abs=1e-15)


def test_geodesic(capsys):
    code = main(["geodesic", str(SCENARIOS / "cloud_a.json"), str(SCENARIOS / "cloud_b.json"), "--t", "0.5"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert sorted(p[0] for p in out["points"]) == pytest.approx([0.05, 0.95])


def test_plan_writes_outputs(tmp_path, capsys):
    code = main(["plan", str(SCENARIOS / "two_point_masses.json"), "--steps", "50", "--out-dir", str(tmp_path), "--emit-plot-data"])
    assert code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {
        "two_point_masses_plan.csv",
        "two_point_masses_plan_summary.csv",
        "two_point_masses_plan_report.json",
        "two_point_masses_plan_timings.json",
        "two_point_masses_plan_cost_series.csv",
        "two_point_masses_plan_w2_series.csv",
    } <= names
    assert "[PASS]" in capsys.readouterr().out


@pytest.mark.parametrize("sub", ["simulate", "oracle", "mpc"])
def test_other_modes(tmp_path, sub):
    assert main([sub, str(SCENARIOS / "two_point_masses.json"), "--steps", "20", "--out-dir", str(tmp_path)]) == 0


def test_mpc_switching(tmp_path):
    assert main(["mpc", str(SCENARIOS / "switching_demand.json"), "--out-dir", str(tmp_path)]) == 0


def test_verify(capsys):
    assert main(["verify", str(SCENARIOS / "gaussian_2d.json")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("[PASS]") >= 5


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 1, "alpha": -1}))
    assert main(["plan", str(bad)]) == 1
    assert "validation error" in capsys.readouterr().err


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n,\n")
    assert main(["plan", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["plan", str(tmp_path / "nope.json")]) == 3


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    import w2swarm.cli as cli
    from w2swarm.scenario import Check

    monkeypatch.setattr(cli, "verify_scenario", lambda sc: [Check("forced", 1.0, 0.0, False)])
    assert main(["verify", str(SCENARIOS / "two_point_masses.json")]) == 2


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["plan", str(SCENARIOS / "two_point_masses.json"), "--out-dir", str(blocker / "sub")])
    assert code == 3


def test_seed_override_changes_samples(tmp_path):
    src = tmp_path / "g.json"
    shutil.copy(SCENARIOS / "gaussian_2d.json", src)
    for seed in ("1", "2"):
        out = tmp_path / seed
        assert main(["plan", str(src), "--seed", seed, "--steps", "10", "--out-dir", str(out)]) == 0
    a = (tmp_path / "1").glob("*_plan.csv")
    b = (tmp_path / "2").glob("*_plan.csv")
    assert next(a).read_text() != next(b).read_text()
