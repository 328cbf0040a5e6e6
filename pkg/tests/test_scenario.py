import json

import numpy as np
import pytest

from w2swarm.errors import ValidationError
from w2swarm.mpc import DemandSchedule
from w2swarm.ot import ParticleCloud
from w2swarm.scenario import (
    cloud_from_spec,
    emit_plot_data,
    emit_trajectory,
    load_scenario,
    parse_scenario,
    read_trajectory,
    run_scenario,
    verify_scenario,
    write_report,
)
from w2swarm.trajectory import TrajectoryRecord

MINIMAL = {
    "name": "minimal",
    "dim": 1,
    "resource": {"points": [[0.0]], "weights": [1.0]},
    "demand": {"points": [[1.0]], "weights": [1.0]},
    "alpha": 1.0,
    "horizon": 1.0,
    "steps": 100,
}


def with_fields(**kw):
    raw = json.loads(json.dumps(MINIMAL))
    raw.update(kw)
    return raw


def test_minimal_scenario_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.mode == "plan"
    assert sc.seed == 0
    assert sc.static_demand.points[0, 0] == 1.0


def test_overrides_apply():
    sc = parse_scenario(MINIMAL, {"alpha": 2.0, "steps": None})
    assert sc.alpha == 2.0 and sc.steps == 100


def test_unnormalized_weights_rejected():
    raw = with_fields(resource={"points": [[0.0], [1.0]], "weights": [0.45, 0.45]})
    with pytest.raises(ValidationError, match="resource"):
        parse_scenario(raw)


@pytest.mark.parametrize(
    "field,value",
    [("alpha", -1.0), ("horizon", 0.0), ("steps", 0), ("mode", "dance"), ("seed", -3), ("dim", 2)],
)
def test_bad_fields(field, value):
    with pytest.raises(ValidationError):
        parse_scenario(with_fields(**{field: value}))


def test_missing_field():
    raw = with_fields()
    del raw["alpha"]
    with pytest.raises(ValidationError, match="alpha"):
        parse_scenario(raw)


def test_sampler_determinism():
    spec = {"sampler": "gaussian", "count": 10, "mean": [1.0, 2.0], "std": 0.5}
    a = cloud_from_spec(spec, 2, seed=7)
    b = cloud_from_spec(spec, 2, seed=7)
    c = cloud_from_spec(spec, 2, seed=8)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    box = cloud_from_spec({"sampler": "uniform_box", "count": 50, "low": -1, "high": 1}, 3, seed=1)
    assert box.points.shape == (50, 3) and np.all(np.abs(box.points) <= 1)


def test_unknown_sampler():
    with pytest.raises(ValidationError, match="sampler"):
        cloud_from_spec({"sampler": "cauchy", "count": 3}, 1)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "dim": 1,\n  "alpha": ,\n}\n')
    with pytest.raises(ValidationError, match="line 3"):
        load_scenario(p)


def test_schedule_demand(tmp_path):
    raw = with_fields(
        mode="mpc",
        horizon=2.0,
        demand={"breakpoints": [0.0, 1.0], "clouds": [{"points": [[0.0]]}, {"points": [[1.0]]}]},
    )
    sc = parse_scenario(raw)
    assert isinstance(sc.demand, DemandSchedule)
    assert sc.demand.end == 2.0
    with pytest.raises(ValidationError):
        sc.static_demand


def test_round_trip(tmp_path, rng):
    times = np.linspace(0, 1, 4)
    pos = rng.normal(size=(4, 3, 2)) / 3.0
    vel = rng.normal(size=(4, 3, 2)) * 1e-7
    w = np.array([0.2, 0.3, 0.5])
    rec = TrajectoryRecord(times, pos, vel, w, rng.uniform(size=4), rng.uniform(size=4))
    path, summary = emit_trajectory(rec, tmp_path / "traj.csv")
    back = read_trajectory(path)
    for attr in ("times", "positions", "velocities", "weights", "assignment_cost", "motion_cost"):
        np.testing.assert_array_equal(getattr(back, attr), getattr(rec, attr))


def test_row_counts(tmp_path):
    times = np.array([0.0, 0.5, 1.0])
    pos = np.zeros((3, 2, 1))
    rec = TrajectoryRecord(times, pos, pos, np.array([0.5, 0.5]), np.zeros(3), np.zeros(3))
    path, summary = emit_trajectory(rec, tmp_path / "r.csv")
    assert len(path.read_text().splitlines()) == 1 + 6
    assert len(summary.read_text().splitlines()) == 1 + 3
    assert path.read_text().splitlines()[0] == "t,particle_id,x1,v1,weight"


def test_seventeen_digits(tmp_path):
    x = 0.1 + 0.2
    rec = TrajectoryRecord(np.array([0.0]), np.full((1, 1, 1), x), np.zeros((1, 1, 1)), np.ones(1), np.zeros(1), np.zeros(1))
    path, _ = emit_trajectory(rec, tmp_path / "d.csv")
    assert "0.30000000000000004" in path.read_text()


@pytest.mark.parametrize("mode", ["plan", "closed_loop", "oracle", "mpc"])
def test_run_modes(mode):
    steps = 20 if mode == "oracle" else 100
    traj, report = run_scenario(parse_scenario(with_fields(mode=mode, steps=steps)))
    assert report.ok, [c.line() for c in report.checks]
    assert len(traj) >= steps + 1


def test_oracle_ratio_within_tolerance():
    _, report = run_scenario(parse_scenario(with_fields(mode="oracle", steps=100)))
    assert abs(report.cost["cost_ratio"] - 1.0) <= 5e-3


def test_report_is_deterministic(tmp_path):
    sc = parse_scenario(with_fields(steps=50))
    paths = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        out.mkdir()
        _, report = run_scenario(sc)
        paths.append(write_report(report, out)[0])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_plot_data(tmp_path):
    traj, _ = run_scenario(parse_scenario(with_fields(steps=10)))
    cost, w2 = emit_plot_data(traj, tmp_path, "x")
    assert len(cost.read_text().splitlines()) == 12
    assert w2.read_text().splitlines()[1] == "0,1"


def test_verify_passes_on_bundled_scenario():
    sc = parse_scenario(
        with_fields(
            dim=2,
            resource={"sampler": "gaussian", "count": 8, "std": 0.3},
            demand={"sampler": "gaussian", "count": 8, "mean": 1.0, "std": 0.3},
        )
    )
    checks = verify_scenario(sc)
    assert checks and all(c.passed for c in checks), [c.line() for c in checks]


def test_scaled_cloud_keeps_weights():
    c = ParticleCloud([[0.0], [2.0]], [0.25, 0.75])
    s = c.scaled(2.0)
    np.testing.assert_array_equal(s.weights, c.weights)
