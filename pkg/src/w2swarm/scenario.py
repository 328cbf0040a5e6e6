"""Scenario files, run dispatch, reports and CSV emission."""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .controller import (
    analytic_cost_swarm,
    closed_loop_simulate,
    confinement_defects,
    evaluate_cost,
    plan_optimal_trajectory,
)
from .errors import ValidationError
from .lq import COST_CONSTANT, HALF_COST_CONSTANT, ControlSchedule
from .mpc import DemandSchedule, receding_schedule, run_mpc
from .ot import ParticleCloud, w2_distance
from .trajectory import TrajectoryRecord
from .transcription import TranscriptionProblem, solve_direct

__all__ = [
    "MODES",
    "Scenario",
    "RunReport",
    "Check",
    "cloud_from_spec",
    "parse_scenario",
    "load_scenario",
    "load_cloud",
    "run_scenario",
    "verify_scenario",
    "emit_trajectory",
    "read_trajectory",
    "emit_plot_data",
    "write_report",
]

MODES = ("plan", "closed_loop", "oracle", "mpc")
FLOAT_FMT = "{:.17g}"


def _fmt(x: float) -> str:
    return FLOAT_FMT.format(float(x))


# --------------------------------------------------------------------------
# clouds and scenarios
# --------------------------------------------------------------------------


def _vector(value, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ValidationError(f"field '{name}': expected {dim} components, got {arr.shape}")
    return arr


def cloud_from_spec(spec: dict, dim: int | None = None, seed: int = 0, where: str = "cloud") -> ParticleCloud:
    """Materialize a cloud spec: explicit points/weights or a seeded sampler.

    Samplers draw from ``numpy.random.default_rng(seed)``; a spec without its
    own ``seed`` uses the one passed in, so results are bit-reproducible.
    """
    if not isinstance(spec, dict):
        raise ValidationError(f"field '{where}': expected an object")
    if "points" in spec:
        pts = np.asarray(spec["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if dim is not None and pts.shape[1] != dim:
            raise ValidationError(f"field '{where}.points': dimension {pts.shape[1]} != {dim}")
        w = spec.get("weights")
        if w is None:
            w = np.full(len(pts), 1.0 / len(pts))
        try:
            return ParticleCloud(pts, w)
        except ValidationError as exc:
            raise ValidationError(f"field '{where}': {exc}") from None
    sampler = spec.get("sampler")
    if sampler is None:
        raise ValidationError(f"field '{where}': needs 'points' or 'sampler'")
    dim = int(spec.get("dim", dim or 0))
    if dim < 1:
        raise ValidationError(f"field '{where}': sampler needs a positive dimension")
    count = int(spec.get("count", 0))
    if count < 1:
        raise ValidationError(f"field '{where}.count': must be a positive integer")
    rng = np.random.default_rng(int(spec.get("seed", seed)))
    if sampler == "uniform_box":
        low = _vector(spec.get("low", 0.0), dim, f"{where}.low")
        high = _vector(spec.get("high", 1.0), dim, f"{where}.high")
        pts = rng.uniform(low, high, size=(count, dim))
    elif sampler == "gaussian":
        mean = _vector(spec.get("mean", 0.0), dim, f"{where}.mean")
        std = _vector(spec.get("std", 1.0), dim, f"{where}.std")
        pts = mean + std * rng.standard_normal((count, dim))
    else:
        raise ValidationError(f"field '{where}.sampler': unknown sampler {sampler!r}")
    return ParticleCloud(pts, np.full(count, 1.0 / count))


@dataclass(eq=False)
class Scenario:
    name: str
    dim: int
    resource: ParticleCloud
    demand: ParticleCloud | DemandSchedule
    alpha: float
    horizon: float
    steps: int
    mode: str
    seed: int
    replan_horizon: float | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def static_demand(self) -> ParticleCloud:
        if isinstance(self.demand, ParticleCloud):
            return self.demand
        if len(self.demand.clouds) == 1:
            return self.demand.clouds[0]
        raise ValidationError("this mode needs a static (single-segment) demand")

    @property
    def demand_schedule(self) -> DemandSchedule:
        if isinstance(self.demand, DemandSchedule):
            return self.demand
        return DemandSchedule.static(self.demand, self.horizon)


def _positive(raw: dict, key: str, kind=float, default=None):
    if key not in raw:
        if default is not None:
            return default
        raise ValidationError(f"field '{key}': missing")
    try:
        val = kind(raw[key])
    except (TypeError, ValueError):
        raise ValidationError(f"field '{key}': expected {kind.__name__}, got {raw[key]!r}") from None
    if not (val > 0 and math.isfinite(val)):
        raise ValidationError(f"field '{key}': must be positive, got {val!r}")
    return val


def parse_scenario(raw: dict, overrides: dict | None = None) -> Scenario:
    """Validate a scenario mapping (already decoded from JSON)."""
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a JSON object")
    raw = copy.deepcopy(raw)
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val
    name = str(raw.get("name", "scenario"))
    dim = int(_positive(raw, "dim", int))
    alpha = _positive(raw, "alpha")
    horizon = _positive(raw, "horizon")
    steps = int(_positive(raw, "steps", int))
    mode = raw.get("mode", "plan")
    if mode not in MODES:
        raise ValidationError(f"field 'mode': expected one of {MODES}, got {mode!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ValidationError(f"field 'seed': expected an unsigned integer, got {seed!r}")
    if "resource" not in raw or "demand" not in raw:
        raise ValidationError("fields 'resource' and 'demand' are required")
    resource = cloud_from_spec(raw["resource"], dim, seed=seed, where="resource")
    dspec = raw["demand"]
    if isinstance(dspec, dict) and "breakpoints" in dspec:
        clouds = dspec.get("clouds", [])
        demand = DemandSchedule(
            tuple(dspec["breakpoints"]),
            tuple(
                cloud_from_spec(c, dim, seed=seed + 1 + k, where=f"demand.clouds[{k}]")
                for k, c in enumerate(clouds)
            ),
            float(dspec.get("end", horizon)),
        )
    else:
        demand = cloud_from_spec(dspec, dim, seed=seed + 1, where="demand")
    replan = raw.get("replan_horizon")
    if replan is not None:
        replan = _positive(raw, "replan_horizon")
    return Scenario(name, dim, resource, demand, alpha, horizon, steps, mode, seed, replan, raw)


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    """Read and validate a JSON scenario file.

    JSON syntax errors are re-raised as :class:`ValidationError` naming the
    line and column.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_scenario(raw, overrides)


def load_cloud(path, seed: int = 0) -> ParticleCloud:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return cloud_from_spec(raw, raw.get("dim") if isinstance(raw, dict) else None, seed=seed, where=str(path))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


def _check(name: str, value: float, tol: float) -> Check:
    return Check(name, float(value), tol, bool(value <= tol))


@dataclass(eq=False)
class RunReport:
    scenario: str
    mode: str
    constants: dict
    cost: dict
    stage_costs: list
    max_geodesic_defect: float | None
    checks: list[Check] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def deterministic_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "constants": self.constants,
            "cost": self.cost,
            "max_geodesic_defect": self.max_geodesic_defect,
            "checks": [c.__dict__ for c in self.checks],
            "flags": self.flags,
            "stage_costs": self.stage_costs,
        }


def _constants(sc: Scenario) -> dict:
    return {
        "cost_constant": COST_CONSTANT,
        "half_cost_constant": HALF_COST_CONSTANT,
        "normalization": ControlSchedule(sc.alpha, sc.horizon).normalization,
        "alpha": sc.alpha,
        "horizon": sc.horizon,
        "steps": sc.steps,
    }


def _stage_table(traj: TrajectoryRecord) -> list:
    cum = traj.cumulative_cost()
    return [
        [float(t), float(a), float(m), float(c)]
        for t, a, m, c in zip(traj.times, traj.assignment_cost, traj.motion_cost, cum)
    ]


def _monotone_violation(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(values))))


def run_scenario(sc: Scenario) -> tuple[TrajectoryRecord, RunReport]:
    """Dispatch on ``sc.mode`` and collect a report with self-checks."""
    t0 = time.perf_counter()
    checks: list[Check] = []
    flags: dict[str, Any] = {}
    defect = None
    cost: dict[str, Any] = {}
    if sc.mode in ("plan", "closed_loop", "oracle"):
        demand = sc.static_demand
        w2 = w2_distance(sc.resource, demand)
        pair = analytic_cost_swarm(w2, sc.alpha, sc.horizon)
        cost.update(w2_initial=w2, analytic=pair.adopted, analytic_half_constant=pair.half_value)
    if sc.mode == "plan":
        traj = plan_optimal_trajectory(sc.resource, demand, sc.alpha, sc.horizon, sc.steps)
        fresh = evaluate_cost(traj, demand, sc.alpha)
        cost.update(numeric=traj.total_cost, recomputed=fresh)
        defects = confinement_defects(traj, sc.resource, demand)
        defect = float(np.max(np.abs(defects)))
        checks.append(_check("recomputed cost agreement", abs(fresh - traj.total_cost), 1e-9 * max(1.0, fresh)))
        checks.append(_check("geodesic confinement", defect, 1e-7))
        checks.append(_check("monotone approach", _monotone_violation(np.sqrt(traj.assignment_cost)), 1e-9))
    elif sc.mode == "closed_loop":
        traj = closed_loop_simulate(sc.resource, demand, ControlSchedule(sc.alpha, sc.horizon), sc.steps)
        cost.update(numeric=traj.total_cost)
        defect = float(np.max(np.abs(confinement_defects(traj, sc.resource, demand))))
        checks.append(_check("monotone approach", _monotone_violation(np.sqrt(traj.assignment_cost)), 1e-9))
    elif sc.mode == "oracle":
        problem = TranscriptionProblem(sc.resource, demand, sc.alpha, sc.horizon, sc.steps)
        traj = solve_direct(problem)
        planned = plan_optimal_trajectory(sc.resource, demand, sc.alpha, sc.horizon, sc.steps)
        objective = traj.meta["objective"]
        cost.update(
            numeric=traj.total_cost,
            oracle_objective=objective,
            plan_numeric=planned.total_cost,
            cost_ratio=objective / pair.adopted if pair.adopted > 0 else 1.0,
        )
        defect = traj.meta["max_defect"]
        flags.update(converged=traj.meta["converged"], iterations=traj.meta["iterations"])
        checks.append(_check("oracle/closed-form cost ratio - 1", abs(cost["cost_ratio"] - 1.0), 5e-3))
        checks.append(_check("oracle geodesic confinement", defect, 1e-3))
    else:
        replan = sc.replan_horizon or sc.horizon
        schedule = sc.demand_schedule
        dt = schedule.end / sc.steps
        traj = run_mpc(sc.resource, schedule, sc.alpha, replan, dt)
        cost.update(numeric=traj.total_cost)
        flags["segments"] = len(schedule.clouds)
        if len(schedule.clouds) == 1:
            ref = closed_loop_simulate(
                sc.resource,
                schedule.clouds[0],
                receding_schedule(sc.alpha, replan),
                sc.steps,
                duration=schedule.end,
            )
            gap = float(np.max(np.abs(ref.positions - traj.positions)))
            flags["equivalent_to_static_closed_loop"] = gap <= 1e-9
            checks.append(_check("single-segment equivalence to static closed loop", gap, 1e-9))
    elapsed = time.perf_counter() - t0
    report = RunReport(
        sc.name,
        sc.mode,
        _constants(sc),
        cost,
        _stage_table(traj),
        defect,
        checks,
        flags,
        {"run_seconds": elapsed},
    )
    return traj, report


def verify_scenario(sc: Scenario) -> list[Check]:
    """Full invariant suite for a static-demand scenario."""
    demand = sc.static_demand
    checks: list[Check] = []
    steps = max(sc.steps, 1000)
    plan = plan_optimal_trajectory(sc.resource, demand, sc.alpha, sc.horizon, steps)
    w2 = w2_distance(sc.resource, demand)
    analytic = analytic_cost_swarm(w2, sc.alpha, sc.horizon).adopted
    if analytic > 0:
        checks.append(_check("plan cost vs closed form (rel)", abs(plan.total_cost / analytic - 1), 1e-4))
    defects = confinement_defects(plan, sc.resource, demand)
    checks.append(_check("geodesic confinement", float(np.max(np.abs(defects))), 1e-7))
    checks.append(_check("monotone approach", _monotone_violation(np.sqrt(plan.assignment_cost)), 1e-9))
    closed = closed_loop_simulate(sc.resource, demand, ControlSchedule(sc.alpha, sc.horizon), steps)
    if not plan.meta["refined"]:
        gap = float(np.max(np.linalg.norm(closed.positions[-1] - plan.positions[-1], axis=1)))
        checks.append(_check("closed loop vs plan final positions", gap, 1e-3))
        mism = float(np.sum(closed.matchings != plan.matchings))
        checks.append(_check("assignment preservation (mismatches)", mism, 0.0))
    scaled = plan_optimal_trajectory(sc.resource.scaled(2.0), demand.scaled(2.0), sc.alpha, sc.horizon, steps)
    if plan.total_cost > 0:
        checks.append(_check("scaling law (cost x4)", abs(scaled.total_cost / plan.total_cost - 4.0), 1e-9))
    return checks


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------


def _summary_path(path: Path) -> Path:
    return path.with_name(path.stem + "_summary" + (path.suffix or ".csv"))


def emit_trajectory(traj: TrajectoryRecord, path) -> tuple[Path, Path]:
    """Write particle rows to ``path`` and per-time rows to ``<stem>_summary.csv``."""
    path = Path(path)
    summary = _summary_path(path)
    d = traj.dim
    header = ["t", "particle_id"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["weight"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(traj.times):
            for i in range(traj.particle_count):
                writer.writerow(
                    [_fmt(t), i]
                    + [_fmt(v) for v in traj.positions[k, i]]
                    + [_fmt(v) for v in traj.velocities[k, i]]
                    + [_fmt(traj.weights[i])]
                )
    cum = traj.cumulative_cost()
    with summary.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "assignment_cost", "motion_cost", "cumulative_cost"])
        for k, t in enumerate(traj.times):
            writer.writerow([_fmt(t), _fmt(traj.assignment_cost[k]), _fmt(traj.motion_cost[k]), _fmt(cum[k])])
    return path, summary


def read_trajectory(path) -> TrajectoryRecord:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("x"))
    n = max(int(r[1]) for r in body) + 1
    data = np.array([[float(v) for v in r] for r in body]).reshape(-1, n, len(header))
    times = data[:, 0, 0]
    positions = data[:, :, 2 : 2 + d]
    velocities = data[:, :, 2 + d : 2 + 2 * d]
    weights = data[0, :, -1]
    with _summary_path(path).open(newline="") as fh:
        srows = list(csv.reader(fh))[1:]
    summ = np.array([[float(v) for v in r] for r in srows]).reshape(-1, 4)
    return TrajectoryRecord(times, positions, velocities, weights, summ[:, 1], summ[:, 2])


def emit_plot_data(traj: TrajectoryRecord, out_dir, name: str) -> list[Path]:
    """Cost-vs-time and W2-vs-time series for external plotting."""
    out_dir = Path(out_dir)
    cost_path = out_dir / f"{name}_cost_series.csv"
    w2_path = out_dir / f"{name}_w2_series.csv"
    cum = traj.cumulative_cost()
    with cost_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "stage_cost", "cumulative_cost"])
        for t, s, c in zip(traj.times, traj.stage_cost, cum):
            writer.writerow([_fmt(t), _fmt(s), _fmt(c)])
    with w2_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "w2_to_demand"])
        for t, a in zip(traj.times, traj.assignment_cost):
            writer.writerow([_fmt(t), _fmt(math.sqrt(max(a, 0.0)))])
    return [cost_path, w2_path]


def write_report(report: RunReport, out_dir) -> tuple[Path, Path]:
    """Deterministic report JSON plus a separate timings file."""
    out_dir = Path(out_dir)
    stem = f"{report.scenario}_{report.mode}"
    rpath = out_dir / f"{stem}_report.json"
    tpath = out_dir / f"{stem}_timings.json"
    rpath.write_text(json.dumps(report.deterministic_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
    tpath.write_text(json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
    return rpath, tpath


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
