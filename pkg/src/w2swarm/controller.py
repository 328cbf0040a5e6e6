"""Geodesic-following optimal controller for static demand.

The optimal swarm moves every particle straight toward its optimal target,
``x_i(t) = x_i + s(t) (M(x_i) - x_i)``, with the fraction ``s(t)`` taken from
the scalar LQ solution. Equivalently, in feedback form, each particle moves
with velocity ``f(t) (M_t(x) - x) / alpha`` where ``M_t`` is the optimal map
from the current cloud to the demand.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .geodesic import build_geodesic, eval_geodesic, geodesic_defect
from .lq import COST_CONSTANT, HALF_COST_CONSTANT, ControlSchedule, CostPair
from .ot import ParticleCloud, extract_monge_map, solve_kantorovich, w2_distance
from .trajectory import TrajectoryRecord, trapezoid

__all__ = [
    "plan_optimal_trajectory",
    "feedback_velocity",
    "feedback_step",
    "closed_loop_simulate",
    "evaluate_cost",
    "analytic_cost_swarm",
    "confinement_defects",
    "motion_cost",
]


def motion_cost(velocities: np.ndarray, weights: np.ndarray, alpha: float) -> float:
    """alpha * sum_i w_i |v_i|^2, the mass-weighted kinetic term."""
    return alpha * float(np.dot(weights, np.einsum("ij,ij->i", velocities, velocities)))


def _check_common(r0: ParticleCloud, demand: ParticleCloud, alpha: float, horizon: float) -> None:
    if r0.dim != demand.dim:
        raise ValidationError(f"dimension mismatch: resource {r0.dim}, demand {demand.dim}")
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    if not horizon >= 0:
        raise ValidationError("horizon must be nonnegative")


def plan_optimal_trajectory(
    r0: ParticleCloud,
    demand: ParticleCloud,
    alpha: float,
    horizon: float,
    steps: int,
) -> TrajectoryRecord:
    """Open-loop optimal trajectory: one OT solve, then the fraction schedule.

    Stage assignment cost along the geodesic is exactly
    ``(1 - s)^2 W2^2(R0, D)``, so no further OT solves are needed here;
    :func:`evaluate_cost` recomputes it independently.
    """
    _check_common(r0, demand, alpha, horizon)
    path = build_geodesic(r0, demand)
    w2 = path.endpoint_distance
    if horizon == 0:
        times = np.zeros(1)
    else:
        if steps < 1:
            raise ValidationError("steps must be positive")
        times = np.linspace(0.0, horizon, steps + 1)
    sched = ControlSchedule(alpha, horizon)
    disp = path.displacement
    positions = np.empty((len(times), len(path.base), r0.dim))
    velocities = np.empty_like(positions)
    assign = np.empty(len(times))
    motion = np.empty(len(times))
    for k, t in enumerate(times):
        s = sched.fraction(t) if horizon > 0 else 0.0
        rate = sched.fraction_rate(t) if horizon > 0 else 0.0
        positions[k] = eval_geodesic(path, s).points
        velocities[k] = rate * disp
        assign[k] = (1.0 - s) ** 2 * w2 * w2
        motion[k] = motion_cost(velocities[k], path.base.weights, alpha)
    matchings = np.tile(path.map.target_index, (len(times), 1))
    return TrajectoryRecord(
        times,
        positions,
        velocities,
        path.base.weights,
        assign,
        motion,
        matchings=matchings,
        meta={
            "kind": "plan",
            "alpha": alpha,
            "horizon": horizon,
            "w2_initial": w2,
            "refined": path.refined,
            "parent": path.parent,
        },
    )


def feedback_step(current: ParticleCloud, demand: ParticleCloud, rate: float):
    """Velocities ``rate * (M_t(x) - x)`` plus the OT data behind them."""
    plan = solve_kantorovich(current, demand)
    tmap = extract_monge_map(plan, current)
    return rate * (tmap.targets - current.points), tmap, plan.cost


def feedback_velocity(
    current: ParticleCloud,
    demand: ParticleCloud,
    t: float,
    schedule: ControlSchedule,
) -> np.ndarray:
    """Optimal feedback ``f(t) (M_t(x_i) - x_i) / alpha`` with a fresh OT solve."""
    if current.dim != demand.dim:
        raise ValidationError("dimension mismatch between current cloud and demand")
    v, _, _ = feedback_step(current, demand, schedule.feedback_rate(t))
    return v


def _advance(positions, weights, demand, schedule, t, dt, method):
    def vel(p, tt):
        return feedback_velocity(ParticleCloud(p, weights), demand, tt, schedule)

    if method == "euler":
        return positions + dt * vel(positions, t)
    if method != "rk4":
        raise ValidationError(f"unknown integrator {method!r}")
    k1 = vel(positions, t)
    k2 = vel(positions + dt / 2 * k1, t + dt / 2)
    k3 = vel(positions + dt / 2 * k2, t + dt / 2)
    k4 = vel(positions + dt * k3, t + dt)
    return positions + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def closed_loop_simulate(
    r0: ParticleCloud,
    demand: ParticleCloud,
    schedule: ControlSchedule,
    steps: int,
    method: str = "rk4",
    duration: float | None = None,
) -> TrajectoryRecord:
    """Integrate the feedback law forward, re-solving OT at every evaluation.

    The run covers ``[0, duration]`` (default: the schedule's horizon); a
    longer run is only allowed for receding schedules, whose gain does not
    depend on time. The matching used at each grid node is recorded in
    ``matchings`` so the index-level assignment can be compared with the
    open-loop plan.
    """
    _check_common(r0, demand, schedule.alpha, schedule.horizon)
    horizon = schedule.horizon if duration is None else float(duration)
    if horizon > schedule.horizon and not schedule.receding:
        raise ValidationError("duration exceeds the schedule horizon")
    times = np.zeros(1) if horizon == 0 else np.linspace(0.0, horizon, steps + 1)
    n, d = len(r0), r0.dim
    positions = np.empty((len(times), n, d))
    velocities = np.empty_like(positions)
    assign = np.empty(len(times))
    motion = np.empty(len(times))
    matchings = np.empty((len(times), n), dtype=int)
    positions[0] = r0.points
    for k, t in enumerate(times):
        cur = ParticleCloud(positions[k], r0.weights)
        v, tmap, w2sq = feedback_step(cur, demand, schedule.feedback_rate(t))
        velocities[k] = v
        matchings[k] = tmap.target_index
        assign[k] = w2sq
        motion[k] = motion_cost(v, r0.weights, schedule.alpha)
        if k + 1 < len(times):
            dt = times[k + 1] - t
            positions[k + 1] = _advance(
                positions[k], r0.weights, demand, schedule, t, dt, method
            )
    return TrajectoryRecord(
        times,
        positions,
        velocities,
        r0.weights,
        assign,
        motion,
        matchings=matchings,
        meta={
            "kind": "closed_loop",
            "alpha": schedule.alpha,
            "horizon": horizon,
            "receding": schedule.receding,
            "integrator": method,
        },
    )


def evaluate_cost(traj: TrajectoryRecord, demand: ParticleCloud, alpha: float) -> float:
    """Recompute the objective from scratch: fresh OT per node, recorded velocities."""
    if traj.dim != demand.dim:
        raise ValidationError("trajectory and demand dimensions differ")
    stage = np.empty(len(traj))
    for k in range(len(traj)):
        w2sq = solve_kantorovich(traj.cloud(k), demand).cost
        stage[k] = w2sq + motion_cost(traj.velocities[k], traj.weights, alpha)
    return trapezoid(stage, traj.times)


def analytic_cost_swarm(w2: float, alpha: float, horizon: float) -> CostPair:
    """Closed-form optimal cost ``c W2^2 sqrt(alpha) tanh(T / sqrt(alpha))``."""
    if w2 < 0 or not alpha > 0 or horizon < 0:
        raise ValidationError("need w2 >= 0, alpha > 0, horizon >= 0")
    base = w2 * w2 * math.sqrt(alpha) * math.tanh(horizon / math.sqrt(alpha))
    return CostPair(COST_CONSTANT * base, HALF_COST_CONSTANT * base)


def confinement_defects(
    traj: TrajectoryRecord, r0: ParticleCloud, demand: ParticleCloud
) -> np.ndarray:
    """Triangle-equality defect of every recorded cloud against (R0, D)."""
    return np.array([geodesic_defect(r0, traj.cloud(k), demand) for k in range(len(traj))])
