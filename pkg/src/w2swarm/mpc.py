"""Receding-horizon tracking of piecewise-constant demand.

Each step applies the static-demand feedback toward the demand of the
current segment, with the gain of a window of length ``replan_horizon``
evaluated at the window start. Because the window rolls with time, that
gain is the constant ``f(0) = sqrt(alpha) tanh(H / sqrt(alpha))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import _advance, feedback_step, motion_cost
from .errors import ValidationError
from .lq import ControlSchedule
from .ot import ParticleCloud
from .trajectory import TrajectoryRecord

__all__ = ["DemandSchedule", "run_mpc", "receding_schedule"]


@dataclass(frozen=True, eq=False)
class DemandSchedule:
    """Demand cloud ``clouds[s]`` holds on ``[breakpoints[s], breakpoints[s+1])``.

    The last segment ends at ``end``.
    """

    breakpoints: tuple[float, ...]
    clouds: tuple[ParticleCloud, ...]
    end: float

    def __post_init__(self) -> None:
        bps = tuple(float(b) for b in self.breakpoints)
        clouds = tuple(self.clouds)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "clouds", clouds)
        if not bps or bps[0] != 0.0:
            raise ValidationError("first breakpoint must be 0")
        if any(a <= b for b, a in zip(bps, bps[1:])):
            raise ValidationError("breakpoints must be strictly increasing")
        if len(clouds) != len(bps):
            raise ValidationError("need exactly one demand cloud per segment")
        if self.end <= bps[-1]:
            raise ValidationError("schedule end must come after the last breakpoint")
        dims = {c.dim for c in clouds}
        if len(dims) != 1:
            raise ValidationError("all demand clouds must share a dimension")

    @classmethod
    def static(cls, demand: ParticleCloud, end: float) -> DemandSchedule:
        return cls((0.0,), (demand,), end)

    @property
    def dim(self) -> int:
        return self.clouds[0].dim

    def segments(self):
        edges = list(self.breakpoints) + [self.end]
        for s, cloud in enumerate(self.clouds):
            yield edges[s], edges[s + 1], cloud

    def demand_at(self, t: float) -> ParticleCloud:
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.clouds[max(idx, 0)]


def receding_schedule(alpha: float, replan_horizon: float) -> ControlSchedule:
    return ControlSchedule(alpha, replan_horizon, receding=True)


def _segment_steps(start: float, stop: float, dt: float) -> int:
    n = (stop - start) / dt
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValidationError(f"dt={dt} does not divide segment [{start}, {stop}]")
    return k


def run_mpc(
    r0: ParticleCloud,
    schedule: DemandSchedule,
    alpha: float,
    replan_horizon: float,
    dt: float,
    method: str = "rk4",
) -> TrajectoryRecord:
    """Simulate receding-horizon feedback against a piecewise demand schedule.

    Segment boundaries are recorded twice (same time, left and right demand)
    so the trapezoid cost integral never straddles a demand switch.
    """
    if r0.dim != schedule.dim:
        raise ValidationError("resource and demand dimensions differ")
    if not (replan_horizon > 0 and alpha > 0 and dt > 0):
        raise ValidationError("need alpha, replan_horizon and dt positive")
    ctrl = receding_schedule(alpha, replan_horizon)
    rate = ctrl.feedback_rate(0.0)
    times, pos, vel, assign, motion, match, seg_ids = [], [], [], [], [], [], []
    x = np.array(r0.points, dtype=float)
    for s, (start, stop, demand) in enumerate(schedule.segments()):
        n = _segment_steps(start, stop, dt)
        for j in range(n + 1):
            t = start + j * dt if j < n else stop
            v, tmap, w2sq = feedback_step(ParticleCloud(x, r0.weights), demand, rate)
            times.append(t)
            pos.append(x.copy())
            vel.append(v)
            assign.append(w2sq)
            motion.append(motion_cost(v, r0.weights, alpha))
            match.append(tmap.target_index)
            seg_ids.append(s)
            if j < n:
                x = _advance(x, r0.weights, demand, ctrl, 0.0, dt, method)
    return TrajectoryRecord(
        np.array(times),
        np.array(pos),
        np.array(vel),
        r0.weights,
        np.array(assign),
        np.array(motion),
        matchings=np.array(match),
        meta={
            "kind": "mpc",
            "alpha": alpha,
            "replan_horizon": replan_horizon,
            "gain": ctrl.gain(0.0),
            "segment": np.array(seg_ids),
            "integrator": method,
        },
    )
