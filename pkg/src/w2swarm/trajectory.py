from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ValidationError
from .ot import ParticleCloud

__all__ = ["TrajectoryRecord", "trapezoid"]


def trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


@dataclass(eq=False)
class TrajectoryRecord:
    """Time-stamped particle states with per-node stage costs.

    ``positions`` and ``velocities`` have shape ``(K, n, dim)``. A time may
    appear twice in a row (a zero-length interval); that is how piecewise
    demand switches keep left and right stage costs apart.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    assignment_cost: np.ndarray
    motion_cost: np.ndarray
    matchings: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.assignment_cost = np.asarray(self.assignment_cost, dtype=float)
        self.motion_cost = np.asarray(self.motion_cost, dtype=float)
        k = len(self.times)
        if self.positions.ndim != 3 or self.positions.shape[0] != k:
            raise ValidationError("positions must have shape (K, n, dim)")
        if self.velocities.shape != self.positions.shape:
            raise ValidationError("velocities must match positions in shape")
        if self.weights.shape != (self.positions.shape[1],):
            raise ValidationError("one weight per particle required")
        if self.assignment_cost.shape != (k,) or self.motion_cost.shape != (k,):
            raise ValidationError("one stage cost per time node required")
        if k > 1 and np.any(np.diff(self.times) < 0):
            raise ValidationError("times must be nondecreasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def particle_count(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def stage_cost(self) -> np.ndarray:
        return self.assignment_cost + self.motion_cost

    @property
    def total_cost(self) -> float:
        return trapezoid(self.stage_cost, self.times)

    def cumulative_cost(self) -> np.ndarray:
        if len(self.times) < 2:
            return np.zeros(len(self.times))
        return cumulative_trapezoid(self.stage_cost, self.times, initial=0.0)

    def cloud(self, k: int) -> ParticleCloud:
        return ParticleCloud(self.positions[k], self.weights)

    @property
    def clouds(self) -> list[ParticleCloud]:
        return [self.cloud(k) for k in range(len(self))]

    def final_cloud(self) -> ParticleCloud:
        return self.cloud(len(self) - 1)
