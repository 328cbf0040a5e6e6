"""Displacement interpolation between particle clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ot import (
    ParticleCloud,
    TransportMap,
    extract_monge_map,
    pushforward,
    solve_kantorovich,
    w2_distance,
)
from .trajectory import TrajectoryRecord

__all__ = [
    "GeodesicPath",
    "build_geodesic",
    "eval_geodesic",
    "curve_speed",
    "geodesic_defect",
]


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Constant-speed geodesic stored lazily as (base cloud, optimal map).

    When the optimal plan splits mass, ``base`` is the refined cloud with one
    particle per plan entry and ``parent[k]`` names the source particle that
    refined particle ``k`` came from. Otherwise ``parent`` is the identity.
    """

    base: ParticleCloud
    map: TransportMap
    endpoint_distance: float
    parent: np.ndarray
    refined: bool = False

    @property
    def end(self) -> ParticleCloud:
        return pushforward(self.base, self.map)

    @property
    def displacement(self) -> np.ndarray:
        return self.map.targets - self.base.points


def build_geodesic(mu: ParticleCloud, rho: ParticleCloud) -> GeodesicPath:
    plan = solve_kantorovich(mu, rho)
    tmap = extract_monge_map(plan, mu)
    dist = float(np.sqrt(max(plan.cost, 0.0)))
    if not tmap.has_splitting:
        return GeodesicPath(mu, tmap, dist, np.arange(len(mu)))
    base = ParticleCloud(mu.points[plan.sources], plan.masses)
    refined_map = TransportMap(
        rho.points[plan.targets], False, plan.targets.copy(), (), True
    )
    return GeodesicPath(base, refined_map, dist, plan.sources.copy(), refined=True)


def eval_geodesic(path: GeodesicPath, t: float) -> ParticleCloud:
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"geodesic parameter must lie in [0, 1], got {t}")
    pts = (1.0 - t) * path.base.points + t * path.map.targets
    return ParticleCloud(pts, path.base.weights)


def curve_speed(traj: TrajectoryRecord, k: int) -> float:
    """Metric speed |R'| at node ``k`` by finite differences of W2.

    Forward difference at the first node, backward at the last, central
    elsewhere.
    """
    last = len(traj) - 1
    if last < 1:
        raise ValidationError("curve speed needs at least two recorded clouds")
    if not 0 <= k <= last:
        raise ValidationError(f"time index {k} outside [0, {last}]")
    lo = max(k - 1, 0) if k < last else last - 1
    hi = min(k + 1, last) if k > 0 else 1
    dt = traj.times[hi] - traj.times[lo]
    if dt <= 0:
        raise ValidationError("curve speed needs strictly increasing times around the node")
    return w2_distance(traj.cloud(lo), traj.cloud(hi)) / dt


def geodesic_defect(start: ParticleCloud, mid: ParticleCloud, end: ParticleCloud) -> float:
    """Triangle-equality gap W(a,m) + W(m,b) - W(a,b); zero on a geodesic."""
    return w2_distance(start, mid) + w2_distance(mid, end) - w2_distance(start, end)
