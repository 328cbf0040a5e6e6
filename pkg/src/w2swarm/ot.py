"""Exact discrete optimal transport with squared Euclidean cost.

Two exact solvers sit behind :func:`solve_kantorovich`:

- equal-size, uniform-weight clouds reduce to a min-cost perfect matching
  (``scipy.optimize.linear_sum_assignment``), which always yields a
  permutation Monge map;
- everything else goes through a transportation (network) simplex seeded by
  the least-cost rule.

A separate monotone-rearrangement routine, :func:`w2_distance_1d`, is kept
independent of both so it can serve as a cross-check in one dimension.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .constants import MARGINAL_TOL, MASS_EPS, NORMALIZATION_TOL, REDUCED_COST_TOL
from .errors import NumericalInvariantError, ValidationError

__all__ = [
    "ParticleCloud",
    "TransportPlan",
    "TransportMap",
    "squared_distances",
    "solve_kantorovich",
    "w2_distance",
    "w2_distance_1d",
    "extract_monge_map",
    "pushforward",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    """Weighted point cloud approximating a normalized density.

    ``points`` has shape ``(count, dim)``; ``weights`` has shape ``(count,)``
    and sums to one. Coincident points are allowed and never merged.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValidationError("cloud must contain at least one point of positive dimension")
        if pts.shape[0] != w.shape[0]:
            raise ValidationError(
                f"points/weights length mismatch: {pts.shape[0]} points, {w.shape[0]} weights"
            )
        if not np.all(np.isfinite(pts)):
            raise ValidationError("cloud coordinates must be finite")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("cloud weights must be finite and strictly positive")
        total = math.fsum(w)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"normalization violated: weights sum to {total!r}, expected 1")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, points) -> ParticleCloud:
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def has_uniform_weights(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def integrate(self, fn) -> float:
        """Integral of ``fn`` (applied row-wise to points) against the cloud."""
        vals = np.array([fn(p) for p in self.points], dtype=float)
        return float(np.dot(self.weights, vals))

    def with_points(self, points: np.ndarray) -> ParticleCloud:
        return ParticleCloud(points, self.weights)

    def scaled(self, factor: float) -> ParticleCloud:
        return ParticleCloud(self.points * factor, self.weights)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse optimal coupling between ``source`` and ``target``.

    ``sources``, ``targets`` and ``masses`` are parallel arrays of plan
    entries; ``cost`` is the sum of mass times squared distance.
    """

    source: ParticleCloud
    target: ParticleCloud
    sources: np.ndarray
    targets: np.ndarray
    masses: np.ndarray
    cost: float

    @property
    def source_count(self) -> int:
        return len(self.source)

    @property
    def target_count(self) -> int:
        return len(self.target)

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [
            (int(i), int(j), float(m))
            for i, j, m in zip(self.sources, self.targets, self.masses)
        ]

    def dense(self) -> np.ndarray:
        k = np.zeros((self.source_count, self.target_count))
        np.add.at(k, (self.sources, self.targets), self.masses)
        return k

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.sources, weights=self.masses, minlength=self.source_count)

    def column_sums(self) -> np.ndarray:
        return np.bincount(self.targets, weights=self.masses, minlength=self.target_count)

    def recomputed_cost(self) -> float:
        d = self.source.points[self.sources] - self.target.points[self.targets]
        return math.fsum(self.masses * np.einsum("ij,ij->i", d, d))

    def check(self, tol: float = MARGINAL_TOL) -> None:
        """Raise if marginals or the stored cost are inconsistent."""
        row_err = np.max(np.abs(self.row_sums() - self.source.weights))
        col_err = np.max(np.abs(self.column_sums() - self.target.weights))
        if row_err > tol or col_err > tol:
            raise NumericalInvariantError(
                f"plan marginals off by {max(row_err, col_err):.3e} (tol {tol:.0e})"
            )
        c = self.recomputed_cost()
        if abs(c - self.cost) > tol * max(1.0, abs(c)):
            raise NumericalInvariantError(f"plan cost {self.cost!r} != recomputed {c!r}")


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Per-source target assignment.

    ``target_index[i]`` is the single target receiving all of source ``i``'s
    mass, or ``-1`` when that mass is split; for split sources ``targets[i]``
    holds the barycentric projection and the index appears in
    ``split_sources``.
    """

    targets: np.ndarray
    is_permutation: bool
    target_index: np.ndarray
    split_sources: tuple[int, ...] = ()
    optimal: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", _frozen(np.array(self.targets, dtype=float)))
        object.__setattr__(self, "target_index", _frozen(np.array(self.target_index, dtype=int)))

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def has_splitting(self) -> bool:
        return bool(self.split_sources)

    @classmethod
    def identity(cls, cloud: ParticleCloud) -> TransportMap:
        n = len(cloud)
        return cls(cloud.points.copy(), True, np.arange(n), (), True)

    @classmethod
    def from_function(cls, cloud: ParticleCloud, fn) -> TransportMap:
        targets = np.array([fn(p) for p in cloud.points], dtype=float).reshape(len(cloud), -1)
        return cls(targets, False, np.full(len(cloud), -1), (), False)


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, computed by differences.

    The difference form keeps exact zeros on coincident points, which the
    expanded ``|x|^2 - 2xy + |y|^2`` form does not.
    """
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _check_pair(mu: ParticleCloud, nu: ParticleCloud) -> None:
    if not isinstance(mu, ParticleCloud) or not isinstance(nu, ParticleCloud):
        raise ValidationError("both arguments must be ParticleCloud instances")
    if mu.dim != nu.dim:
        raise ValidationError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _matching_plan(mu: ParticleCloud, nu: ParticleCloud, cost: np.ndarray) -> TransportPlan:
    rows, cols = linear_sum_assignment(cost)
    masses = mu.weights[rows].copy()
    total = math.fsum(masses * cost[rows, cols])
    return TransportPlan(mu, nu, rows.astype(int), cols.astype(int), masses, total)


def _least_cost_basis(a, b, cost):
    """Initial basic feasible solution: least-cost rule, then spanning-tree fill.

    Each allocation exhausts a row or a column, so allocated cells form a
    forest; zero-flow cells joining components are added Kruskal-style until
    the basis is a spanning tree of the ``n + m`` row/column nodes.
    """
    n, m = cost.shape
    order = np.argsort(cost, axis=None, kind="stable")
    supply = a.copy()
    demand = b.copy()
    parent = list(range(n + m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    flow: dict[tuple[int, int], float] = {}
    for idx in order:
        i, j = divmod(int(idx), m)
        if supply[i] > 0.0 and demand[j] > 0.0:
            q = min(supply[i], demand[j])
            flow[(i, j)] = q
            supply[i] -= q
            demand[j] -= q
            parent[find(i)] = find(n + j)
    need = n + m - 1
    if len(flow) < need:
        for idx in order:
            i, j = divmod(int(idx), m)
            ri, rj = find(i), find(n + j)
            if ri != rj:
                flow[(i, j)] = 0.0
                parent[ri] = rj
                if len(flow) == need:
                    break
    return flow


def _tree_path(row_adj, col_adj, j0: int, i0: int) -> list[tuple[int, int]]:
    """Cells on the basis-tree path from column ``j0`` to row ``i0``."""
    # nodes: ("c", j) or ("r", i); BFS with parent pointers
    start = ("c", j0)
    prev = {start: None}
    queue = deque([start])
    goal = ("r", i0)
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        kind, k = node
        nbrs = (("r", r) for r in col_adj[k]) if kind == "c" else (("c", c) for c in row_adj[k])
        for nb in nbrs:
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    cells = []
    node = goal
    while prev[node] is not None:
        p = prev[node]
        if node[0] == "r":
            cells.append((node[1], p[1]))
        else:
            cells.append((p[1], node[1]))
        node = p
    cells.reverse()
    return cells


def _tree_duals(row_adj, col_adj, cost, n, m):
    u = np.zeros(n)
    v = np.zeros(m)
    seen_r = [False] * n
    seen_c = [False] * m
    seen_r[0] = True
    queue = deque([("r", 0)])
    while queue:
        kind, k = queue.popleft()
        if kind == "r":
            for j in row_adj[k]:
                if not seen_c[j]:
                    seen_c[j] = True
                    v[j] = cost[k, j] - u[k]
                    queue.append(("c", j))
        else:
            for i in col_adj[k]:
                if not seen_r[i]:
                    seen_r[i] = True
                    u[i] = cost[i, k] - v[k]
                    queue.append(("r", i))
    return u, v


def _tree_flows(cells, a, b, n, m) -> dict[tuple[int, int], float]:
    """Recompute basic flows from the marginals by leaf elimination."""
    rem = np.concatenate([a, b])
    adj: list[set[int]] = [set() for _ in range(n + m)]
    for i, j in cells:
        adj[i].add(n + j)
        adj[n + j].add(i)
    leaves = deque(k for k in range(n + m) if len(adj[k]) == 1)
    flow: dict[tuple[int, int], float] = {}
    while leaves:
        k = leaves.popleft()
        if len(adj[k]) != 1:
            continue
        other = adj[k].pop()
        adj[other].discard(k)
        q = rem[k]
        rem[other] -= q
        rem[k] = 0.0
        cell = (k, other - n) if k < n else (other, k - n)
        flow[cell] = q
        if len(adj[other]) == 1:
            leaves.append(other)
    return flow


def _network_simplex(a, b, cost, max_iter: int | None = None):
    n, m = cost.shape
    flow = _least_cost_basis(a, b, cost)
    row_adj: list[set[int]] = [set() for _ in range(n)]
    col_adj: list[set[int]] = [set() for _ in range(m)]
    for i, j in flow:
        row_adj[i].add(j)
        col_adj[j].add(i)
    tol = REDUCED_COST_TOL * max(1.0, float(cost.max()))
    if max_iter is None:
        max_iter = 50 * (n + m) ** 2
    degenerate_run = 0
    for _ in range(max_iter):
        u, v = _tree_duals(row_adj, col_adj, cost, n, m)
        reduced = cost - u[:, None] - v[None, :]
        if degenerate_run > n + m:
            # Bland-style fallback against cycling on degenerate pivots
            neg = np.flatnonzero(reduced.ravel() < -tol)
            if neg.size == 0:
                break
            k = int(neg[0])
        else:
            k = int(np.argmin(reduced))
            if reduced.flat[k] >= -tol:
                break
        i0, j0 = divmod(k, m)
        path = _tree_path(row_adj, col_adj, j0, i0)
        minus = path[0::2]
        plus = path[1::2]
        leave = min(minus, key=lambda c: flow[c])
        theta = flow[leave]
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(i0, j0)] = theta
        del flow[leave]
        row_adj[leave[0]].discard(leave[1])
        col_adj[leave[1]].discard(leave[0])
        row_adj[i0].add(j0)
        col_adj[j0].add(i0)
    else:
        raise NumericalInvariantError(f"network simplex did not terminate in {max_iter} pivots")
    return _tree_flows(list(flow), a, b, n, m)


def solve_kantorovich(mu: ParticleCloud, nu: ParticleCloud) -> TransportPlan:
    """Optimal coupling of two clouds for the squared Euclidean cost.

    Uniform, equal-size clouds are matched with the Hungarian-type solver;
    general weights use the transportation simplex. Both are exact, so
    ``plan.cost`` is the discrete W2^2.
    """
    _check_pair(mu, nu)
    cost = squared_distances(mu.points, nu.points)
    if len(mu) == len(nu) and mu.has_uniform_weights() and nu.has_uniform_weights():
        return _matching_plan(mu, nu, cost)
    flows = _network_simplex(mu.weights, nu.weights, cost)
    cells = sorted((c, q) for c, q in flows.items() if q > MASS_EPS)
    src = np.array([c[0] for c, _ in cells], dtype=int)
    tgt = np.array([c[1] for c, _ in cells], dtype=int)
    masses = np.array([q for _, q in cells], dtype=float)
    total = math.fsum(masses * cost[src, tgt])
    return TransportPlan(mu, nu, src, tgt, masses, total)


def w2_distance(mu: ParticleCloud, nu: ParticleCloud) -> float:
    return math.sqrt(max(solve_kantorovich(mu, nu).cost, 0.0))


def w2_distance_1d(mu: ParticleCloud, nu: ParticleCloud) -> float:
    """W2 on the line by monotone rearrangement of the two quantile functions."""
    if mu.dim != 1 or nu.dim != 1:
        raise ValidationError("w2_distance_1d requires one-dimensional clouds")
    xa = mu.points[:, 0]
    xb = nu.points[:, 0]
    ia = np.argsort(xa, kind="stable")
    ib = np.argsort(xb, kind="stable")
    xa, wa = xa[ia], mu.weights[ia]
    xb, wb = xb[ib], nu.weights[ib]
    i = j = 0
    ra, rb = wa[0], wb[0]
    terms = []
    while True:
        q = min(ra, rb)
        d = xa[i] - xb[j]
        terms.append(q * d * d)
        ra -= q
        rb -= q
        if ra <= 0.0:
            i += 1
            if i == len(xa):
                break
            ra = wa[i]
        if rb <= 0.0:
            j += 1
            if j == len(xb):
                break
            rb = wb[j]
    return math.sqrt(max(math.fsum(terms), 0.0))


def extract_monge_map(plan: TransportPlan, mu: ParticleCloud | None = None) -> TransportMap:
    """Read a per-source map off a plan.

    Sources that ship their whole mass to one target keep that target;
    split sources fall back to the barycentric projection and are listed in
    ``split_sources``. Splitting is reported, never raised.
    """
    if mu is not None:
        if len(mu) != plan.source_count or mu.dim != plan.source.dim:
            raise ValidationError("cloud does not match the plan's source")
        if np.max(np.abs(plan.row_sums() - mu.weights)) > MARGINAL_TOL:
            raise ValidationError("plan row sums do not match the cloud's weights")
    n = plan.source_count
    counts = np.bincount(plan.sources, minlength=n)
    index = np.full(n, -1, dtype=int)
    single = counts == 1
    sel = single[plan.sources]
    index[plan.sources[sel]] = plan.targets[sel]
    # barycentric projection covers both cases uniformly
    row = plan.row_sums()
    acc = np.zeros((n, plan.source.dim))
    np.add.at(acc, plan.sources, plan.masses[:, None] * plan.target.points[plan.targets])
    targets = acc / row[:, None]
    targets[single] = plan.target.points[index[single]]
    split = tuple(int(i) for i in np.flatnonzero(counts > 1))
    one_to_one = (
        not split
        and n == plan.target_count
        and len(np.unique(index)) == n
    )
    return TransportMap(targets, bool(one_to_one), index, split, True)


def pushforward(mu: ParticleCloud, tmap: TransportMap) -> ParticleCloud:
    """Move each particle to its mapped location; weights are carried unchanged."""
    if len(tmap) != len(mu):
        raise ValidationError(f"map length {len(tmap)} != cloud size {len(mu)}")
    if tmap.targets.shape[1] != mu.dim:
        raise ValidationError("map targets have the wrong dimension")
    return ParticleCloud(tmap.targets.copy(), mu.weights)
