import itertools

import numpy as np
import pytest

from conftest import random_cloud
from w2swarm.errors import ValidationError
from w2swarm.geodesic import build_geodesic, curve_speed, eval_geodesic, geodesic_defect
from w2swarm.ot import ParticleCloud, extract_monge_map, solve_kantorovich, w2_distance
from w2swarm.trajectory import TrajectoryRecord


def sorted_rows(cloud):
    rows = np.column_stack([cloud.points, cloud.weights])
    return rows[np.lexsort(rows.T[::-1])]


def geodesic_record(path, times, frac):
    clouds = [eval_geodesic(path, frac(t)) for t in times]
    pos = np.array([c.points for c in clouds])
    zeros = np.zeros(len(times))
    return TrajectoryRecord(times, pos, np.zeros_like(pos), path.base.weights, zeros, zeros)


class TestBuildGeodesic:
    def test_same_endpoints(self, rng):
        mu = random_cloud(rng, 6, 2, uniform=True)
        path = build_geodesic(mu, mu)
        assert path.endpoint_distance == 0.0
        np.testing.assert_array_equal(path.map.targets, mu.points)

    def test_point_masses(self):
        path = build_geodesic(ParticleCloud([[0.0]], [1.0]), ParticleCloud([[1.0]], [1.0]))
        assert path.endpoint_distance == 1.0

    def test_crossing_configuration_uses_noncrossing_matching(self):
        mu = ParticleCloud.uniform([[0.0, 0.0], [0.0, 1.0]])
        rho = ParticleCloud.uniform([[2.0, 1.0], [2.0, 0.0]])
        # enumerate both matchings
        costs = {
            perm: sum(np.sum((mu.points[i] - rho.points[p]) ** 2) for i, p in enumerate(perm))
            for perm in itertools.permutations(range(2))
        }
        best = min(costs, key=costs.get)
        path = build_geodesic(mu, rho)
        assert tuple(path.map.target_index) == best == (1, 0)

    @pytest.mark.parametrize("uniform", [True, False])
    def test_endpoints(self, rng, uniform):
        mu, rho = random_cloud(rng, 8, 2, uniform), random_cloud(rng, 8, 2, uniform)
        path = build_geodesic(mu, rho)
        start, end = eval_geodesic(path, 0.0), eval_geodesic(path, 1.0)
        np.testing.assert_array_equal(start.points, path.base.points)
        if not path.refined:
            np.testing.assert_array_equal(sorted_rows(start), sorted_rows(mu))
            np.testing.assert_array_equal(sorted_rows(end), sorted_rows(rho))
        # as measures: W2 to the original endpoints vanishes
        assert w2_distance(start, mu) < 1e-7
        assert w2_distance(end, rho) < 1e-7

    def test_refinement_on_split_mass(self):
        mu = ParticleCloud([[0.0]], [1.0])
        rho = ParticleCloud([[-1.0], [1.0]], [0.25, 0.75])
        path = build_geodesic(mu, rho)
        assert path.refined
        assert len(path.base) == 2
        np.testing.assert_array_equal(path.parent, [0, 0])
        mid = eval_geodesic(path, 0.5)
        np.testing.assert_allclose(np.sort(mid.points[:, 0]), [-0.5, 0.5])
        assert path.endpoint_distance == pytest.approx(1.0)

    def test_endpoint_distance_invariant(self, rng):
        mu, rho = random_cloud(rng, 10, 3), random_cloud(rng, 7, 3)
        path = build_geodesic(mu, rho)
        assert abs(path.endpoint_distance - w2_distance(path.base, path.end)) < 1e-9


class TestEvalGeodesic:
    def test_midpoint_of_point_masses(self):
        path = build_geodesic(ParticleCloud([[0.0]], [1.0]), ParticleCloud([[1.0]], [1.0]))
        assert eval_geodesic(path, 0.5).points[0, 0] == 0.5

    @pytest.mark.parametrize("t", [-0.1, 1.5])
    def test_out_of_range(self, t):
        path = build_geodesic(ParticleCloud([[0.0]], [1.0]), ParticleCloud([[1.0]], [1.0]))
        with pytest.raises(ValidationError):
            eval_geodesic(path, t)

    def test_constant_speed_and_triangle_equality(self, rng):
        for _ in range(5):
            mu, rho = random_cloud(rng, 9, 2), random_cloud(rng, 9, 2, shift=1.0)
            path = build_geodesic(mu, rho)
            for t1, t2 in rng.uniform(size=(5, 2)):
                a, b = eval_geodesic(path, t1), eval_geodesic(path, t2)
                assert abs(w2_distance(a, b) - abs(t1 - t2) * path.endpoint_distance) <= 1e-8
                assert abs(geodesic_defect(mu, a, rho)) <= 1e-8

    def test_assignment_preserved_along_geodesic(self, rng):
        mu, rho = random_cloud(rng, 15, 2, True), random_cloud(rng, 15, 2, True, shift=2.0)
        path = build_geodesic(mu, rho)
        for t in np.linspace(0, 0.95, 9):
            cur = eval_geodesic(path, t)
            tmap = extract_monge_map(solve_kantorovich(cur, rho), cur)
            np.testing.assert_array_equal(tmap.target_index, path.map.target_index)


class TestCurveSpeed:
    def test_static(self, rng):
        mu = random_cloud(rng, 4, 2, True)
        path = build_geodesic(mu, mu)
        rec = geodesic_record(path, np.linspace(0, 1, 5), lambda t: 0.5)
        assert all(curve_speed(rec, k) == 0.0 for k in range(5))

    def test_unit_path(self):
        path = build_geodesic(ParticleCloud([[0.0]], [1.0]), ParticleCloud([[1.0]], [1.0]))
        times = np.linspace(0, 1, 11)
        rec = geodesic_record(path, times, lambda t: t)
        for k in range(11):
            assert curve_speed(rec, k) == pytest.approx(1.0, abs=1e-6)

    def test_index_out_of_range(self):
        path = build_geodesic(ParticleCloud([[0.0]], [1.0]), ParticleCloud([[1.0]], [1.0]))
        rec = geodesic_record(path, np.linspace(0, 1, 3), lambda t: t)
        with pytest.raises(ValidationError):
            curve_speed(rec, 3)
