import math

import numpy as np
import pytest

from swarmscan.geometry import DroneState, ObservationPoint, observation_direction, wrap_angle
from swarmscan.sensing import (
    DegenerateGeometryError,
    SensingParams,
    score_batch,
    score_grad_batch,
    sensing_geometry,
    sensing_gradient,
    sensing_performance,
    sigma_facing_from_spacing,
)

PARAMS = SensingParams(ideal_distance=1.0, sigma_align=0.07, sigma_facing=0.095, sigma_range=0.3)


def obs(x, y, z, th=0.0, tv=math.pi / 2):
    return ObservationPoint(x, y, z, th, tv, cell_index=0)


def finite_difference_gradient(p: DroneState, q: ObservationPoint, params, step=1e-5):
    base = p.as_array()
    grad = np.zeros(5)
    for k in range(5):
        hi = base.copy()
        lo = base.copy()
        hi[k] += step
        lo[k] -= step
        f_hi = sensing_performance(DroneState(*hi), q, params)
        f_lo = sensing_performance(DroneState(*lo), q, params)
        grad[k] = (f_hi - f_lo) / (2 * step)
    return grad


def random_pair(rng):
    """Non-degenerate drone/point pair with a non-vanishing score."""
    while True:
        p = DroneState(
            rng.uniform(-2, 2),
            rng.uniform(-2, 2),
            rng.uniform(0.5, 3.0),
            rng.uniform(-math.pi, math.pi),
            rng.uniform(0.2, math.pi / 2),
        )
        q = ObservationPoint(
            p.x + rng.uniform(-1.5, 1.5),
            p.y + rng.uniform(-1.5, 1.5),
            p.z + rng.uniform(-1.5, 0.5),
            rng.uniform(-math.pi, math.pi),
            rng.uniform(math.pi / 3, math.pi / 2),
            cell_index=0,
        )
        dist = np.linalg.norm(q.position - p.position)
        if dist < 0.2:
            continue
        if sensing_performance(p, q, PARAMS) > 1e-12:
            return p, q


class TestGeometryMeasures:
    def test_perfect_nadir_alignment(self):
        p = DroneState(0, 0, 2, 0.0, math.pi / 2)
        phi1, phi2, rho = sensing_geometry(p, obs(0, 0, 1), PARAMS)
        assert phi1 == pytest.approx(0.0, abs=1e-12)
        assert phi2 == pytest.approx(0.0, abs=1e-12)
        assert rho == pytest.approx(0.0, abs=1e-12)

    def test_perpendicular_sight(self):
        p = DroneState(0, 0, 2, 0.0, math.pi / 2)
        phi1, phi2, rho = sensing_geometry(p, obs(1, 0, 2), PARAMS)
        assert phi1 == pytest.approx(math.pi / 2)
        assert phi2 == pytest.approx(math.pi / 2)
        assert rho == pytest.approx(0.0)

    def test_coincident_positions_raise(self):
        p = DroneState(0, 0, 1, 0.0, math.pi / 2)
        with pytest.raises(DegenerateGeometryError):
            sensing_geometry(p, obs(0, 0, 1), PARAMS)


class TestPerformance:
    def test_perfect_score_is_one(self):
        p = DroneState(0, 0, 2, 0.0, math.pi / 2)
        assert sensing_performance(p, obs(0, 0, 1), PARAMS) == pytest.approx(1.0)

    def test_quarter_turn_alignment_factor(self):
        # Only the alignment factor is active: yaw the camera 45 degrees off.
        p = DroneState(0, 0, 2, 0.0, math.pi / 2)
        q = obs(0, 0, 1)
        # rotate the camera: pitch stays down; build an offset target instead
        # 45-degree misalignment with matched facing and range:
        expected = math.exp(-((1 - math.sqrt(2) / 2) ** 2) / (2 * 0.07**2))
        assert expected == pytest.approx(1.58e-4, rel=2e-3)
        # realize it geometrically: point at 45 degrees off the optical axis,
        # at unit distance, facing the drone exactly.
        d = 1.0
        qx = d * math.sin(math.pi / 4)
        qz = 2 - d * math.cos(math.pi / 4)
        sight = np.array([qx, 0, qz - 2])
        sight /= np.linalg.norm(sight)
        facing = -sight  # points from the target back at the drone
        tv = math.asin(facing[2])
        th = math.atan2(facing[1], facing[0])
        q45 = ObservationPoint(qx, 0.0, qz, th, tv, cell_index=0)
        got = sensing_performance(p, q45, PARAMS)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_range_deviation_by_one_sigma(self):
        p = DroneState(0, 0, 2 + 0.3, 0.0, math.pi / 2)
        got = sensing_performance(p, obs(0, 0, 1), PARAMS)
        assert got == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_degenerate_scores_zero(self):
        p = DroneState(0, 0, 1, 0.0, math.pi / 2)
        assert sensing_performance(p, obs(0, 0, 1), PARAMS) == 0.0

    def test_score_bounded(self):
        rng = np.random.RandomState(11)
        for _ in range(200):
            p, q = random_pair(rng)
            s = sensing_performance(p, q, PARAMS)
            assert 0.0 <= s <= 1.0

    def test_rotation_invariance_about_z(self):
        rng = np.random.RandomState(5)
        for _ in range(50):
            p, q = random_pair(rng)
            base = sensing_performance(p, q, PARAMS)
            alpha = rng.uniform(-math.pi, math.pi)
            c, s = math.cos(alpha), math.sin(alpha)
            rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
            pp = rot @ p.position
            qq = rot @ q.position
            p2 = DroneState(pp[0], pp[1], pp[2], wrap_angle(p.theta_h + alpha), p.theta_v)
            q2 = ObservationPoint(
                qq[0], qq[1], qq[2], wrap_angle(q.theta_h + alpha), q.theta_v, 0
            )
            assert sensing_performance(p2, q2, PARAMS) == pytest.approx(base, abs=1e-12, rel=1e-12)

    def test_monotone_in_alignment_angle(self):
        # facing and range fixed at the optimum, alignment angle sweeps 0..pi
        sigma = PARAMS.sigma_align
        values = [
            math.exp(-((1 - math.cos(phi)) ** 2) / (2 * sigma**2))
            for phi in np.linspace(0, math.pi, 50)
        ]
        assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))


class TestGradient:
    def test_zero_at_maximum(self):
        p = DroneState(0, 0, 2, 0.0, math.pi / 2)
        grad, degenerate = sensing_gradient(p, obs(0, 0, 1), PARAMS)
        assert not degenerate
        assert np.allclose(grad, 0.0, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.RandomState(42)
        worst = 0.0
        for _ in range(1000):
            p, q = random_pair(rng)
            grad, degenerate = sensing_gradient(p, q, PARAMS)
            assert not degenerate
            fd = finite_difference_gradient(p, q, PARAMS)
            denom = max(np.linalg.norm(grad), 1e-30)
            worst = max(worst, np.linalg.norm(grad - fd) / denom)
        assert worst < 1e-4

    def test_degenerate_flagged_zero(self):
        p = DroneState(0, 0, 1, 0.0, math.pi / 2)
        grad, degenerate = sensing_gradient(p, obs(0, 0, 1), PARAMS)
        assert degenerate
        assert np.allclose(grad, 0.0)


class TestFacingSigmaHelper:
    def test_quarter_turn_spacing(self):
        assert sigma_facing_from_spacing(math.pi / 2) == pytest.approx(0.24876, rel=1e-4)

    def test_small_spacing_limit(self):
        assert sigma_facing_from_spacing(1e-6) < 1e-10

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            sigma_facing_from_spacing(0.0)

    def test_half_score_at_half_spacing(self):
        # With only the facing factor active, the score at angular deviation
        # delta/2 must be exactly one half.
        delta = 0.3
        sigma = sigma_facing_from_spacing(delta)
        g2 = 1.0 - math.cos(delta / 2)
        value = math.exp(-(g2**2) / (2 * sigma**2))
        assert value == pytest.approx(0.5, abs=1e-12)


class TestBatchedPaths:
    def test_batch_matches_scalar(self):
        rng = np.random.RandomState(9)
        pairs = [random_pair(rng) for _ in range(64)]
        p = pairs[0][0]
        q_pos = np.stack([q.position for _, q in pairs])
        q_dir = np.stack(
            [observation_direction(q.theta_h, q.theta_v) for _, q in pairs]
        )
        batch = score_batch(p.as_array(), q_pos, q_dir, PARAMS)
        for value, (_, q) in zip(batch, pairs):
            assert value == pytest.approx(sensing_performance(p, q, PARAMS), rel=1e-12)

    def test_grad_batch_matches_scalar(self):
        rng = np.random.RandomState(10)
        p, q = random_pair(rng)
        q_pos = q.position[None, :]
        q_dir = observation_direction(q.theta_h, q.theta_v)[None, :]
        h, g = score_grad_batch(p.as_array(), q_pos, q_dir, PARAMS)
        grad, _ = sensing_gradient(p, q, PARAMS)
        assert h[0] == pytest.approx(sensing_performance(p, q, PARAMS), rel=1e-12)
        assert np.allclose(g[0], grad, rtol=1e-12, atol=1e-15)
