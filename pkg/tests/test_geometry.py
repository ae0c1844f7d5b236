import math

import numpy as np
import pytest

from swarmscan.geometry import (
    DroneState,
    ObservationPoint,
    Region,
    discretize_virtual_field,
    observation_direction,
    region_contains,
    state_projections,
    wrap_angle,
)


def test_drone_state_wraps_yaw_and_validates_pitch():
    d = DroneState(0, 0, 1, theta_h=3 * math.pi, theta_v=1.0)
    assert -math.pi <= d.theta_h < math.pi
    assert d.theta_h == pytest.approx(-math.pi)
    with pytest.raises(ValueError):
        DroneState(0, 0, 1, 0.0, 0.0)
    with pytest.raises(ValueError):
        DroneState(0, 0, 1, 0.0, math.pi / 2 + 1e-6)


def test_wrap_angle_halfopen_interval():
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(-math.pi)
    assert wrap_angle(0.3) == pytest.approx(0.3)


def test_projection_straight_up_observation():
    q = ObservationPoint(1, 2, 3, theta_h=0.0, theta_v=math.pi / 2, cell_index=0)
    pos, ang, direction = state_projections(q)
    assert np.allclose(pos, [1, 2, 3])
    assert np.allclose(ang, [0.0, math.pi / 2])
    assert np.allclose(direction, [0, 0, 1], atol=1e-12)


def test_projection_30_degree_pitch():
    q = ObservationPoint(0, 0, 0, theta_h=0.0, theta_v=math.pi / 6, cell_index=0)
    _, _, direction = state_projections(q)
    assert np.allclose(direction, [math.sqrt(3) / 2, 0.0, 0.5], atol=1e-12)


def test_projection_yaw_pi_vertical():
    q = ObservationPoint(0, 0, 0, theta_h=math.pi, theta_v=math.pi / 2, cell_index=0)
    _, _, direction = state_projections(q)
    assert np.allclose(direction, [0, 0, 1], atol=1e-12)


def test_drone_camera_points_down():
    d = DroneState(0, 0, 2, theta_h=0.0, theta_v=math.pi / 2)
    _, _, direction = state_projections(d)
    assert np.allclose(direction, [0, 0, -1], atol=1e-12)


def test_directions_unit_norm():
    rng = np.random.RandomState(7)
    th = rng.uniform(-math.pi, math.pi, 1000)
    tv = rng.uniform(1e-3, math.pi / 2, 1000)
    for dirs in (observation_direction(th, tv),):
        assert np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)) < 1e-12


def test_region_contains_closed_box():
    box = Region((-1, -1, -1), (1, 1, 1))
    assert region_contains(box, (0, 0, 0))
    assert region_contains(box, (1, 0, 0))  # face point, closed region
    assert not region_contains(box, (2, 0, 0))


def test_region_rejects_empty_axis():
    with pytest.raises(ValueError):
        Region((0, 0, 0), (1, 0, 1))


def test_discretize_small_cube():
    field = discretize_virtual_field(
        Region((-0.3, -0.3, -0.3), (0.3, 0.3, 0.3)),
        theta_h_range=(-0.1, 0.1),
        theta_v_range=(1.0, 1.2),
        resolution=(0.3, 0.3, 0.3, 0.2, 0.2),
    )
    assert field.counts == (2, 2, 2, 1, 1)
    assert field.m == 8


def test_discretize_benchmark_configuration():
    field = discretize_virtual_field(
        Region((-3, -3, 0), (3, 3, 2)),
        theta_h_range=(-math.pi, math.pi),
        theta_v_range=(math.pi / 3, math.pi / 2),
        resolution=0.3,
    )
    assert field.counts == (20, 20, 7, 21, 2)
    assert field.m == 117_600


def test_resolution_larger_than_extent_gives_one_cell():
    field = discretize_virtual_field(
        Region((0, 0, 0), (1, 1, 1)),
        theta_h_range=(0.0, 0.5),
        theta_v_range=(1.0, 1.5),
        resolution=10.0,
    )
    assert field.counts == (1, 1, 1, 1, 1)
    assert field.m == 1


def test_discretize_rejects_bad_resolution():
    region = Region((0, 0, 0), (1, 1, 1))
    with pytest.raises(ValueError):
        discretize_virtual_field(region, (0, 1), (1, 1.5), resolution=0.0)


def test_cell_centers_at_midpoints():
    field = discretize_virtual_field(
        Region((0, 0, 0), (1, 1, 1)),
        theta_h_range=(0.0, 1.0),
        theta_v_range=(1.0, 1.5),
        resolution=(0.5, 1.0, 1.0, 1.0, 1.0),
    )
    xs = sorted(set(field.centers[:, 0]))
    assert xs == pytest.approx([0.25, 0.75])


def test_cell_lookup_roundtrip_is_partition():
    field = discretize_virtual_field(
        Region((-1, -1, 0), (1, 1, 1)),
        theta_h_range=(-math.pi, math.pi),
        theta_v_range=(math.pi / 3, math.pi / 2),
        resolution=(0.4, 0.4, 0.5, 1.0, 0.3),
    )
    rng = np.random.RandomState(3)
    for _ in range(300):
        pt = np.array(
            [
                rng.uniform(-1, 1),
                rng.uniform(-1, 1),
                rng.uniform(0, 1),
                rng.uniform(-math.pi, math.pi),
                rng.uniform(math.pi / 3, math.pi / 2),
            ]
        )
        j = field.cell_index_of(pt)
        assert 0 <= j < field.m
        # Re-looking up the cell's own center returns the same index.
        assert field.cell_index_of(field.centers[j]) == j


def test_iteration_order_deterministic():
    kwargs = dict(
        region=Region((-1, -1, 0), (1, 1, 1)),
        theta_h_range=(-math.pi, math.pi),
        theta_v_range=(math.pi / 3, math.pi / 2),
        resolution=(0.5, 0.5, 0.5, 1.5, 0.3),
    )
    f1 = discretize_virtual_field(**kwargs)
    f2 = discretize_virtual_field(**kwargs)
    assert np.array_equal(f1.centers, f2.centers)
    # pitch varies fastest, x slowest
    assert f1.centers[0, 0] == f1.centers[1, 0]
    assert f1.centers[0, 4] != f1.centers[1, 4]


def test_unique_positions_and_ids():
    field = discretize_virtual_field(
        Region((0, 0, 0), (1, 1, 1)),
        theta_h_range=(0.0, 2.0),
        theta_v_range=(1.0, 1.5),
        resolution=(0.5, 1.0, 1.0, 1.0, 0.25),
    )
    n_pos = len(field.unique_positions)
    assert n_pos == 2
    ids = field.position_id(np.arange(field.m))
    for j in range(field.m):
        assert np.allclose(field.unique_positions[ids[j]], field.centers[j, :3])


def test_point_accessor_and_bounds():
    field = discretize_virtual_field(
        Region((0, 0, 0), (1, 1, 1)),
        theta_h_range=(0.0, 1.0),
        theta_v_range=(1.0, 1.5),
        resolution=1.0,
    )
    p = field.point(0)
    assert p.cell_index == 0
    with pytest.raises(IndexError):
        field.point(field.m)
