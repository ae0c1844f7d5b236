import math

import numpy as np
import pytest

from swarmscan.geometry import DroneState, Region
from swarmscan.mesh import TriangleMesh, write_mesh
from swarmscan.metrics import evaluate
from swarmscan.recon import (
    ExposureField,
    OracleParams,
    procedural_scene,
    unit_noise_vectors,
    vertex_normals,
)
from swarmscan.sensing import SensingParams

REGION = Region((-3, -3, 0), (3, 3, 2))
TV_RANGE = (math.pi / 3, math.pi / 2)
SENSING = SensingParams()


def make_exposure(mesh=None, seed=0, **params):
    mesh = mesh if mesh is not None else procedural_scene(REGION, edge=0.3)
    return ExposureField(mesh, OracleParams(**params), seed, TV_RANGE)


class TestNoiseVectors:
    def test_unit_norm(self):
        v = unit_noise_vectors(42, np.arange(1000), 3)
        assert np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) < 1e-12

    def test_deterministic_and_order_independent(self):
        a = unit_noise_vectors(7, np.arange(100), 2)
        b = unit_noise_vectors(7, np.arange(100)[::-1], 2)[::-1]
        assert np.array_equal(a, b)

    def test_varies_with_seed_index_event(self):
        base = unit_noise_vectors(1, np.arange(10), 1)
        assert not np.allclose(base, unit_noise_vectors(2, np.arange(10), 1))
        assert not np.allclose(base, unit_noise_vectors(1, np.arange(10), 2))
        assert not np.allclose(base[0], base[1])


class TestVertexNormals:
    def test_flat_floor_points_up(self):
        mesh = TriangleMesh(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float),
            np.array([[0, 1, 3], [0, 3, 2]]),
        )
        n = vertex_normals(mesh)
        assert np.allclose(n, [[0, 0, 1]] * 4, atol=1e-12)

    def test_isolated_vertex_default(self):
        mesh = TriangleMesh(np.zeros((1, 3)), np.zeros((0, 3), int))
        assert np.allclose(vertex_normals(mesh), [[0, 0, 1]])


class TestExposureAccumulation:
    def test_no_drones_no_change(self):
        field = make_exposure()
        field.accumulate_exposure([], SENSING, dt=0.1)
        assert np.all(field.exposure == 0.0)

    def test_perfect_viewpoint_accrues_dt(self):
        # single upward-facing vertex observed head-on from the ideal distance
        mesh = TriangleMesh(
            np.array([[0, 0, 0.5], [0.2, 0, 0.5], [0, 0.2, 0.5]]),
            np.array([[0, 1, 2]]),
        )
        field = make_exposure(mesh=mesh)
        drone = DroneState(0, 0, 1.5, 0.0, math.pi / 2)
        field.accumulate_exposure([drone], SENSING, dt=0.1)
        assert field.exposure[0] == pytest.approx(0.1, rel=1e-9)

    def test_increment_bounded_by_dt(self):
        field = make_exposure()
        rng = np.random.RandomState(0)
        drones = [
            DroneState(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 3),
                       rng.uniform(-math.pi, math.pi), rng.uniform(1.1, 1.5))
            for _ in range(3)
        ]
        field.accumulate_exposure(drones, SENSING, dt=0.25)
        assert np.all(field.exposure <= 0.25 + 1e-12)
        assert np.all(field.exposure >= 0.0)

    def test_exposure_nondecreasing(self):
        field = make_exposure()
        drone = DroneState(0, 1, 2, -math.pi / 2, 1.3)
        field.accumulate_exposure([drone], SENSING, dt=0.1)
        snapshot = field.exposure.copy()
        field.accumulate_exposure([drone], SENSING, dt=0.1)
        assert np.all(field.exposure >= snapshot)


class TestEventEmission:
    def test_zero_exposure_empty_mesh(self):
        field = make_exposure()
        out = field.emit_reconstruction_event(1)
        assert out.n_vertices == 0
        assert out.n_faces == 0

    def test_full_exposure_recovers_ground_truth(self):
        # the bundled scene's default edge keeps subdivision midpoints within
        # the benchmark threshold of original vertices
        field = make_exposure(mesh=procedural_scene(REGION, edge=0.065))
        field.exposure[:] = 100.0 * field.params.noise_halflife
        out = field.emit_reconstruction_event(1)
        report = evaluate(out, field.ground_truth, eta=0.05)
        assert report.f_score >= 0.99

    def test_determinism_byte_identical(self):
        a = make_exposure(seed=5)
        b = make_exposure(seed=5)
        for f in (a, b):
            f.exposure[:] = np.linspace(0, 4, f.ground_truth.n_vertices)
        mesh_a = a.emit_reconstruction_event(1)
        mesh_b = b.emit_reconstruction_event(1)
        assert write_mesh(mesh_a) == write_mesh(mesh_b)

    def test_monotone_event_index_enforced(self):
        field = make_exposure()
        field.emit_reconstruction_event(1)
        with pytest.raises(ValueError):
            field.emit_reconstruction_event(1)

    def test_revealed_set_monotone(self):
        field = make_exposure()
        rng = np.random.RandomState(1)
        revealed_prev = 0
        for t in range(1, 4):
            field.exposure += rng.uniform(0, 0.4, field.exposure.shape)
            out = field.emit_reconstruction_event(t)
            assert out.n_vertices >= revealed_prev
            revealed_prev = out.n_vertices

    def test_noise_shrinks_with_exposure(self):
        mesh = TriangleMesh(
            np.array([[0, 0, 1.0], [0.2, 0, 1.0], [0, 0.2, 1.0]]),
            np.array([[0, 1, 2]]),
        )
        a = make_exposure(mesh=mesh, seed=3)
        a.exposure[:] = 1.0
        low = a.emit_reconstruction_event(1)
        err_low = np.linalg.norm(low.vertices - mesh.vertices, axis=1).max()
        a.exposure[:] = 50.0
        high = a.emit_reconstruction_event(2)
        # compare the original vertices only (refinement appends midpoints)
        err_high = np.linalg.norm(high.vertices[:3] - mesh.vertices, axis=1).max()
        assert err_high < err_low
        assert err_low == pytest.approx(0.08 / 2.0, rel=1e-9)

    def test_faces_require_all_vertices_revealed(self):
        mesh = TriangleMesh(
            np.array([[0, 0, 1.0], [0.2, 0, 1.0], [0, 0.2, 1.0], [0.2, 0.2, 1.0]]),
            np.array([[0, 1, 2], [1, 3, 2]]),
        )
        field = make_exposure(mesh=mesh)
        field.exposure[:] = [1.0, 1.0, 1.0, 0.0]
        out = field.emit_reconstruction_event(1)
        assert out.n_vertices == 3
        assert out.n_faces == 1

    def test_refinement_subdivides_once(self):
        mesh = TriangleMesh(
            np.array([[0, 0, 1.0], [0.2, 0, 1.0], [0, 0.2, 1.0]]),
            np.array([[0, 1, 2]]),
        )
        field = make_exposure(mesh=mesh)
        field.exposure[:] = 10.0  # above the refine threshold
        out = field.emit_reconstruction_event(1)
        assert out.n_vertices == 6  # 3 originals + 3 edge midpoints
        assert out.n_faces == 4

    def test_shared_refined_edges_deduplicated(self):
        mesh = TriangleMesh(
            np.array([[0, 0, 1.0], [0.2, 0, 1.0], [0, 0.2, 1.0], [0.2, 0.2, 1.0]]),
            np.array([[0, 1, 2], [1, 3, 2]]),
        )
        field = make_exposure(mesh=mesh)
        field.exposure[:] = 10.0
        out = field.emit_reconstruction_event(1)
        # 4 originals + 5 unique edges
        assert out.n_vertices == 9
        assert out.n_faces == 8


class TestProceduralScene:
    def test_inside_region_and_nontrivial(self):
        scene = procedural_scene(REGION, edge=0.2)
        assert scene.n_vertices > 500
        assert scene.n_faces > 500
        assert REGION.contains_many(scene.vertices).all()

    def test_deterministic(self):
        a = procedural_scene(REGION, edge=0.25)
        b = procedural_scene(REGION, edge=0.25)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.faces, b.faces)

    def test_scales_with_region(self):
        small = Region((-1, -1, 0), (1, 1, 1))
        scene = procedural_scene(small, edge=0.15)
        assert small.contains_many(scene.vertices).all()

    def test_edge_lengths_bounded(self):
        scene = procedural_scene(REGION, edge=0.065)
        tri = scene.vertices[scene.faces]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            lengths = np.linalg.norm(tri[:, a] - tri[:, b], axis=1)
            # one subdivision level must keep new vertices within the
            # benchmark distance threshold of an original vertex
            assert lengths.max() < 2 * (0.05 - 0.001)


class TestClosedLoopCoupling:
    def test_unobserved_regions_emit_nothing(self):
        field = make_exposure()
        drone = DroneState(0, 1, 2, -math.pi / 2, 1.3)
        for _ in range(40):
            field.accumulate_exposure([drone], SENSING, dt=0.1)
        out = field.emit_reconstruction_event(1)
        if out.n_vertices:
            # everything revealed sits near the drone's viewing footprint
            dists = np.linalg.norm(out.vertices - drone.position, axis=1)
            assert dists.max() < 4.0
        far_corner = np.array([2.9, -2.9, 0.0])
        if out.n_vertices:
            assert np.linalg.norm(out.vertices - far_corner, axis=1).min() > 0.5
