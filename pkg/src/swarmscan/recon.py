"""Synthetic reconstruction oracle: exposure-driven mesh reveal.

Stands in for a learned online reconstruction pipeline while preserving its
interface: drones accumulate per-vertex viewing exposure on a hidden
ground-truth mesh, and at discrete events the oracle emits the currently
revealed portion, perturbed by noise that shrinks as exposure grows and
refined (one midpoint subdivision) where exposure is high.  Everything is
deterministic given (scene, seed, exposure history).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Region, observation_direction, wrap_angle
from .mesh import TriangleMesh
from .sensing import SensingParams, score_batch

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; uint64 in, uint64 out, overflow wraps."""
    z = (z + _GOLDEN).astype(np.uint64)
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def _uniforms(key: np.ndarray, stream: int) -> np.ndarray:
    """Per-key uniform samples in (0, 1]."""
    bits = _mix(key ^ _mix(np.full_like(key, _U64(stream + 1))))
    return ((bits >> _U64(11)).astype(np.float64) + 1.0) / 9007199254740993.0


def unit_noise_vectors(seed: int, indices: np.ndarray, event_index: int) -> np.ndarray:
    """Deterministic pseudo-random unit vectors keyed by (seed, index, event).

    Counter-based, so results are independent of evaluation order and batch
    shape.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    key = _mix(_mix(np.full_like(idx, _U64(seed & 0xFFFFFFFFFFFFFFFF))) ^ idx)
    key = _mix(key ^ _U64((event_index * 0x9E3779B1) & 0xFFFFFFFFFFFFFFFF))
    u1 = _uniforms(key, 0)
    u2 = _uniforms(key, 1)
    u3 = _uniforms(key, 2)
    u4 = _uniforms(key, 3)
    r1 = np.sqrt(-2.0 * np.log(u1))
    g0 = r1 * np.cos(2.0 * math.pi * u2)
    g1 = r1 * np.sin(2.0 * math.pi * u2)
    g2 = np.sqrt(-2.0 * np.log(u3)) * np.cos(2.0 * math.pi * u4)
    vec = np.stack([g0, g1, g2], axis=1)
    norm = np.linalg.norm(vec, axis=1)
    norm = np.where(norm < 1e-12, 1.0, norm)
    out = vec / norm[:, None]
    out[np.linalg.norm(vec, axis=1) < 1e-12] = (0.0, 0.0, 1.0)
    return out


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted unit vertex normals; isolated vertices default to +z."""
    normals = np.zeros_like(mesh.vertices)
    if mesh.n_faces:
        tri = mesh.vertices[mesh.faces]
        face_n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        for corner in range(3):
            np.add.at(normals, mesh.faces[:, corner], face_n)
    lengths = np.linalg.norm(normals, axis=1)
    ok = lengths > 1e-12
    normals[ok] /= lengths[ok, None]
    normals[~ok] = (0.0, 0.0, 1.0)
    return normals


@dataclass(frozen=True)
class OracleParams:
    """Reveal/noise/refinement knobs of the synthetic reconstruction.

    A vertex appears once its exposure reaches reveal_threshold; its position
    noise is noise_scale / (1 + exposure / noise_halflife); faces whose three
    vertices exceed refine_threshold are midpoint-subdivided once.
    """

    reveal_threshold: float = 0.5
    noise_scale: float = 0.08
    noise_halflife: float = 1.0
    refine_threshold: float = 3.0

    def __post_init__(self):
        for name in ("reveal_threshold", "noise_scale", "noise_halflife", "refine_threshold"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


class ExposureField:
    """Per-vertex exposure state of the hidden ground truth.

    Exposure integrates the best sensing score any drone achieves on the
    observation point sitting at the vertex with the vertex normal's viewing
    angles (pitch clamped into the admissible range).
    """

    def __init__(
        self,
        ground_truth: TriangleMesh,
        params: OracleParams,
        seed: int,
        theta_v_range: tuple[float, float],
    ):
        self.ground_truth = ground_truth
        self.params = params
        self.seed = int(seed)
        self.normals = vertex_normals(ground_truth)
        self.exposure = np.zeros(ground_truth.n_vertices)
        self.last_event_index = 0
        th = wrap_angle(np.arctan2(self.normals[:, 1], self.normals[:, 0]))
        tv = np.arcsin(np.clip(self.normals[:, 2], -1.0, 1.0))
        tv = np.clip(tv, theta_v_range[0], theta_v_range[1])
        self._obs_dir = observation_direction(th, tv)

    def accumulate_exposure(self, drone_states, sensing: SensingParams, dt: float) -> None:
        """Add dt times the best per-vertex sensing score across the drones."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.ground_truth.n_vertices == 0 or len(drone_states) == 0:
            return
        best = np.zeros(self.ground_truth.n_vertices)
        for state in drone_states:
            vec = state.as_array() if hasattr(state, "as_array") else np.asarray(state)
            np.maximum(
                best,
                score_batch(vec, self.ground_truth.vertices, self._obs_dir, sensing),
                out=best,
            )
        self.exposure += dt * best

    def emit_reconstruction_event(self, event_index: int) -> TriangleMesh:
        """Emit the revealed, noise-perturbed, locally refined mesh.

        Event indices must be strictly increasing.  Identical
        (seed, exposure, event_index) triples produce identical meshes.
        """
        if event_index <= self.last_event_index:
            raise ValueError(
                f"event index must increase (last {self.last_event_index}, got {event_index})"
            )
        self.last_event_index = event_index
        gt = self.ground_truth
        p = self.params
        revealed = self.exposure >= p.reveal_threshold
        new_index = np.full(gt.n_vertices, -1, dtype=np.int64)
        new_index[revealed] = np.arange(int(revealed.sum()))
        if not revealed.any():
            return TriangleMesh.empty()

        noise_mag = p.noise_scale / (1.0 + self.exposure / p.noise_halflife)
        directions = unit_noise_vectors(self.seed, np.arange(gt.n_vertices), event_index)
        verts = gt.vertices[revealed] + (
            noise_mag[revealed, None] * directions[revealed]
        )
        vertices = [verts]
        next_id = len(verts)

        face_keep = revealed[gt.faces].all(axis=1) if gt.n_faces else np.zeros(0, bool)
        refine = (
            (self.exposure[gt.faces] >= p.refine_threshold).all(axis=1) & face_keep
            if gt.n_faces
            else np.zeros(0, bool)
        )
        faces_out: list[tuple[int, int, int]] = []
        midpoint_of: dict[tuple[int, int], int] = {}
        extra: list[np.ndarray] = []

        def midpoint(a: int, b: int) -> int:
            nonlocal next_id
            key = (a, b) if a < b else (b, a)
            found = midpoint_of.get(key)
            if found is not None:
                return found
            pa = vertices[0][new_index[a]]
            pb = vertices[0][new_index[b]]
            extra.append(0.5 * (pa + pb))
            midpoint_of[key] = next_id
            next_id += 1
            return midpoint_of[key]

        for f_idx in range(gt.n_faces):
            if not face_keep[f_idx]:
                continue
            a, b, c = (int(v) for v in gt.faces[f_idx])
            ra, rb, rc = int(new_index[a]), int(new_index[b]), int(new_index[c])
            if refine[f_idx]:
                mab = midpoint(a, b)
                mbc = midpoint(b, c)
                mca = midpoint(c, a)
                faces_out.extend(
                    [(ra, mab, mca), (mab, rb, mbc), (mca, mbc, rc), (mab, mbc, mca)]
                )
            else:
                faces_out.append((ra, rb, rc))

        if extra:
            vertices.append(np.stack(extra))
        all_verts = np.vstack(vertices)
        faces = (
            np.array(faces_out, dtype=np.int64)
            if faces_out
            else np.zeros((0, 3), dtype=np.int64)
        )
        return TriangleMesh(all_verts, faces)


def _patch(origin, u_vec, v_vec, nu: int, nv: int):
    """Grid-triangulated parallelogram patch with outward normal u x v."""
    origin = np.asarray(origin, dtype=float)
    u_vec = np.asarray(u_vec, dtype=float)
    v_vec = np.asarray(v_vec, dtype=float)
    us = np.linspace(0.0, 1.0, nu + 1)
    vs = np.linspace(0.0, 1.0, nv + 1)
    verts = (
        origin[None, None, :]
        + us[:, None, None] * u_vec[None, None, :]
        + vs[None, :, None] * v_vec[None, None, :]
    ).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            v00 = i * (nv + 1) + j
            v01 = v00 + 1
            v10 = v00 + (nv + 1)
            v11 = v10 + 1
            faces.append((v00, v10, v11))
            faces.append((v00, v11, v01))
    return verts, np.array(faces, dtype=np.int64)


def _divisions(length: float, edge: float) -> int:
    return max(1, math.ceil(length / edge - 1e-12))


def _box_shell(x0, x1, y0, y1, z0, z1, edge):
    """Open-bottomed axis-aligned box: top plus four outward-facing sides."""
    parts = []
    dx, dy, dz = x1 - x0, y1 - y0, z1 - z0
    nx, ny, nz = _divisions(dx, edge), _divisions(dy, edge), _divisions(dz, edge)
    parts.append(_patch((x0, y0, z1), (dx, 0, 0), (0, dy, 0), nx, ny))  # top, +z
    parts.append(_patch((x0, y0, z0), (0, 0, dz), (0, dy, 0), nz, ny))  # -x side
    parts.append(_patch((x1, y0, z0), (0, dy, 0), (0, 0, dz), ny, nz))  # +x side
    parts.append(_patch((x0, y0, z0), (dx, 0, 0), (0, 0, dz), nx, nz))  # -y side
    parts.append(_patch((x0, y1, z0), (0, 0, dz), (dx, 0, 0), nz, nx))  # +y side
    return parts


def _wedge(x0, x1, y0, y1, z0, z_top, edge):
    """Ramp rising from z0 at y0 to z0+z_top at y1; bottom and ends open."""
    dx, dy = x1 - x0, y1 - y0
    slope_len = math.hypot(dy, z_top)
    nx = _divisions(dx, edge)
    ns = _divisions(slope_len, edge)
    nz = _divisions(z_top, edge)
    return [
        _patch((x0, y0, z0), (dx, 0, 0), (0, dy, z_top), nx, ns),  # slope, up/-y
        _patch((x0, y1, z0), (0, 0, z_top), (dx, 0, 0), nz, nx),  # back wall, +y
    ]


def procedural_scene(region: Region, edge: float = 0.065) -> TriangleMesh:
    """Deterministic indoor-style scene scaled to the target region.

    A floor slab spanning the region's footprint, a low box, a tall box, and a
    wedge, triangulated with edges short enough that one level of midpoint
    subdivision keeps every vertex close to an original one.
    """
    if edge <= 0.0:
        raise ValueError("edge must be positive")
    x0, y0, _ = region.mins
    x1, y1, _ = region.maxs
    w, h = x1 - x0, y1 - y0
    z_max = region.maxs[2] - region.mins[2]
    z_floor = region.mins[2]

    parts = [
        _patch(
            (x0, y0, z_floor),
            (w, 0, 0),
            (0, h, 0),
            _divisions(w, edge),
            _divisions(h, edge),
        )
    ]
    parts += _box_shell(
        x0 + 0.15 * w,
        x0 + 0.42 * w,
        y0 + 0.58 * h,
        y0 + 0.80 * h,
        z_floor,
        z_floor + 0.40 * z_max,
        edge,
    )
    parts += _box_shell(
        x0 + 0.64 * w,
        x0 + 0.86 * w,
        y0 + 0.14 * h,
        y0 + 0.36 * h,
        z_floor,
        z_floor + 0.80 * z_max,
        edge,
    )
    parts += _wedge(
        x0 + 0.38 * w,
        x0 + 0.60 * w,
        y0 + 0.12 * h,
        y0 + 0.34 * h,
        z_floor,
        0.45 * z_max,
        edge,
    )

    verts = []
    faces = []
    offset = 0
    for pv, pf in parts:
        verts.append(pv)
        faces.append(pf + offset)
        offset += len(pv)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))
