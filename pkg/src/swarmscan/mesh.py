"""Triangle meshes, ASCII PLY exchange, and mesh-change feedback signals.

Two quantifiers turn a pair of consecutive reconstruction meshes into a
nonnegative field over observation cells: a cheap vertex-binning method
(count differences per core point, squashed and spread by a Gaussian kernel)
and a cloud-comparison method that measures true normal-direction displacement
at the same core points.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Region, VirtualField


class PlyFormatError(ValueError):
    """Raised for malformed PLY input."""


@dataclass
class TriangleMesh:
    """Vertex/face soup: vertices (n, 3) float, faces (k, 3) vertex indices."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face references a vertex out of range")
            a, b, c = self.faces[:, 0], self.faces[:, 1], self.faces[:, 2]
            if np.any((a == b) | (b == c) | (a == c)):
                raise ValueError("degenerate face with repeated vertices")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @staticmethod
    def empty() -> "TriangleMesh":
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


@dataclass(frozen=True)
class MeshEvent:
    """One discrete reconstruction emission."""

    event_index: int
    mesh: TriangleMesh
    sim_time: float


def write_mesh(mesh: TriangleMesh) -> bytes:
    """Serialize to ASCII PLY 1.0 with double-precision vertex coordinates."""
    out = io.StringIO()
    out.write("ply\n")
    out.write("format ascii 1.0\n")
    out.write(f"element vertex {mesh.n_vertices}\n")
    out.write("property double x\n")
    out.write("property double y\n")
    out.write("property double z\n")
    out.write(f"element face {mesh.n_faces}\n")
    out.write("property list uchar int vertex_indices\n")
    out.write("end_header\n")
    for x, y, z in mesh.vertices:
        out.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
    for a, b, c in mesh.faces:
        out.write(f"3 {a} {b} {c}\n")
    return out.getvalue().encode("ascii")


def parse_mesh(data: bytes) -> TriangleMesh:
    """Parse an ASCII PLY mesh with x/y/z vertex properties and index faces."""
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise PlyFormatError("PLY payload is not ASCII text") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyFormatError("missing 'ply' magic line")
    elements: list[tuple[str, int, list[str]]] = []
    fmt_seen = False
    idx = 1
    while idx < len(lines):
        parts = lines[idx].split()
        idx += 1
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1:2] != ["ascii"]:
                raise PlyFormatError(f"unsupported PLY format {parts[1:]}")
            fmt_seen = True
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"malformed element line: {lines[idx-1]!r}")
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyFormatError("property before any element")
            elements[-1][2].append(" ".join(parts[1:]))
        elif parts[0] == "end_header":
            break
        else:
            raise PlyFormatError(f"unexpected header line: {lines[idx-1]!r}")
    else:
        raise PlyFormatError("header never terminated with end_header")
    if not fmt_seen:
        raise PlyFormatError("missing format declaration")

    vertices = np.zeros((0, 3))
    faces = np.zeros((0, 3), dtype=np.int64)
    for name, count, props in elements:
        rows = lines[idx : idx + count]
        if len(rows) < count:
            raise PlyFormatError(f"element {name} declares {count} rows, file has fewer")
        idx += count
        if name == "vertex":
            names = [p.split()[-1] for p in props]
            try:
                cols = [names.index(ax) for ax in ("x", "y", "z")]
            except ValueError as exc:
                raise PlyFormatError("vertex element lacks x/y/z properties") from exc
            if count:
                try:
                    table = np.array(
                        [[float(v) for v in r.split()] for r in rows], dtype=float
                    )
                except ValueError as exc:
                    raise PlyFormatError(f"malformed vertex data: {exc}") from exc
                if table.ndim != 2 or table.shape[1] != len(names):
                    raise PlyFormatError("vertex row width does not match header")
                vertices = table[:, cols]
        elif name == "face":
            parsed = []
            for r in rows:
                parts = r.split()
                if not parts:
                    raise PlyFormatError("empty face row")
                try:
                    n = int(parts[0])
                    indices = [int(v) for v in parts[1:]]
                except ValueError as exc:
                    raise PlyFormatError(f"malformed face row {r!r}") from exc
                if n != 3 or len(indices) != n:
                    raise PlyFormatError(f"only triangles supported, got row {r!r}")
                parsed.append(indices)
            if parsed:
                faces = np.array(parsed, dtype=np.int64)
    try:
        return TriangleMesh(vertices, faces)
    except ValueError as exc:
        raise PlyFormatError(str(exc)) from exc


@dataclass(frozen=True)
class FeedbackParams:
    """Core points and kernel widths of the mesh-change quantifiers.

    sigma4 is the spatial influence radius of each core point, kappa the
    count-difference normalization of the binning method; the two radii steer
    the cloud-comparison method's normal estimation and cylinder search.
    core_grid caches the (nx, ny, nz, origin, step) of grid-built core points
    for O(n) vertex binning; it is None for arbitrary point sets.
    """

    core_points: np.ndarray
    sigma4: float = 0.4
    kappa: float = 0.7
    normal_radius: float = 1.2
    cylinder_radius: float = 0.6
    core_grid: tuple | None = None

    def __post_init__(self):
        pts = np.asarray(self.core_points, dtype=float).reshape(-1, 3)
        if len(pts) < 1:
            raise ValueError("need at least one core point")
        pts.setflags(write=False)
        object.__setattr__(self, "core_points", pts)
        for name in ("sigma4", "kappa", "normal_radius", "cylinder_radius"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def s(self) -> int:
        return len(self.core_points)


def uniform_core_points(region: Region, spacing: float) -> tuple[np.ndarray, tuple]:
    """Uniform 3-D grid of core points over the region (cell midpoints).

    Returns (points, grid_meta) where grid_meta enables O(n) nearest-core
    binning.
    """
    if spacing <= 0.0:
        raise ValueError("core spacing must be positive")
    counts = []
    axes = []
    steps = []
    for lo, hi in zip(region.mins, region.maxs):
        n = max(1, math.ceil((hi - lo) / spacing - 1e-12))
        step = (hi - lo) / n
        counts.append(n)
        steps.append(step)
        axes.append(lo + (np.arange(n) + 0.5) * step)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.reshape(-1), gy.reshape(-1), gz.reshape(-1)], axis=1)
    meta = (tuple(counts), tuple(region.mins), tuple(steps))
    return pts, meta


def bin_vertices(mesh: TriangleMesh, params: FeedbackParams, region: Region) -> np.ndarray:
    """Per-core-point counts of in-region mesh vertices nearest to each core.

    Vertices outside the region are excluded; equidistant vertices go to the
    lowest core-point index.
    """
    counts = np.zeros(params.s, dtype=np.int64)
    if mesh.n_vertices == 0:
        return counts
    verts = mesh.vertices
    inside = region.contains_many(verts)
    verts = verts[inside]
    if len(verts) == 0:
        return counts
    if params.core_grid is not None:
        (nx, ny, nz), origin, steps = params.core_grid
        idx3 = []
        for axis, n in enumerate((nx, ny, nz)):
            k = np.floor((verts[:, axis] - origin[axis]) / steps[axis]).astype(np.int64)
            idx3.append(np.clip(k, 0, n - 1))
        flat = (idx3[0] * ny + idx3[1]) * nz + idx3[2]
        np.add.at(counts, flat, 1)
        return counts
    # Generic core sets: chunked argmin keeps the lowest-index tie-break exact.
    chunk = 2048
    for start in range(0, len(verts), chunk):
        block = verts[start : start + chunk]
        d2 = np.sum((block[:, None, :] - params.core_points[None, :, :]) ** 2, axis=2)
        nearest = d2.argmin(axis=1)
        np.add.at(counts, nearest, 1)
    return counts


def grid_delta(counts_now: np.ndarray, counts_prev: np.ndarray) -> np.ndarray:
    """Signed per-core-point change in vertex counts between two events."""
    now = np.asarray(counts_now)
    prev = np.asarray(counts_prev)
    if now.shape != prev.shape:
        raise ValueError(f"count arrays differ in shape: {now.shape} vs {prev.shape}")
    return now - prev


def precompute_kernel_weights(
    field: VirtualField, core_points: np.ndarray, sigma4: float
) -> np.ndarray:
    """Gaussian kernel weights between unique field positions and core points.

    Cells sharing a position (the angle axes) share a weight row, so the table
    has shape (n_unique_positions, s).
    """
    pos = field.unique_positions
    cores = np.asarray(core_points, dtype=float).reshape(-1, 3)
    d2 = np.sum((pos[:, None, :] - cores[None, :, :]) ** 2, axis=2)
    return np.exp(-d2 / (2.0 * sigma4**2))


def h2_grid(
    delta: np.ndarray,
    field: VirtualField,
    params: FeedbackParams,
    weights: np.ndarray | None,
) -> np.ndarray:
    """Binning-method feedback over all field cells.

    Count differences are squashed by tanh((dV/kappa)^2)^2 into [0, 1) and
    spread spatially by the precomputed Gaussian weights.
    """
    if weights is None:
        raise ValueError("kernel weights missing; call precompute_kernel_weights")
    delta = np.asarray(delta, dtype=float)
    factor = np.tanh((delta / params.kappa) ** 2) ** 2
    per_position = weights @ factor
    return per_position[field.position_id(np.arange(field.m))]


def m3c2_distance(
    cloud_prev: np.ndarray, cloud_now: np.ndarray, params: FeedbackParams
) -> tuple[np.ndarray, np.ndarray]:
    """Mean normal-direction displacement between two clouds at each core point.

    For every core point a local plane normal is estimated from the previous
    cloud; both clouds are projected onto the (unbounded) cylinder around that
    normal and the absolute difference of mean offsets is reported.  Core
    points whose normal neighborhood or either cylinder is empty are flagged
    invalid and carry zero.
    """
    prev = np.asarray(cloud_prev, dtype=float).reshape(-1, 3)
    now = np.asarray(cloud_now, dtype=float).reshape(-1, 3)
    if len(prev) == 0 or len(now) == 0:
        raise ValueError("point clouds must be nonempty")
    tree = cKDTree(prev)
    s = params.s
    L = np.zeros(s)
    valid = np.zeros(s, dtype=bool)
    r2 = params.cylinder_radius**2
    for k, core in enumerate(params.core_points):
        neighbors = tree.query_ball_point(core, params.normal_radius)
        if len(neighbors) < 3:
            continue
        local = prev[neighbors] - core
        cov = local.T @ local / len(neighbors)
        eigval, eigvec = np.linalg.eigh(cov)
        normal = eigvec[:, 0]  # smallest-variance direction
        offsets = []
        ok = True
        for cloud in (prev, now):
            rel = cloud - core
            along = rel @ normal
            perp2 = np.einsum("ij,ij->i", rel, rel) - along**2
            markers = along[perp2 <= r2]
            if markers.size == 0:
                ok = False
                break
            offsets.append(markers.mean())
        if not ok:
            continue
        L[k] = abs(offsets[1] - offsets[0])
        valid[k] = True
    return L, valid


def h2_m3c2(
    L: np.ndarray,
    field: VirtualField,
    params: FeedbackParams,
    weights: np.ndarray | None,
    valid: np.ndarray | None = None,
) -> np.ndarray:
    """Cloud-comparison feedback over all field cells.

    Displacements spread through the same Gaussian kernel; invalid core points
    contribute nothing.
    """
    if weights is None:
        raise ValueError("kernel weights missing; call precompute_kernel_weights")
    L = np.asarray(L, dtype=float)
    if valid is not None:
        L = np.where(np.asarray(valid, dtype=bool), L, 0.0)
    per_position = weights @ L
    return per_position[field.position_id(np.arange(field.m))]
