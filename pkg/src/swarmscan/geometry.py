"""5-D pose space, axis-aligned regions, and the discretized observation lattice.

A drone pose couples a 3-D position with two gimbal angles (camera yaw and
pitch).  The coverage state lives on a "virtual field": the target box crossed
with the admissible viewing-angle ranges, discretized into cells whose centers
are the observation points the controller tries to service.

Velocity inputs are plain 5-vectors (dx, dy, dz, dyaw, dpitch); box limits on
them are enforced by the controller's QP rows, not by a wrapper type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into [-pi, pi)."""
    return (angle + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class DroneState:
    """Drone pose: position in meters, camera yaw/pitch in radians.

    Yaw is stored wrapped into [-pi, pi).  Pitch is measured downward from
    horizontal and must lie in (0, pi/2]; pi/2 looks straight down.
    """

    x: float
    y: float
    z: float
    theta_h: float
    theta_v: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "theta_h", float(wrap_angle(self.theta_h)))
        object.__setattr__(self, "theta_v", float(self.theta_v))
        if not (0.0 < self.theta_v <= math.pi / 2):
            raise ValueError(
                f"camera pitch must lie in (0, pi/2], got {self.theta_v!r}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.theta_h, self.theta_v])

    @staticmethod
    def from_array(vec) -> "DroneState":
        x, y, z, th, tv = (float(v) for v in vec)
        return DroneState(x, y, z, th, tv)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class ObservationPoint:
    """A virtual-field cell center: where to look from, and along which angles."""

    x: float
    y: float
    z: float
    theta_h: float
    theta_v: float
    cell_index: int

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Region:
    """Closed axis-aligned box in R^3."""

    mins: tuple[float, float, float]
    maxs: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "mins", tuple(float(v) for v in self.mins))
        object.__setattr__(self, "maxs", tuple(float(v) for v in self.maxs))
        for lo, hi in zip(self.mins, self.maxs):
            if not lo < hi:
                raise ValueError(f"region must have min < max per axis, got {self}")

    def contains(self, pos) -> bool:
        pos = np.asarray(pos, dtype=float)
        return bool(
            np.all(pos >= np.array(self.mins)) and np.all(pos <= np.array(self.maxs))
        )

    def contains_many(self, pos: np.ndarray) -> np.ndarray:
        """Vectorized containment test for an (n, 3) array."""
        lo = np.array(self.mins)
        hi = np.array(self.maxs)
        return np.all((pos >= lo) & (pos <= hi), axis=1)

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.maxs) - np.array(self.mins)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.mins) + np.array(self.maxs))


def region_contains(region: Region, pos) -> bool:
    """True iff pos lies inside the closed box."""
    return region.contains(pos)


def observation_direction(theta_h, theta_v) -> np.ndarray:
    """Viewing direction of an observation point (outward surface normal).

    Positive pitch tilts the direction upward: (cos th cos tv, sin th cos tv, sin tv).
    """
    theta_h = np.asarray(theta_h, dtype=float)
    theta_v = np.asarray(theta_v, dtype=float)
    ctv = np.cos(theta_v)
    return np.stack(
        [np.cos(theta_h) * ctv, np.sin(theta_h) * ctv, np.sin(theta_v)], axis=-1
    )


def camera_direction(theta_h, theta_v) -> np.ndarray:
    """Optical axis of a drone camera, pitch measured downward.

    At tv = pi/2 the camera looks straight down: (cos th cos tv, sin th cos tv, -sin tv).
    """
    theta_h = np.asarray(theta_h, dtype=float)
    theta_v = np.asarray(theta_v, dtype=float)
    ctv = np.cos(theta_v)
    return np.stack(
        [np.cos(theta_h) * ctv, np.sin(theta_h) * ctv, -np.sin(theta_v)], axis=-1
    )


def state_projections(state):
    """Split a 5-D state into (position, angles, direction).

    Observation points carry their outward viewing direction; drone states
    carry the downward-pitched camera axis.  The direction has unit norm.
    """
    if isinstance(state, DroneState):
        direction = camera_direction(state.theta_h, state.theta_v)
    elif isinstance(state, ObservationPoint):
        direction = observation_direction(state.theta_h, state.theta_v)
    else:
        raise TypeError(f"expected DroneState or ObservationPoint, got {type(state)!r}")
    pos = np.array([state.x, state.y, state.z])
    ang = np.array([state.theta_h, state.theta_v])
    return pos, ang, direction


def _axis_cells(lo: float, hi: float, resolution: float) -> tuple[int, float]:
    if resolution <= 0.0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    extent = hi - lo
    count = max(1, math.ceil(extent / resolution - 1e-12))
    return count, extent / count


@dataclass(frozen=True)
class VirtualField:
    """Discretized 5-D lattice over target-box positions and viewing angles.

    Cells are ordered deterministically: x outermost, then y, z, yaw, pitch
    (pitch varies fastest).  Centers sit at per-axis interval midpoints.
    """

    region: Region
    theta_h_range: tuple[float, float]
    theta_v_range: tuple[float, float]
    resolution: tuple[float, float, float, float, float]
    counts: tuple[int, int, int, int, int]
    centers: np.ndarray  # (m, 5), read-only

    def __post_init__(self):
        self.centers.setflags(write=False)
        directions = observation_direction(self.centers[:, 3], self.centers[:, 4])
        directions.setflags(write=False)
        object.__setattr__(self, "_directions", directions)

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.centers[:, :3]

    @property
    def angles(self) -> np.ndarray:
        return self.centers[:, 3:]

    @property
    def directions(self) -> np.ndarray:
        """Outward viewing directions of all cells, shape (m, 3)."""
        return self._directions

    @property
    def angle_cells_per_position(self) -> int:
        return self.counts[3] * self.counts[4]

    @property
    def unique_positions(self) -> np.ndarray:
        """The (nx*ny*nz, 3) distinct spatial positions, in cell order."""
        return self.centers[:: self.angle_cells_per_position, :3]

    def position_id(self, cell_index) -> np.ndarray:
        """Map cell indices to indices into unique_positions."""
        return np.asarray(cell_index) // self.angle_cells_per_position

    def point(self, j: int) -> ObservationPoint:
        if not 0 <= j < self.m:
            raise IndexError(f"cell index {j} out of range for m={self.m}")
        x, y, z, th, tv = self.centers[j]
        return ObservationPoint(float(x), float(y), float(z), float(th), float(tv), j)

    def __iter__(self):
        for j in range(self.m):
            yield self.point(j)

    def cell_index_of(self, coords) -> int:
        """Index of the cell containing a 5-D point of B x Th x Tv.

        Yaw is treated circularly when the yaw range spans the full circle;
        boundary values fall into the adjacent (closed-box) cell.
        """
        coords = np.asarray(coords, dtype=float)
        los = list(self.region.mins) + [self.theta_h_range[0], self.theta_v_range[0]]
        his = list(self.region.maxs) + [self.theta_h_range[1], self.theta_v_range[1]]
        idx = []
        for axis in range(5):
            v = float(coords[axis])
            lo, hi, n = los[axis], his[axis], self.counts[axis]
            if axis == 3 and (hi - lo) >= TWO_PI - 1e-9:
                v = lo + (v - lo) % TWO_PI
            step = (hi - lo) / n
            k = int(math.floor((v - lo) / step))
            idx.append(min(max(k, 0), n - 1))
        ix, iy, iz, ith, itv = idx
        nx, ny, nz, nth, ntv = self.counts
        return (((ix * ny + iy) * nz + iz) * nth + ith) * ntv + itv


def discretize_virtual_field(
    region: Region,
    theta_h_range: tuple[float, float],
    theta_v_range: tuple[float, float],
    resolution,
) -> VirtualField:
    """Uniformly partition B x Th x Tv into cells and return their centers.

    Per-axis cell count is ceil(extent / resolution) with a minimum of one
    cell; `resolution` may be a scalar or a 5-tuple (x, y, z, yaw, pitch).
    """
    res = np.broadcast_to(np.asarray(resolution, dtype=float), (5,))
    los = list(region.mins) + [theta_h_range[0], theta_v_range[0]]
    his = list(region.maxs) + [theta_h_range[1], theta_v_range[1]]
    counts = []
    axes = []
    for lo, hi, r in zip(los, his, res):
        if hi <= lo:
            raise ValueError(f"empty axis range [{lo}, {hi}]")
        n, step = _axis_cells(lo, hi, float(r))
        counts.append(n)
        axes.append(lo + (np.arange(n) + 0.5) * step)
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.reshape(-1) for g in grids], axis=1)
    return VirtualField(
        region=region,
        theta_h_range=(float(theta_h_range[0]), float(theta_h_range[1])),
        theta_v_range=(float(theta_v_range[0]), float(theta_v_range[1])),
        resolution=tuple(float(r) for r in res),
        counts=tuple(counts),
        centers=centers,
    )
