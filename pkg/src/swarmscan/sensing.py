"""Sensing quality of one drone observing one point, and its gradient.

The score multiplies three Gaussian factors: optical-axis alignment with the
line of sight, how squarely the point faces the camera, and deviation from the
ideal standoff distance.  Everything is expressed through cosines (dot
products), never arccos, so the gradient stays smooth through perfect
alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    DroneState,
    ObservationPoint,
    camera_direction,
    observation_direction,
)

# Below this drone-to-point distance the viewing geometry is meaningless.
EPS_DISTANCE = 1e-6


class DegenerateGeometryError(ValueError):
    """Raised when drone and observation point positions (nearly) coincide."""


@dataclass(frozen=True)
class SensingParams:
    """Ideal observation distance and the three Gaussian tolerances.

    sigma_align penalizes optical-axis misalignment, sigma_facing penalizes
    observing a point away from its preferred viewing direction, sigma_range
    penalizes standoff-distance error (meters).
    """

    ideal_distance: float = 1.0
    sigma_align: float = 0.07
    sigma_facing: float = 0.095
    sigma_range: float = 0.3

    def __post_init__(self):
        if self.ideal_distance <= 0.0:
            raise ValueError("ideal_distance must be positive")
        for name in ("sigma_align", "sigma_facing", "sigma_range"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def sigma_facing_from_spacing(delta_theta: float) -> float:
    """Facing tolerance that puts the half-score point midway between two
    observation points separated by delta_theta radians."""
    if delta_theta <= 0.0:
        raise ValueError("angular spacing must be positive")
    c = 1.0 - math.cos(delta_theta / 2.0)
    return math.sqrt(c * c / (2.0 * math.log(2.0)))


def sensing_geometry(
    p: DroneState, q: ObservationPoint, params: SensingParams
) -> tuple[float, float, float]:
    """Return (alignment angle, facing angle, range error) for the pair.

    Angles are in [0, pi]; the range error keeps its sign (negative = too
    close).  Raises DegenerateGeometryError when the positions coincide.
    """
    sight = q.position - p.position
    dist = float(np.linalg.norm(sight))
    if dist < EPS_DISTANCE:
        raise DegenerateGeometryError(
            f"drone and observation point closer than {EPS_DISTANCE} m"
        )
    e = sight / dist
    cos1 = float(np.dot(camera_direction(p.theta_h, p.theta_v), e))
    cos2 = float(-np.dot(observation_direction(q.theta_h, q.theta_v), e))
    phi1 = math.acos(min(1.0, max(-1.0, cos1)))
    phi2 = math.acos(min(1.0, max(-1.0, cos2)))
    return phi1, phi2, dist - params.ideal_distance


def sensing_performance(p: DroneState, q: ObservationPoint, params: SensingParams) -> float:
    """Score in [0, 1]; equals 1 only at perfect alignment, facing, and range.

    Coincident positions score 0 (a physically meaningless configuration
    should never win any maximization).
    """
    values = score_batch(
        p.as_array(),
        q.position[np.newaxis, :],
        observation_direction(q.theta_h, q.theta_v)[np.newaxis, :],
        params,
    )
    return float(values[0])


def sensing_gradient(
    p: DroneState, q: ObservationPoint, params: SensingParams
) -> tuple[np.ndarray, bool]:
    """Gradient of the score w.r.t. the drone's five pose coordinates.

    Returns (gradient, degenerate): on coincident positions the gradient is
    the zero vector and the degenerate flag is set.
    """
    _, grads = score_grad_batch(
        p.as_array(),
        q.position[np.newaxis, :],
        observation_direction(q.theta_h, q.theta_v)[np.newaxis, :],
        params,
    )
    grad = grads[0]
    sight = q.position - p.position
    degenerate = float(np.linalg.norm(sight)) < EPS_DISTANCE
    return grad, degenerate


def _geometry_terms(state: np.ndarray, q_pos: np.ndarray):
    """Shared geometry pieces for the batched score/gradient paths."""
    p_pos = state[:3]
    th, tv = state[3], state[4]
    cam = camera_direction(th, tv)
    diff = q_pos - p_pos  # (k, 3)
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    ok = dist >= EPS_DISTANCE
    safe = np.where(ok, dist, 1.0)
    e = diff / safe[:, None]
    return p_pos, th, tv, cam, dist, safe, e, ok


def score_batch(
    state: np.ndarray, q_pos: np.ndarray, q_dir: np.ndarray, params: SensingParams
) -> np.ndarray:
    """Vectorized score of one drone state against k observation points.

    state is the 5-vector pose; q_pos is (k, 3); q_dir is (k, 3) outward
    viewing directions.  Degenerate pairs score 0.
    """
    _, _, _, cam, _, safe, e, ok = _geometry_terms(np.asarray(state, float), q_pos)
    g1 = 1.0 - e @ cam
    g2 = 1.0 + np.einsum("ij,ij->i", q_dir, e)
    rho = safe - params.ideal_distance
    expo = (
        g1 * g1 / (2.0 * params.sigma_align**2)
        + g2 * g2 / (2.0 * params.sigma_facing**2)
        + rho * rho / (2.0 * params.sigma_range**2)
    )
    return np.where(ok, np.exp(-expo), 0.0)


def score_grad_batch(
    state: np.ndarray, q_pos: np.ndarray, q_dir: np.ndarray, params: SensingParams
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and their analytic pose gradients, shapes (k,) and (k, 5).

    Degenerate pairs contribute zero score and zero gradient.
    """
    state = np.asarray(state, dtype=float)
    _, th, tv, cam, _, safe, e, ok = _geometry_terms(state, q_pos)
    k = q_pos.shape[0]

    a1 = e @ cam  # cos(alignment)
    a2 = np.einsum("ij,ij->i", q_dir, e)  # -cos(facing)
    g1 = 1.0 - a1
    g2 = 1.0 + a2
    rho = safe - params.ideal_distance

    s1 = params.sigma_align**2
    s2 = params.sigma_facing**2
    s3 = params.sigma_range**2
    h = np.where(ok, np.exp(-(g1 * g1 / (2 * s1) + g2 * g2 / (2 * s2) + rho * rho / (2 * s3))), 0.0)

    # Positional partials of the three deviation terms (w.r.t. drone position).
    dg1_dx = (cam[None, :] - a1[:, None] * e) / safe[:, None]
    dg2_dx = -(q_dir - a2[:, None] * e) / safe[:, None]
    drho_dx = -e

    # Camera-axis partials give the yaw/pitch slots (only the alignment term
    # depends on the camera orientation).
    ch, sh = math.cos(th), math.sin(th)
    cv, sv = math.cos(tv), math.sin(tv)
    dcam_dth = np.array([-sh * cv, ch * cv, 0.0])
    dcam_dtv = np.array([-ch * sv, -sh * sv, -cv])
    dg1_dth = -(e @ dcam_dth)
    dg1_dtv = -(e @ dcam_dtv)

    coef1 = -(g1 / s1) * h
    coef2 = -(g2 / s2) * h
    coef3 = -(rho / s3) * h

    grad = np.zeros((k, 5))
    grad[:, :3] = (
        coef1[:, None] * dg1_dx + coef2[:, None] * dg2_dx + coef3[:, None] * drho_dx
    )
    grad[:, 3] = coef1 * dg1_dth
    grad[:, 4] = coef1 * dg1_dtv
    grad[~ok] = 0.0
    return h, grad


def score_matrix(states: np.ndarray, q_pos: np.ndarray, q_dir: np.ndarray, params: SensingParams) -> np.ndarray:
    """Score matrix for n drone states against k points, shape (n, k)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    out = np.empty((states.shape[0], q_pos.shape[0]))
    for i, s in enumerate(states):
        out[i] = score_batch(s, q_pos, q_dir, params)
    return out
