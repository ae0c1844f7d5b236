"""Assignment of field cells to drones by best sensing score.

Each cell belongs to the drone currently achieving the highest score on it
(ties go to the lowest drone index), and each drone's contribution to the
objective decay is the importance-weighted sum of its scores over the cells it
owns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import VirtualField
from .sensing import SensingParams, score_matrix


@dataclass(frozen=True)
class PartitionAssignment:
    """Cell ownership: owner[j] is the drone index holding cell j."""

    owner: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.owner.setflags(write=False)
        self.counts.setflags(write=False)

    @property
    def n_drones(self) -> int:
        return self.counts.shape[0]

    def cells_of(self, i: int) -> np.ndarray:
        return np.nonzero(self.owner == i)[0]


def score_matrix_for(drones, field: VirtualField, params: SensingParams) -> np.ndarray:
    """Sensing-score matrix (n_drones, m) over the whole field."""
    states = np.stack([d.as_array() for d in drones])
    return score_matrix(states, field.positions, field.directions, params)


def assign_from_matrix(h1: np.ndarray) -> PartitionAssignment:
    """Assign each cell to the row (drone) with the maximum score.

    np.argmax returns the first maximizer, which realizes the lowest-index
    tie-break.
    """
    if h1.ndim != 2 or h1.shape[0] < 1:
        raise ValueError("need a (n_drones, m) score matrix with n_drones >= 1")
    owner = h1.argmax(axis=0)
    counts = np.bincount(owner, minlength=h1.shape[0])
    return PartitionAssignment(owner=owner, counts=counts)


def assign_partition(drones, field: VirtualField, params: SensingParams) -> PartitionAssignment:
    """Partition the field among the drones by maximum sensing score."""
    if len(drones) < 1:
        raise ValueError("need at least one drone")
    return assign_from_matrix(score_matrix_for(drones, field, params))


def drone_contribution(
    i: int,
    assignment: PartitionAssignment,
    phi: np.ndarray,
    h1_row: np.ndarray,
    delta1: float,
) -> float:
    """Importance-decay contribution of drone i over its owned cells.

    h1_row holds drone i's scores on all m cells; phi the current importance
    weights.
    """
    if not 0 <= i < assignment.n_drones:
        raise IndexError(f"drone index {i} out of range")
    mask = assignment.owner == i
    return float(delta1 * np.sum(h1_row[mask] * phi[mask]))
