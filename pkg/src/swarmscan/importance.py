"""Per-cell importance weights: exponential decay, feedback jumps, and the
mission objective (mean importance).

Decay integrates the continuous rate exactly over a step with the sensing
score frozen, so weights stay positive regardless of step size.  Jumps add the
reconstruction-change signal scaled by the feedback gain, which switches on
only once the objective drops below its activation threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ImportanceField:
    """Importance weights (one per field cell) plus their update parameters.

    delta1 scales the observation-driven decay rate; delta2_active is the
    jump gain used while feedback is switched on; j_threshold is the
    objective level (fraction of the initial objective, which is 1 for the
    standard all-ones start) below which feedback activates.
    """

    phi: np.ndarray
    delta1: float
    delta2_active: float = 1.0
    j_threshold: float = 0.5

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 1:
            raise ValueError("phi must be one-dimensional")
        if np.any(phi < 0.0):
            raise ValueError("importance weights must be nonnegative")
        if self.delta1 <= 0.0:
            raise ValueError("delta1 must be positive")
        if self.delta2_active < 0.0:
            raise ValueError("delta2_active must be nonnegative")
        if not (0.0 < self.j_threshold <= 1.0):
            raise ValueError("j_threshold must lie in (0, 1]")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @staticmethod
    def uniform(m: int, delta1: float, delta2_active: float = 1.0, j_threshold: float = 0.5) -> "ImportanceField":
        return ImportanceField(np.ones(m), delta1, delta2_active, j_threshold)


def decay_step(field: ImportanceField, per_cell_max_h1: np.ndarray, dt: float) -> ImportanceField:
    """One decay step: phi <- phi * exp(-delta1 * h * dt), elementwise.

    Exact integration of the decay ODE with h frozen over the step.
    """
    h = np.asarray(per_cell_max_h1, dtype=float)
    if h.shape != field.phi.shape:
        raise ValueError(f"score array has shape {h.shape}, expected {field.phi.shape}")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    phi = field.phi * np.exp(-field.delta1 * h * dt)
    return replace(field, phi=phi)


def global_objective(field: ImportanceField) -> float:
    """Mean importance over all cells; the mission is done when this hits ~0."""
    if field.m == 0:
        raise ValueError("cannot average an empty importance field")
    return float(field.phi.mean())


def feedback_jump(field: ImportanceField, h2_values: np.ndarray, delta2: float) -> ImportanceField:
    """Apply a reconstruction-change jump: phi <- phi + delta2 * h2."""
    h2 = np.asarray(h2_values, dtype=float)
    if h2.shape != field.phi.shape:
        raise ValueError(f"h2 array has shape {h2.shape}, expected {field.phi.shape}")
    if np.any(h2 < 0.0):
        raise ValueError("mesh-change feedback values must be nonnegative")
    if delta2 == 0.0:
        return field
    return replace(field, phi=field.phi + delta2 * h2)


def feedback_gain(J: float, field: ImportanceField) -> float:
    """Feedback gain switch: 0 while J >= threshold, else the active gain."""
    if J >= field.j_threshold:
        return 0.0
    return field.delta2_active
