"""Reconstruction quality: closest-point distance, precision/recall, F-score.

Distances are vertex-to-vertex (both meshes are treated as point sets of
comparable density).  Threshold queries run on a uniform spatial hash grid
with cell size equal to the distance threshold, so any point strictly within
the threshold lies in one of the 27 neighboring cells; counts therefore match
exhaustive search exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh


@dataclass(frozen=True)
class MetricsReport:
    """Precision/recall/F-score of a reconstruction against ground truth."""

    precision: float
    recall: float
    f_score: float
    eta: float
    recon_vertices: int
    truth_vertices: int
    sim_time: float = 0.0


def closest_point_distance(x, mesh: TriangleMesh) -> float:
    """Distance from a point to the nearest mesh vertex."""
    if mesh.n_vertices == 0:
        raise ValueError("mesh has no vertices")
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.min(np.sum((mesh.vertices - x) ** 2, axis=1))))


def _count_within(queries: np.ndarray, refs: np.ndarray, eta: float) -> int:
    """Number of query points strictly within eta of some reference point.

    Hash-grid accelerated; exact (cell size = eta, 27-neighborhood covers
    every pair closer than eta).
    """
    if len(queries) == 0:
        return 0
    cell = eta
    ref_keys = np.floor(refs / cell).astype(np.int64)
    # Pack 3-D integer cells into single int64 keys for sorted lookup.
    lo = ref_keys.min(axis=0)
    ref_keys = ref_keys - lo
    spans = ref_keys.max(axis=0) + 3
    packed = (ref_keys[:, 0] * spans[1] + ref_keys[:, 1]) * spans[2] + ref_keys[:, 2]
    order = np.argsort(packed, kind="stable")
    packed_sorted = packed[order]

    q_keys = np.floor(queries / cell).astype(np.int64) - lo
    eta2 = eta * eta
    hit = np.zeros(len(queries), dtype=bool)
    for ox in (-1, 0, 1):
        for oy in (-1, 0, 1):
            for oz in (-1, 0, 1):
                nk = q_keys + np.array([ox, oy, oz])
                inside = np.all((nk >= 0) & (nk < spans), axis=1) & ~hit
                if not inside.any():
                    continue
                keys = (
                    nk[inside, 0] * spans[1] + nk[inside, 1]
                ) * spans[2] + nk[inside, 2]
                starts = np.searchsorted(packed_sorted, keys, side="left")
                ends = np.searchsorted(packed_sorted, keys, side="right")
                q_idx = np.nonzero(inside)[0]
                counts = ends - starts
                occupied = counts > 0
                if not occupied.any():
                    continue
                q_sel = q_idx[occupied]
                starts = starts[occupied]
                counts = counts[occupied]
                # flatten all candidate pairs, then segment-min per query
                offsets = np.concatenate([[0], np.cumsum(counts)])
                flat = np.repeat(starts - offsets[:-1], counts) + np.arange(
                    int(offsets[-1])
                )
                cand = refs[order[flat]]
                qrep = np.repeat(q_sel, counts)
                d2 = np.sum((cand - queries[qrep]) ** 2, axis=1)
                seg_min = np.minimum.reduceat(d2, offsets[:-1])
                hit[q_sel[seg_min < eta2]] = True
    return int(hit.sum())


def count_within_brute(queries: np.ndarray, refs: np.ndarray, eta: float) -> int:
    """Exhaustive version of the threshold count, for cross-checking."""
    if len(queries) == 0:
        return 0
    count = 0
    eta2 = eta * eta
    for q in queries:
        if np.min(np.sum((refs - q) ** 2, axis=1)) < eta2:
            count += 1
    return count


def precision_recall(
    recon: TriangleMesh, truth: TriangleMesh, eta: float
) -> tuple[float, float]:
    """Fractions of recon vertices near truth and truth vertices near recon.

    "Near" means strictly within eta.  Both meshes must be nonempty.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if recon.n_vertices == 0 or truth.n_vertices == 0:
        raise ValueError("cannot score empty meshes")
    precision = _count_within(recon.vertices, truth.vertices, eta) / recon.n_vertices
    recall = _count_within(truth.vertices, recon.vertices, eta) / truth.n_vertices
    return precision, recall


def f_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; zero when both vanish."""
    for name, v in (("precision", precision), ("recall", recall)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate(
    recon: TriangleMesh, truth: TriangleMesh, eta: float, sim_time: float = 0.0
) -> MetricsReport:
    """Full report; an empty reconstruction scores zero across the board."""
    if recon.n_vertices == 0:
        return MetricsReport(0.0, 0.0, 0.0, eta, 0, truth.n_vertices, sim_time)
    p, r = precision_recall(recon, truth, eta)
    return MetricsReport(
        precision=p,
        recall=r,
        f_score=f_score(p, r),
        eta=eta,
        recon_vertices=recon.n_vertices,
        truth_vertices=truth.n_vertices,
        sim_time=sim_time,
    )
