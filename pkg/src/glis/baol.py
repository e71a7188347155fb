"""Background-aware proposal supervision and selection.

Proposals get binary foreground labels from a maximum-weight IoU matching
against pseudo labels, refined by a low-IoU demotion and a near-duplicate
promotion; at inference time low-confidence proposals are filtered out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Box3D, iou_3d


@dataclass(frozen=True)
class Proposal:
    """Class-agnostic box with foreground confidence and an opaque feature."""

    box: Box3D
    objectness: float
    feature: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        obj = float(self.objectness)
        if not 0.0 <= obj <= 1.0:
            raise ValueError(f"objectness must be in [0, 1], got {obj}")
        object.__setattr__(self, "objectness", obj)
        object.__setattr__(self, "feature", tuple(float(v) for v in self.feature))


@dataclass(frozen=True)
class MatchResult:
    """One-to-one proposal/label pairing; every pair has positive IoU."""

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_proposals: tuple[int, ...]


@dataclass(frozen=True)
class AssignmentLabels:
    y: tuple[int, ...]


def iou_matrix(proposals: Sequence[Box3D], labels: Sequence[Box3D]) -> np.ndarray:
    mat = np.zeros((len(proposals), len(labels)))
    for i, p in enumerate(proposals):
        for j, q in enumerate(labels):
            mat[i, j] = iou_3d(p, q)
    return mat


def match_proposals(proposals: Sequence[Box3D], labels: Sequence[Box3D]) -> MatchResult:
    """Maximum-total-IoU bipartite matching; zero-IoU pairings are dropped.

    Assignment on the dense IoU matrix maximizes the summed IoU; discarding
    zero-weight pairs afterwards leaves the optimum unchanged because those
    pairs contribute nothing.
    """
    if not proposals or not labels:
        return MatchResult((), tuple(range(len(proposals))))
    mat = iou_matrix(proposals, labels)
    rows, cols = linear_sum_assignment(mat, maximize=True)
    pairs = tuple(
        (int(i), int(j), float(mat[i, j]))
        for i, j in sorted(zip(rows, cols))
        if mat[i, j] > 0.0
    )
    matched = {i for i, _, _ in pairs}
    unmatched = tuple(i for i in range(len(proposals)) if i not in matched)
    return MatchResult(pairs, unmatched)


def assign_labels(
    match: MatchResult,
    proposals: Sequence[Box3D],
    phi_low: float = 0.25,
    phi_high: float = 0.6,
) -> AssignmentLabels:
    """Binary supervision per proposal: matched means positive, then refine.

    Refinement order is fixed: first demote matched proposals whose pair IoU
    is below phi_low, then promote unmatched proposals whose IoU with an
    already-positive proposal exceeds phi_high. Promotion is a single pass
    over a snapshot of the positives, never transitive.
    """
    n = len(proposals)
    indices = [i for i, _, _ in match.pairs]
    if any(i >= n for i in indices) or any(j >= n for j in match.unmatched_proposals):
        raise ValueError("match result refers to proposals beyond the given list")
    if len(set(indices)) != len(indices):
        raise ValueError("match result pairs a proposal twice")

    y = [0] * n
    for i, _, _ in match.pairs:
        y[i] = 1
    for i, _, pair_iou in match.pairs:
        if pair_iou < phi_low:
            y[i] = 0

    positives = [i for i in range(n) if y[i] == 1]
    for j in match.unmatched_proposals:
        for i in positives:
            if iou_3d(proposals[j], proposals[i]) > phi_high:
                y[j] = 1
                break
    return AssignmentLabels(tuple(y))


def select_proposals(proposals: Sequence[Proposal], phi_obj: float = 0.1) -> list[Proposal]:
    """Keep proposals whose confidence clears the threshold, order preserved."""
    return [p for p in proposals if p.objectness >= phi_obj]
