"""Detection-quality measurement: per-class average precision and their mean.

A detection counts as correct when its rotated-box IoU with an unmatched
same-class ground-truth box clears the threshold (0.25 by convention here).
AP uses all-point interpolation: the area under the precision envelope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geometry import Box3D, iou_3d
from .glci import Detection


class EvalError(ValueError):
    """The evaluation request is unanswerable (e.g. no ground truth at all)."""


@dataclass(frozen=True)
class GroundTruthObject:
    box: Box3D
    class_name: str

    def __post_init__(self) -> None:
        if not self.class_name.strip():
            raise ValueError("class_name must be nonempty")


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP, their mean, and raw TP/FP/GT counts."""

    per_class_ap: dict[str, float]
    map_value: float
    counts: dict[str, dict[str, int]]
    iou_threshold: float

    def to_doc(self) -> dict:
        return {
            "schema_version": 1,
            "iou_threshold": self.iou_threshold,
            "per_class_ap": dict(self.per_class_ap),
            "map": self.map_value,
            "counts": {c: dict(v) for c, v in self.counts.items()},
        }


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthObject],
    iou_thresh: float,
) -> list[bool]:
    """Greedy TP/FP assignment for one class within one scene.

    Detections are visited in descending confidence (stable on ties); each
    takes the highest-IoU still-unmatched ground truth if that IoU clears the
    threshold (lowest GT index on IoU ties). Flags align with input order.
    """
    classes = {d.class_name for d in dets}
    if len(classes) > 1:
        raise EvalError(f"match_detections expects a single class, got {sorted(classes)}")
    flags = [False] * len(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].objectness, i))
    gt_taken = [False] * len(gts)
    for i in order:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gts):
            if gt_taken[j]:
                continue
            value = iou_3d(dets[i].box, gt.box)
            if value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0 and best_iou >= iou_thresh:
            flags[i] = True
            gt_taken[best_j] = True
    return flags


def average_precision(
    records: Sequence[tuple[float, bool]],
    num_gt: int,
) -> float | None:
    """All-point interpolated AP from (confidence, is_tp) records.

    Returns None when the class has neither ground truth nor detections
    (undefined; the class is excluded from the mean), and 0.0 when
    detections exist for a class with no ground truth.
    """
    if num_gt < 0:
        raise EvalError(f"num_gt must be nonnegative, got {num_gt}")
    if num_gt == 0:
        return 0.0 if records else None
    if not records:
        return 0.0
    order = sorted(range(len(records)), key=lambda i: (-records[i][0], i))
    tp = np.cumsum([1 if records[i][1] else 0 for i in order])
    fp = np.cumsum([0 if records[i][1] else 1 for i in order])
    recall = tp / num_gt
    precision = tp / (tp + fp)

    # precision envelope over recall, then the area under it
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def evaluate(
    dets_per_scene: Mapping[str, Sequence[Detection]],
    gts_per_scene: Mapping[str, Sequence[GroundTruthObject]],
    class_set: Sequence[str],
    iou_thresh: float = 0.25,
) -> EvalReport:
    """Pool detections across scenes per class, compute AP, average into mAP.

    Matching stays per-scene; the PR curve per class pools all scenes.
    Classes with neither ground truth nor detections are excluded from the
    mean. Raises EvalError when no class in class_set has any ground truth.
    """
    if not class_set:
        raise EvalError("class_set must be nonempty")
    scene_ids = sorted(set(dets_per_scene) | set(gts_per_scene))
    per_class_ap: dict[str, float] = {}
    counts: dict[str, dict[str, int]] = {}
    total_gt = 0
    for cls in class_set:
        records: list[tuple[float, bool]] = []
        num_gt = 0
        for sid in scene_ids:
            dets = [d for d in dets_per_scene.get(sid, []) if d.class_name == cls]
            gts = [g for g in gts_per_scene.get(sid, []) if g.class_name == cls]
            num_gt += len(gts)
            flags = match_detections(dets, gts, iou_thresh)
            records.extend((d.objectness, f) for d, f in zip(dets, flags))
        total_gt += num_gt
        ap = average_precision(records, num_gt)
        if ap is None:
            continue
        per_class_ap[cls] = ap
        tp = sum(1 for _, f in records if f)
        counts[cls] = {"tp": tp, "fp": len(records) - tp, "gt": num_gt}
    if total_gt == 0:
        raise EvalError("no ground truth for any class in class_set")
    map_value = float(np.mean(list(per_class_ap.values()))) if per_class_ap else 0.0
    return EvalReport(per_class_ap, map_value, counts, iou_thresh)
