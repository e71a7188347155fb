"""Reflection-filtered pseudo-label generation.

2D detections are re-scored against a positive and a negative text template;
only confidently-positive labels survive and get lifted to 3D boxes that can
supervise training. The image-text scorer itself stays behind an interface:
either precomputed scores from a file or a remote HTTP scorer.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from typing import Protocol

from .geometry import (
    Box2D,
    Box3D,
    EmptyFrustumError,
    InsufficientSupportError,
    PointCloud,
    ProjectionMatrix,
    lift_box_2d_to_3d,
)

POSITIVE_TEMPLATE = "This is a {}."
NEGATIVE_TEMPLATE = "This is not a {}."


class MissingScoreError(KeyError):
    """No score record exists for a (patch_id, class_name) pair."""


@dataclass(frozen=True)
class Label2D:
    """A 2D detection: image-plane box, class name, and its patch identifier."""

    box: Box2D
    class_name: str
    patch_id: str

    def __post_init__(self) -> None:
        if not self.class_name.strip():
            raise ValueError("class_name must be nonempty")


@dataclass(frozen=True)
class ReflectionScore:
    """Raw scorer outputs plus their two-way softmax probabilities."""

    pos_raw: float
    neg_raw: float
    phi_pos: float
    phi_neg: float


@dataclass(frozen=True)
class PseudoLabel3D:
    """A reflection-verified, lifted 3D training label."""

    box: Box3D
    class_name: str
    phi_pos: float


@dataclass(frozen=True)
class DropRecord:
    patch_id: str
    reason: str


def render_templates(class_name: str) -> tuple[str, str]:
    """Positive and negative scoring prompts for a class."""
    if not class_name.strip():
        raise ValueError("class_name must be nonempty")
    return POSITIVE_TEMPLATE.format(class_name), NEGATIVE_TEMPLATE.format(class_name)


def reflection_score(pos_raw: float, neg_raw: float) -> ReflectionScore:
    """Two-way softmax over the raw positive/negative scorer outputs."""
    if not (math.isfinite(pos_raw) and math.isfinite(neg_raw)):
        raise ValueError(f"scores must be finite, got ({pos_raw}, {neg_raw})")
    m = max(pos_raw, neg_raw)
    ep = math.exp(pos_raw - m)
    en = math.exp(neg_raw - m)
    total = ep + en
    return ReflectionScore(pos_raw, neg_raw, ep / total, en / total)


def filter_labels(
    labels: list[Label2D],
    scores: list[ReflectionScore],
    phi_clip: float = 0.5,
) -> list[tuple[Label2D, float]]:
    """Labels whose phi_pos clears the threshold, order preserved.

    The boundary is inclusive (phi_pos == phi_clip is kept) so the published
    threshold of 0.5 retains the equal-logit case.
    """
    if len(labels) != len(scores):
        raise ValueError(f"{len(labels)} labels vs {len(scores)} scores")
    return [(lab, sc.phi_pos) for lab, sc in zip(labels, scores) if sc.phi_pos >= phi_clip]


def generate_pseudo_labels(
    kept: list[tuple[Label2D, float]],
    cloud: PointCloud,
    m: ProjectionMatrix,
    trim: float = 0.05,
) -> tuple[list[PseudoLabel3D], list[DropRecord]]:
    """Lift each kept 2D label to a 3D pseudo label.

    Lifting failures (empty frustum, too little support) drop the label with
    a recorded reason instead of aborting the batch.
    """
    out: list[PseudoLabel3D] = []
    drops: list[DropRecord] = []
    for label, phi_pos in kept:
        try:
            box = lift_box_2d_to_3d(cloud, m, label.box, trim)
        except EmptyFrustumError:
            drops.append(DropRecord(label.patch_id, "empty-frustum"))
        except InsufficientSupportError:
            drops.append(DropRecord(label.patch_id, "insufficient-support"))
        else:
            out.append(PseudoLabel3D(box, label.class_name, phi_pos))
    return out, drops


class ScoreBackend(Protocol):
    """Source of raw positive/negative scores for (patch, class) pairs."""

    concurrent_safe: bool

    def raw_scores(self, patch_id: str, class_name: str) -> tuple[float, float]: ...


class FileScoreBackend:
    """Precomputed scores loaded from a JSON scores file."""

    concurrent_safe = True

    def __init__(self, records: list[dict]):
        self._table: dict[tuple[str, str], tuple[float, float]] = {}
        for rec in records:
            key = (rec["patch_id"], rec["class_name"])
            if key in self._table:
                raise ValueError(f"duplicate score record for {key}")
            self._table[key] = (float(rec["pos_raw"]), float(rec["neg_raw"]))

    @classmethod
    def from_file(cls, path) -> "FileScoreBackend":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(doc["scores"])

    def raw_scores(self, patch_id: str, class_name: str) -> tuple[float, float]:
        try:
            return self._table[(patch_id, class_name)]
        except KeyError:
            raise MissingScoreError(f"no score for patch={patch_id!r} class={class_name!r}")


class HttpScoreBackend:
    """Remote scorer: POSTs the rendered templates, receives raw scores."""

    concurrent_safe = True

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries

    def raw_scores(self, patch_id: str, class_name: str) -> tuple[float, float]:
        from .transport import post_json

        positive, negative = render_templates(class_name)
        payload = {
            "patch_id": patch_id,
            "class_name": class_name,
            "positive_prompt": positive,
            "negative_prompt": negative,
        }
        reply = post_json(self.endpoint, payload, self.timeout, self.retries)
        return float(reply["pos_raw"]), float(reply["neg_raw"])


def score_labels(labels: list[Label2D], backend: ScoreBackend) -> list[ReflectionScore]:
    """Score every label through the backend, serializing if it requires it."""
    lock = threading.Lock() if not getattr(backend, "concurrent_safe", False) else None

    def one(label: Label2D) -> ReflectionScore:
        if lock is None:
            pos, neg = backend.raw_scores(label.patch_id, label.class_name)
        else:
            with lock:
                pos, neg = backend.raw_scores(label.patch_id, label.class_name)
        return reflection_score(pos, neg)

    return [one(lab) for lab in labels]
