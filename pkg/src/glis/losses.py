"""Training objectives, implemented numerically for verification.

The box regression term is an opaque hook value supplied by the caller; the
confidence, classification, and scene terms are computed here exactly, with
an analytic gradient for the confidence loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

PROBABILITY_EPS = 1e-7


class LossDomainError(ValueError):
    """A probability argument sits outside the loss's open domain."""


@dataclass(frozen=True)
class TokenDistribution:
    """Predicted probabilities for each token of a label text."""

    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probabilities)
        if not probs:
            raise LossDomainError("token distribution must be nonempty")
        for p in probs:
            if not 0.0 < p <= 1.0:
                raise LossDomainError(f"token probability {p} outside (0, 1]")
        object.__setattr__(self, "probabilities", probs)


@dataclass(frozen=True)
class LossWeights:
    """Balance factors for the four loss terms plus the negative-confidence factor."""

    lambda_conf: float = 0.2
    lambda1: float = 4.0
    lambda2: float = 10.0
    lambda3: float = 1.0
    lambda4: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda_conf", "lambda1", "lambda2", "lambda3", "lambda4"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0.0:
                raise LossDomainError(f"{name} must be finite and nonnegative, got {v}")
            object.__setattr__(self, name, v)


def clamp_probability(p: float, eps: float = PROBABILITY_EPS) -> float:
    """Pull a probability into the open interval (eps, 1 - eps).

    The loss functions themselves stay exact and reject boundary values;
    callers that cannot guarantee open-interval inputs clamp first.
    """
    return min(max(p, eps), 1.0 - eps)


def conf_loss(
    y: Sequence[int],
    o_hat: Sequence[float],
    lambda_conf: float = 0.2,
) -> tuple[float, list[float]]:
    """Weighted binary cross-entropy over proposal confidences.

    Returns the loss value and its analytic gradient with respect to each
    confidence. Confidences must lie strictly inside (0, 1).
    """
    if len(y) != len(o_hat) or not y:
        raise LossDomainError(f"need equal nonempty lists, got {len(y)} labels, {len(o_hat)} scores")
    n = len(y)
    total = 0.0
    grad = []
    for yi, oi in zip(y, o_hat):
        if yi not in (0, 1):
            raise LossDomainError(f"labels must be binary, got {yi}")
        oi = float(oi)
        if not 0.0 < oi < 1.0:
            raise LossDomainError(f"confidence {oi} outside (0, 1); clamp first")
        total += yi * math.log(oi) + lambda_conf * (1 - yi) * math.log(1.0 - oi)
        grad.append(-(yi / oi - lambda_conf * (1 - yi) / (1.0 - oi)) / n)
    return -total / n, grad


def text_loss(dist: TokenDistribution) -> float:
    """Negative log-likelihood of a token sequence."""
    return -math.fsum(math.log(p) for p in dist.probabilities)


def cls_loss(dists: Sequence[TokenDistribution]) -> float:
    """Mean text loss over the pseudo labels' class-name tokens."""
    if not dists:
        raise LossDomainError("need at least one token distribution")
    return math.fsum(text_loss(d) for d in dists) / len(dists)


def scene_loss(type_dist: TokenDistribution, desc_dist: TokenDistribution) -> float:
    """Text loss of the scene-type tokens plus the description tokens."""
    return text_loss(type_dist) + text_loss(desc_dist)


def total_loss(
    l_bbox: float,
    l_conf: float,
    l_cls: float,
    l_scene: float,
    w: LossWeights = LossWeights(),
) -> float:
    """Weighted sum of the four components; the box term is the caller's hook."""
    for name, v in (("l_bbox", l_bbox), ("l_conf", l_conf), ("l_cls", l_cls), ("l_scene", l_scene)):
        if not math.isfinite(v):
            raise LossDomainError(f"{name} must be finite, got {v}")
    return w.lambda1 * l_bbox + w.lambda2 * l_conf + w.lambda3 * l_cls + w.lambda4 * l_scene
