"""Synthetic scenes and the desk-scale refinement experiment.

Scenes place knowledge-base-consistent objects in a fixed room; a controlled
noise model corrupts them into proposals (jitter, class flips biased toward
scene-implausible classes, false positives, misses). The experiment runs the
detection pipeline with and without collaborative refinement and reports the
mAP delta per trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from .baol import Proposal, select_proposals
from .evaluator import GroundTruthObject, evaluate
from .geometry import Box3D, iou_3d
from .glci import (
    Detection,
    KnowledgeBase,
    MockLLMClient,
    Transcript,
    class_prototype,
    local_qa,
    run_session,
    scene_prototype,
)
from .seeding import scoped_rng

ROOM_EXTENT = (8.0, 8.0, 3.0)  # indoor-scale room, meters
PLACEMENT_RETRIES = 80


class PlacementError(RuntimeError):
    """Could not place the requested objects without overlap."""


def default_knowledge_base() -> KnowledgeBase:
    """Indoor scene/class table used by fixtures and the benchmark."""
    scene_types = ("conference room", "library", "bathroom", "bedroom")
    classes = (
        "sofa", "chair", "bed", "table", "cabinet",
        "bookshelf", "toilet", "desk", "sink", "lamp",
    )
    plausible = {
        "conference room": {
            "sofa": True, "chair": True, "bed": False, "table": True, "cabinet": True,
            "bookshelf": True, "toilet": False, "desk": True, "sink": False, "lamp": True,
        },
        "library": {
            "sofa": True, "chair": True, "bed": False, "table": True, "cabinet": False,
            "bookshelf": True, "toilet": False, "desk": True, "sink": False, "lamp": True,
        },
        "bathroom": {
            "sofa": False, "chair": False, "bed": False, "table": False, "cabinet": True,
            "bookshelf": False, "toilet": True, "desk": False, "sink": True, "lamp": False,
        },
        "bedroom": {
            "sofa": True, "chair": True, "bed": True, "table": True, "cabinet": True,
            "bookshelf": True, "toilet": False, "desk": True, "sink": False, "lamp": True,
        },
    }
    class_prior = {
        "conference room": ("table", "chair", "sofa", "desk", "cabinet", "bookshelf", "lamp"),
        "library": ("bookshelf", "desk", "table", "chair", "sofa", "lamp"),
        "bathroom": ("toilet", "sink", "cabinet"),
        "bedroom": ("bed", "lamp", "cabinet", "chair", "desk", "table", "sofa", "bookshelf"),
    }
    return KnowledgeBase(scene_types, classes, plausible, class_prior)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for scene generation."""

    num_scenes: int = 4
    objects_per_scene: tuple[int, int] = (3, 6)
    kb: KnowledgeBase = field(default_factory=default_knowledge_base)
    feature_dim: int | None = None  # defaults to the prototype layout size
    feature_noise: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        dim = self.feature_dim if self.feature_dim is not None else self.kb.feature_dim
        if dim < self.kb.feature_dim:
            raise ValueError(
                f"feature_dim {dim} too small for {len(self.kb.classes)} classes "
                f"+ {len(self.kb.scene_types)} scene types"
            )
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be nonnegative")
        object.__setattr__(self, "feature_dim", dim)


@dataclass(frozen=True)
class ObjectnessCalibration:
    """Confidence bands tied to whether a proposal kept its true class."""

    correct: tuple[float, float] = (0.7, 0.95)
    corrupted: tuple[float, float] = (0.3, 0.9)


@dataclass(frozen=True)
class NoiseModel:
    box_jitter: float = 0.03
    class_confusion_rate: float = 0.30
    implausible_bias: float = 0.95
    false_positive_rate: float = 0.10
    miss_rate: float = 0.05
    objectness_calibration: ObjectnessCalibration = ObjectnessCalibration()

    def __post_init__(self) -> None:
        for name in ("class_confusion_rate", "implausible_bias", "false_positive_rate", "miss_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.box_jitter < 0:
            raise ValueError("box_jitter must be nonnegative")

    @classmethod
    def none(cls) -> "NoiseModel":
        """Identity corruption: proposals equal ground truth at confidence 1."""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, ObjectnessCalibration((1.0, 1.0), (1.0, 1.0)))


@dataclass(frozen=True)
class SynthScene:
    scene_id: str
    scene_type: str
    global_feature: tuple[float, ...]
    ground_truth: tuple[GroundTruthObject, ...]


@dataclass(frozen=True)
class TrialResult:
    seed: int
    map_initial: float
    map_refined: float
    per_class_delta: dict[str, float]
    transcript_stats: dict[str, int]

    def to_doc(self) -> dict:
        return {
            "seed": self.seed,
            "map_initial": self.map_initial,
            "map_refined": self.map_refined,
            "delta": self.map_refined - self.map_initial,
            "per_class_delta": dict(self.per_class_delta),
            "transcript_stats": dict(self.transcript_stats),
        }


def _noisy_prototype(proto: np.ndarray, noise: float, rng: np.random.Generator) -> tuple[float, ...]:
    return tuple(float(v) for v in proto + rng.normal(0.0, noise, size=proto.shape))


def generate_scene(cfg: SynthConfig, scene_index: int) -> SynthScene:
    """Sample a scene type and place plausible, non-overlapping objects.

    Object classes are drawn with geometrically decaying weight down the
    scene's class ranking, and features are prototypes plus Gaussian noise,
    so the mock backend decodes everything exactly at zero noise.
    """
    scene_id = f"scene{scene_index:05d}"
    rng = scoped_rng(cfg.seed, scene_id, "synth")
    kb = cfg.kb
    scene_type = kb.scene_types[int(rng.integers(0, len(kb.scene_types)))]
    ranking = kb.plausible_classes(scene_type)
    if not ranking:
        raise PlacementError(f"scene type {scene_type!r} has no plausible classes")
    weights = np.array([0.5**r for r in range(len(ranking))])
    weights /= weights.sum()

    count = int(rng.integers(cfg.objects_per_scene[0], cfg.objects_per_scene[1] + 1))
    placed: list[Box3D] = []
    objects: list[GroundTruthObject] = []
    half_x = ROOM_EXTENT[0] / 2.0
    half_y = ROOM_EXTENT[1] / 2.0
    for _ in range(count):
        cls = str(rng.choice(np.array(ranking, dtype=object), p=weights))
        for attempt in range(PLACEMENT_RETRIES):
            l, w = rng.uniform(0.5, 1.8, size=2)
            h = float(rng.uniform(0.5, min(1.5, ROOM_EXTENT[2])))
            x = float(rng.uniform(-half_x + l, half_x - l))
            y = float(rng.uniform(-half_y + w, half_y - w))
            theta = float(rng.uniform(-math.pi, math.pi))
            box = Box3D(x, y, h / 2.0, float(l), float(w), h, theta)
            if all(iou_3d(box, other) == 0.0 for other in placed):
                placed.append(box)
                objects.append(GroundTruthObject(box, cls))
                break
        else:
            raise PlacementError(f"no room for object {len(placed) + 1} in {scene_id}")

    global_feature = _noisy_prototype(
        scene_prototype(kb, scene_type, cfg.feature_dim), cfg.feature_noise, rng
    )
    return SynthScene(scene_id, scene_type, global_feature, tuple(objects))


def corrupt(
    scene: SynthScene,
    noise: NoiseModel,
    cfg: SynthConfig,
    seed: int,
) -> list[Proposal]:
    """Turn ground truth into noisy proposals.

    Per object the RNG consumption is branch-independent, so raising
    implausible_bias with the same seed only ever moves flips from the
    plausible-other pool to the implausible pool (monotone interventions).
    """
    rng = scoped_rng(seed, scene.scene_id, "corrupt")
    kb = cfg.kb
    implausible = [c for c in kb.classes if not kb.plausible[scene.scene_type][c]]
    others = [c for c in kb.classes]
    cal = noise.objectness_calibration
    proposals: list[Proposal] = []

    def corrupted_class(true_class: str) -> str:
        u_bias = rng.random()
        u_pick = rng.random()
        pool = implausible if (u_bias < noise.implausible_bias and implausible) else [
            c for c in others if c != true_class
        ]
        if not pool:
            return true_class
        return pool[int(u_pick * len(pool)) % len(pool)]

    for obj in scene.ground_truth:
        u_miss = rng.random()
        jitter = rng.normal(0.0, noise.box_jitter or 1e-12, size=3)
        u_flip = rng.random()
        u_obj = rng.random()
        if u_miss < noise.miss_rate:
            _ = corrupted_class(obj.class_name)  # keep the stream aligned
            continue
        box = obj.box
        if noise.box_jitter > 0:
            box = Box3D(
                box.x + jitter[0], box.y + jitter[1], box.z + jitter[2],
                box.l, box.w, box.h, box.theta,
            )
        cls = obj.class_name
        flipped = u_flip < noise.class_confusion_rate
        picked = corrupted_class(obj.class_name)  # drawn always; used when flipped
        if flipped:
            cls = picked
        lo, hi = cal.correct if cls == obj.class_name else cal.corrupted
        objectness = lo + u_obj * (hi - lo)
        feature = _noisy_prototype(
            class_prototype(kb, cls, cfg.feature_dim), cfg.feature_noise, rng
        )
        proposals.append(Proposal(box, objectness, feature))

    half_x, half_y = ROOM_EXTENT[0] / 2.0, ROOM_EXTENT[1] / 2.0
    for obj in scene.ground_truth:
        u_fp = rng.random()
        dims = rng.uniform(0.4, 1.2, size=3)
        x = float(rng.uniform(-half_x + 1, half_x - 1))
        y = float(rng.uniform(-half_y + 1, half_y - 1))
        theta = float(rng.uniform(-math.pi, math.pi))
        fp_cls = corrupted_class(obj.class_name)
        u_obj = rng.random()
        if u_fp >= noise.false_positive_rate:
            continue
        lo, hi = cal.corrupted
        feature = _noisy_prototype(
            class_prototype(kb, fp_cls, cfg.feature_dim), cfg.feature_noise, rng
        )
        proposals.append(
            Proposal(
                Box3D(x, y, dims[2] / 2.0, dims[0], dims[1], dims[2], theta),
                lo + u_obj * (hi - lo),
                feature,
            )
        )
    return proposals


def _transcript_stats(transcript: Transcript) -> dict[str, int]:
    return {
        "plausibility_checks": sum(
            1 for r in transcript.records if r.decision.startswith("verdict=")
        ),
        "removed": sum(1 for r in transcript.records if r.decision.startswith("remove ")),
        "reclassified": sum(1 for r in transcript.records if r.decision.startswith("reclass ")),
    }


def run_trial(
    cfg: SynthConfig,
    noise: NoiseModel,
    phi_obj: float = 0.1,
    phi_keep: float = 0.75,
) -> TrialResult:
    """One generate/corrupt/detect/refine/evaluate round."""
    kb = cfg.kb
    vocabulary = list(kb.classes)
    initial_dets: dict[str, list[Detection]] = {}
    refined_dets: dict[str, list[Detection]] = {}
    gts: dict[str, list[GroundTruthObject]] = {}
    stats = {"plausibility_checks": 0, "removed": 0, "reclassified": 0}

    for idx in range(cfg.num_scenes):
        scene = generate_scene(cfg, idx)
        gts[scene.scene_id] = list(scene.ground_truth)
        proposals = select_proposals(corrupt(scene, noise, cfg, cfg.seed), phi_obj)

        baseline = local_qa(MockLLMClient(kb), proposals, vocabulary)
        initial_dets[scene.scene_id] = baseline

        _, final, transcript = run_session(
            MockLLMClient(kb), proposals, scene.global_feature,
            list(kb.scene_types), vocabulary, phi_keep,
        )
        refined_dets[scene.scene_id] = [d for d in final if d.status != "removed"]
        for key, value in _transcript_stats(transcript).items():
            stats[key] += value

    class_set = list(kb.classes)
    report_initial = evaluate(initial_dets, gts, class_set)
    report_refined = evaluate(refined_dets, gts, class_set)
    classes_seen = set(report_initial.per_class_ap) | set(report_refined.per_class_ap)
    per_class_delta = {
        cls: report_refined.per_class_ap.get(cls, 0.0) - report_initial.per_class_ap.get(cls, 0.0)
        for cls in sorted(classes_seen)
    }
    return TrialResult(
        cfg.seed, report_initial.map_value, report_refined.map_value, per_class_delta, stats
    )


def run_experiment(
    cfg: SynthConfig,
    noise: NoiseModel,
    trials: int,
    phi_obj: float = 0.1,
    phi_keep: float = 0.75,
) -> tuple[list[TrialResult], dict]:
    """Repeated trials with derived seeds, plus an aggregate summary."""
    if trials < 1:
        raise ValueError("need at least one trial")
    results = []
    for t in range(trials):
        trial_cfg = SynthConfig(
            num_scenes=cfg.num_scenes,
            objects_per_scene=cfg.objects_per_scene,
            kb=cfg.kb,
            feature_dim=cfg.feature_dim,
            feature_noise=cfg.feature_noise,
            seed=int(scoped_rng(cfg.seed, f"trial{t:04d}", "experiment").integers(0, 2**31)),
        )
        results.append(run_trial(trial_cfg, noise, phi_obj, phi_keep))

    deltas = [r.map_refined - r.map_initial for r in results]
    wins = sum(1 for d in deltas if d >= 0.0)
    per_class: dict[str, list[float]] = {}
    for r in results:
        for cls, d in r.per_class_delta.items():
            per_class.setdefault(cls, []).append(d)
    summary = {
        "schema_version": 1,
        "trials": trials,
        "mean_map_initial": float(np.mean([r.map_initial for r in results])),
        "mean_map_refined": float(np.mean([r.map_refined for r in results])),
        "mean_delta": float(np.mean(deltas)),
        "win_rate": wins / trials,
        "per_class_mean_delta": {c: float(np.mean(v)) for c, v in sorted(per_class.items())},
        "total_removed": sum(r.transcript_stats["removed"] for r in results),
        "total_reclassified": sum(r.transcript_stats["reclassified"] for r in results),
    }
    return results, summary
