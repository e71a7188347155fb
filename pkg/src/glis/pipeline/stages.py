"""Stage runners chaining the pipeline end to end over artifact files.

Each stage reads schema-validated inputs, writes its outputs atomically,
and reports a machine-readable summary. Failures map to distinct exit
codes: 2 schema, 3 transport, 4 missing input.
"""

from __future__ import annotations

import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import losses as losses_mod
from ..baol import select_proposals
from ..evaluator import EvalError, evaluate
from ..geometry import Box2D
from ..glci import (
    HttpLLMClient,
    KnowledgeBase,
    MockLLMClient,
    SessionError,
    run_session,
)
from ..rplg import (
    FileScoreBackend,
    HttpScoreBackend,
    Label2D,
    MissingScoreError,
    filter_labels,
    generate_pseudo_labels,
    reflection_score,
)
from ..seeding import scoped_rng
from ..synthbench import (
    NoiseModel,
    ObjectnessCalibration,
    SynthConfig,
    corrupt,
    default_knowledge_base,
    generate_scene,
    run_experiment,
)
from ..transport import TransportError
from .config import Config
from .io import (
    assignment_doc,
    detections_doc,
    ground_truth_records,
    parse_detections,
    parse_ground_truth,
    parse_point_cloud,
    parse_projection,
    parse_proposals,
    points_doc,
    proposals_doc,
    pseudo_labels_doc,
    write_json_atomic,
    write_text_atomic,
)
from .schemas import SCHEMA_VERSION, SchemaViolationError, ensure_valid

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SCHEMA = 2
EXIT_TRANSPORT = 3
EXIT_MISSING_INPUT = 4

STAGE_NAMES = ("rplg", "baol-label", "infer", "eval", "synth", "experiment", "losses-check")


class MissingInputError(FileNotFoundError):
    pass


@dataclass
class StageResult:
    exit_code: int
    summary: dict
    artifacts: list[str] = field(default_factory=list)


def _require_path(value: str | None, name: str) -> Path:
    if not value:
        raise MissingInputError(f"config paths.{name} is required for this stage")
    path = Path(value)
    if not path.exists():
        raise MissingInputError(f"paths.{name}: {path} does not exist")
    return path


def _load_scenes(config: Config, scene_filter: str | None):
    scenes_path = _require_path(config.paths.scenes, "scenes")
    doc = ensure_valid(scenes_path, "scenes")
    base = scenes_path.parent
    scenes = doc["scenes"]
    if scene_filter is not None:
        scenes = [s for s in scenes if s["scene_id"] == scene_filter]
        if not scenes:
            raise MissingInputError(f"scene {scene_filter!r} not found in {scenes_path}")
    return scenes, base


def _load_kb(config: Config) -> KnowledgeBase:
    kb_path = _require_path(config.paths.kb, "kb")
    ensure_valid(kb_path, "kb")
    return KnowledgeBase.from_file(kb_path)


def _scorer_backend(config: Config):
    backend_cfg = config.scorer_backend
    if backend_cfg.kind == "file":
        scores_path = _require_path(config.paths.scores, "scores")
        ensure_valid(scores_path, "scores")
        return FileScoreBackend.from_file(scores_path)
    return HttpScoreBackend(backend_cfg.endpoint, backend_cfg.timeout, backend_cfg.retries)


def run_rplg(config: Config, scene_filter: str | None = None) -> StageResult:
    """Score 2D detections, keep confident ones, lift them to 3D labels."""
    scenes, base = _load_scenes(config, scene_filter)
    det2d_path = _require_path(config.paths.detections_2d, "detections_2d")
    det2d = ensure_valid(det2d_path, "detections_2d")["detections"]
    backend = _scorer_backend(config)
    out_dir = Path(config.paths.out_dir) / "pseudo_labels"
    lock = threading.Lock() if not getattr(backend, "concurrent_safe", False) else None

    artifacts: list[str] = []
    per_scene: dict[str, dict] = {}
    for scene in scenes:
        sid = scene["scene_id"]
        cloud = parse_point_cloud(ensure_valid(base / scene["points_path"], "points"))
        projection = parse_projection(scene["projection"])
        labels: list[Label2D] = []
        scores = []
        drops = []
        for rec in det2d:
            if rec["scene_id"] != sid:
                continue
            label = Label2D(Box2D(*rec["box2d"]), rec["class_name"], rec["patch_id"])
            try:
                if lock is None:
                    raw = backend.raw_scores(label.patch_id, label.class_name)
                else:
                    with lock:
                        raw = backend.raw_scores(label.patch_id, label.class_name)
            except MissingScoreError:
                drops.append({"patch_id": label.patch_id, "reason": "missing-score"})
                continue
            labels.append(label)
            scores.append(reflection_score(*raw))
        kept = filter_labels(labels, scores, config.phi_clip)
        pseudo, lift_drops = generate_pseudo_labels(kept, cloud, projection, config.trim)
        drops.extend({"patch_id": d.patch_id, "reason": d.reason} for d in lift_drops)

        artifacts.append(str(write_json_atomic(out_dir / f"{sid}.json", pseudo_labels_doc(sid, pseudo))))
        drop_lines = "".join(json.dumps(d, ensure_ascii=False) + "\n" for d in drops)
        artifacts.append(str(write_text_atomic(out_dir / f"{sid}.drops.jsonl", drop_lines)))
        per_scene[sid] = {"scored": len(labels), "kept": len(kept), "lifted": len(pseudo),
                          "dropped": len(drops)}
    return StageResult(EXIT_OK, {"stage": "rplg", "scenes": per_scene}, artifacts)


def run_baol_label(config: Config, scene_filter: str | None = None) -> StageResult:
    """Assign binary supervision to proposals from the lifted pseudo labels."""
    from ..baol import assign_labels, match_proposals
    from .io import parse_pseudo_labels

    scenes, base = _load_scenes(config, scene_filter)
    out_root = Path(config.paths.out_dir)
    artifacts: list[str] = []
    per_scene: dict[str, dict] = {}
    for scene in scenes:
        sid = scene["scene_id"]
        proposals = parse_proposals(ensure_valid(base / scene["proposals_path"], "proposals"))
        labels_path = out_root / "pseudo_labels" / f"{sid}.json"
        if not labels_path.exists():
            raise MissingInputError(f"{labels_path} missing; run the rplg stage first")
        pseudo = parse_pseudo_labels(ensure_valid(labels_path, "pseudo_labels"))
        match = match_proposals([p.box for p in proposals], [lab.box for lab in pseudo])
        y = assign_labels(match, [p.box for p in proposals], config.phi_low, config.phi_high)
        artifacts.append(
            str(write_json_atomic(out_root / "assignment" / f"{sid}.json", assignment_doc(sid, y.y)))
        )
        per_scene[sid] = {"proposals": len(proposals), "labels": len(pseudo),
                          "positives": int(sum(y.y))}
    return StageResult(EXIT_OK, {"stage": "baol-label", "scenes": per_scene}, artifacts)


class _SerializedClient:
    """Lock wrapper for shared backends that do not accept concurrent calls."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()
        self.accepts_feature_context = inner.accepts_feature_context
        self.concurrent_safe = True

    def complete(self, prompt, context=None):
        with self._lock:
            return self._inner.complete(prompt, context)


def _client_factory(config: Config, kb: KnowledgeBase):
    if config.llm_backend.kind == "mock":
        return lambda: MockLLMClient(kb)
    shared = HttpLLMClient(
        config.llm_backend.endpoint,
        config.llm_backend.timeout,
        config.llm_backend.retries,
        kb=kb,
    )
    if not shared.concurrent_safe and config.workers > 1:
        shared = _SerializedClient(shared)
    return lambda: shared


def run_infer(config: Config, scene_filter: str | None = None) -> StageResult:
    """Select proposals, run the QA session per scene, write detections
    and transcripts."""
    scenes, base = _load_scenes(config, scene_filter)
    kb = _load_kb(config)
    make_client = _client_factory(config, kb)
    out_root = Path(config.paths.out_dir)
    vocabulary = list(kb.classes)
    scene_types = list(kb.scene_types)

    def one(scene: dict) -> tuple[str, dict, list[str]]:
        sid = scene["scene_id"]
        proposals = parse_proposals(ensure_valid(base / scene["proposals_path"], "proposals"))
        kept = select_proposals(proposals, config.phi_obj)
        context, final, transcript = run_session(
            make_client(), kept, scene["global_feature"], scene_types, vocabulary,
            config.phi_keep,
        )
        det_path = write_json_atomic(
            out_root / "detections" / f"{sid}.json",
            detections_doc(sid, context.scene_type, final),
        )
        tr_path = write_text_atomic(out_root / "transcripts" / f"{sid}.jsonl", transcript.to_jsonl())
        removed = sum(1 for d in final if d.status == "removed")
        reclassified = sum(1 for d in final if d.status == "reclassified")
        info = {
            "scene_type": context.scene_type,
            "proposals": len(proposals),
            "selected": len(kept),
            "final": len(final) - removed,
            "removed": removed,
            "reclassified": reclassified,
        }
        return sid, info, [str(det_path), str(tr_path)]

    results = _run_per_scene(one, scenes, config.workers)
    artifacts = [p for _, _, paths in results for p in paths]
    per_scene = {sid: info for sid, info, _ in results}
    return StageResult(EXIT_OK, {"stage": "infer", "scenes": per_scene}, artifacts)


def _run_per_scene(fn, scenes, workers: int):
    if workers <= 1 or len(scenes) <= 1:
        return [fn(s) for s in scenes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, scenes))


def run_eval(config: Config, scene_filter: str | None = None) -> StageResult:
    """Score the refined detections against ground truth and write the report."""
    scenes, _ = _load_scenes(config, scene_filter)
    kb = _load_kb(config)
    out_root = Path(config.paths.out_dir)
    dets_per_scene = {}
    gts_per_scene = {}
    for scene in scenes:
        sid = scene["scene_id"]
        det_path = out_root / "detections" / f"{sid}.json"
        if not det_path.exists():
            raise MissingInputError(f"{det_path} missing; run the infer stage first")
        dets_per_scene[sid] = parse_detections(ensure_valid(det_path, "detections"))
        gts_per_scene[sid] = parse_ground_truth(scene.get("ground_truth") or [])
    report = evaluate(dets_per_scene, gts_per_scene, list(kb.classes))
    path = write_json_atomic(out_root / "report.json", report.to_doc())
    print(format_report_table(report))
    return StageResult(
        EXIT_OK,
        {"stage": "eval", "map": report.map_value,
         "classes": len(report.per_class_ap), "scenes": len(scenes)},
        [str(path)],
    )


def format_report_table(report) -> str:
    width = max([len(c) for c in report.per_class_ap] + [5])
    lines = [f"{'class':<{width}}  {'AP':>7}  {'tp':>4} {'fp':>4} {'gt':>4}"]
    for cls in sorted(report.per_class_ap):
        ap = report.per_class_ap[cls]
        counts = report.counts[cls]
        lines.append(
            f"{cls:<{width}}  {ap:7.4f}  {counts['tp']:>4} {counts['fp']:>4} {counts['gt']:>4}"
        )
    lines.append(f"{'mAP':<{width}}  {report.map_value:7.4f}")
    return "\n".join(lines)


# Fixed synthetic camera: above the room edge, looking across it. Only used
# to make scene records complete; inference never touches the image plane.
_SYNTH_INTRINSICS = np.array([[300.0, 0.0, 320.0], [0.0, 300.0, 240.0], [0.0, 0.0, 1.0]])
_SYNTH_EXTRINSICS = np.array(
    [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, -1.0, 1.5], [0.0, 1.0, 0.0, 10.0]]
)
SYNTH_PROJECTION = _SYNTH_INTRINSICS @ _SYNTH_EXTRINSICS


def _synth_points(scene, rng) -> np.ndarray:
    """Sparse cloud: floor grid plus samples inside each object box."""
    xs, ys = np.meshgrid(np.linspace(-3.5, 3.5, 8), np.linspace(-3.5, 3.5, 8))
    floor = np.stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)], axis=1)
    blobs = [floor]
    for obj in scene.ground_truth:
        b = obj.box
        local = rng.uniform(-0.5, 0.5, size=(20, 3)) * [b.l, b.w, b.h]
        c, s = math.cos(b.theta), math.sin(b.theta)
        world = np.stack(
            [
                c * local[:, 0] - s * local[:, 1] + b.x,
                s * local[:, 0] + c * local[:, 1] + b.y,
                local[:, 2] + b.z,
            ],
            axis=1,
        )
        blobs.append(world)
    return np.vstack(blobs)


def _noise_model(config: Config) -> NoiseModel:
    from .config import ConfigError

    overrides = dict(config.synth.noise)
    cal = overrides.pop("objectness_calibration", None)
    kwargs = {}
    for name in ("box_jitter", "class_confusion_rate", "implausible_bias",
                 "false_positive_rate", "miss_rate"):
        if name in overrides:
            kwargs[name] = overrides.pop(name)
    if overrides:
        raise ConfigError(f"synth.noise.{next(iter(overrides))}", "unknown field")
    if cal is not None:
        kwargs["objectness_calibration"] = ObjectnessCalibration(
            tuple(cal["correct"]), tuple(cal["corrupted"])
        )
    return NoiseModel(**kwargs)


def _synth_config(config: Config, kb: KnowledgeBase) -> SynthConfig:
    return SynthConfig(
        num_scenes=config.synth.num_scenes,
        objects_per_scene=(config.synth.objects_min, config.synth.objects_max),
        kb=kb,
        feature_noise=config.synth.feature_noise,
        seed=config.seed,
    )


def _kb_or_default(config: Config) -> KnowledgeBase:
    """Custom knowledge base when the configured file exists, else the
    built-in one (synth writes its kb to out_dir, which may be this path)."""
    if config.paths.kb and Path(config.paths.kb).exists():
        return KnowledgeBase.from_file(config.paths.kb)
    return default_knowledge_base()


def run_synth(config: Config, scene_filter: str | None = None) -> StageResult:
    """Generate synthetic scenes plus corrupted proposals as pipeline inputs."""
    kb = _kb_or_default(config)
    noise = _noise_model(config)
    cfg = _synth_config(config, kb)
    out_root = Path(config.paths.out_dir)
    artifacts = [str(write_json_atomic(out_root / "kb.json", kb.to_doc()))]

    scene_records = []
    for idx in range(cfg.num_scenes):
        scene = generate_scene(cfg, idx)
        if scene_filter is not None and scene.scene_id != scene_filter:
            continue
        proposals = corrupt(scene, noise, cfg, cfg.seed)
        rng = scoped_rng(cfg.seed, scene.scene_id, "points")
        artifacts.append(
            str(write_json_atomic(out_root / "points" / f"{scene.scene_id}.json",
                                  points_doc(_synth_points(scene, rng))))
        )
        artifacts.append(
            str(write_json_atomic(out_root / "proposals" / f"{scene.scene_id}.json",
                                  proposals_doc(scene.scene_id, proposals)))
        )
        scene_records.append(
            {
                "scene_id": scene.scene_id,
                "points_path": f"points/{scene.scene_id}.json",
                "projection": [[float(v) for v in row] for row in SYNTH_PROJECTION],
                "proposals_path": f"proposals/{scene.scene_id}.json",
                "global_feature": list(scene.global_feature),
                "ground_truth": ground_truth_records(scene.ground_truth),
            }
        )
    scenes_path = write_json_atomic(
        out_root / "scenes.json", {"schema_version": SCHEMA_VERSION, "scenes": scene_records}
    )
    artifacts.append(str(scenes_path))
    return StageResult(
        EXIT_OK, {"stage": "synth", "scenes": len(scene_records), "out_dir": str(out_root)},
        artifacts,
    )


def run_experiment_stage(config: Config, trials: int = 50) -> StageResult:
    """Repeated generate/corrupt/refine rounds; writes per-trial results
    and the aggregate summary."""
    kb = _kb_or_default(config)
    noise = _noise_model(config)
    cfg = _synth_config(config, kb)
    results, summary = run_experiment(cfg, noise, trials, config.phi_obj, config.phi_keep)
    out_root = Path(config.paths.out_dir)
    lines = "".join(json.dumps(r.to_doc(), ensure_ascii=False) + "\n" for r in results)
    artifacts = [
        str(write_text_atomic(out_root / "results.jsonl", lines)),
        str(write_json_atomic(out_root / "summary.json", summary)),
    ]
    print(format_delta_table(summary))
    return StageResult(EXIT_OK, {"stage": "experiment", **summary}, artifacts)


def format_delta_table(summary: dict) -> str:
    width = max([len(c) for c in summary["per_class_mean_delta"]] + [5])
    lines = [f"{'class':<{width}}  {'mean dAP':>9}"]
    for cls, delta in summary["per_class_mean_delta"].items():
        lines.append(f"{cls:<{width}}  {delta:>+9.4f}")
    lines.append(
        f"{'mAP':<{width}}  {summary['mean_map_initial']:.4f} -> {summary['mean_map_refined']:.4f}"
        f" (d={summary['mean_delta']:+.4f}, win rate {summary['win_rate']:.0%})"
    )
    return "\n".join(lines)


def run_losses_check(config: Config) -> StageResult:
    """Run the loss-function invariant suite and print a pass/fail table."""
    checks = losses_check_suite()
    width = max(len(name) for name, _, _ in checks)
    for name, passed, detail in checks:
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}  {detail}")
    all_passed = all(passed for _, passed, _ in checks)
    return StageResult(
        EXIT_OK if all_passed else EXIT_ERROR,
        {"stage": "losses-check", "passed": all_passed,
         "checks": {name: passed for name, passed, _ in checks}},
    )


def losses_check_suite() -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(90210)
    results = []

    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 8))
        y = [int(v) for v in rng.integers(0, 2, size=n)]
        o = [losses_mod.clamp_probability(float(v), 1e-3) for v in rng.uniform(0, 1, size=n)]
        _, grad = losses_mod.conf_loss(y, o, 0.2)
        step = 1e-6
        for k in range(n):
            plus, minus = list(o), list(o)
            plus[k] += step
            minus[k] -= step
            fd = (losses_mod.conf_loss(y, plus, 0.2)[0] - losses_mod.conf_loss(y, minus, 0.2)[0]) / (2 * step)
            worst = max(worst, abs(grad[k] - fd) / max(abs(fd), 1.0))
    results.append(("conf-gradient-vs-finite-diff", worst <= 1e-5, f"max rel err {worst:.2e}"))

    min_second = math.inf
    for _ in range(20):
        o = [losses_mod.clamp_probability(float(v), 1e-2) for v in rng.uniform(0, 1, size=4)]
        y = [int(v) for v in rng.integers(0, 2, size=4)]
        for k in range(4):
            plus, minus = list(o), list(o)
            plus[k] += 1e-4
            minus[k] -= 1e-4
            second = (
                losses_mod.conf_loss(y, plus)[0]
                - 2 * losses_mod.conf_loss(y, o)[0]
                + losses_mod.conf_loss(y, minus)[0]
            )
            min_second = min(min_second, second)
    results.append(("conf-convexity", min_second >= -1e-12, f"min second diff {min_second:.2e}"))

    examples_ok = (
        abs(losses_mod.conf_loss([0], [0.5], 0.2)[0] - 0.2 * math.log(2)) <= 1e-6
        and abs(losses_mod.text_loss(losses_mod.TokenDistribution((0.5, 0.25))) - 2.079442) <= 1e-6
        and abs(losses_mod.text_loss(losses_mod.TokenDistribution((math.exp(-1),))) - 1.0) <= 1e-9
        and losses_mod.total_loss(1, 1, 1, 1, losses_mod.LossWeights()) == 16.0
    )
    results.append(("closed-form-examples", examples_ok, "published-constant spot checks"))

    nonneg = all(
        losses_mod.text_loss(losses_mod.TokenDistribution(tuple(rng.uniform(0.01, 1.0, size=3)))) >= 0.0
        for _ in range(200)
    )
    zero_iff_one = losses_mod.text_loss(losses_mod.TokenDistribution((1.0, 1.0))) == 0.0
    results.append(("text-loss-nonnegative", nonneg and zero_iff_one, "sampled + exact zero case"))

    w = losses_mod.LossWeights()
    worst_sup = 0.0
    for _ in range(50):
        a = [float(v) for v in rng.normal(size=4)]
        b = [float(v) for v in rng.normal(size=4)]
        gap = abs(
            losses_mod.total_loss(*(x + z for x, z in zip(a, b)), w)
            - (losses_mod.total_loss(*a, w) + losses_mod.total_loss(*b, w))
        )
        worst_sup = max(worst_sup, gap)
    results.append(("total-loss-superposition", worst_sup <= 1e-12, f"max gap {worst_sup:.2e}"))
    return results


def run_stage(stage: str, config: Config, scene: str | None = None, trials: int = 50) -> StageResult:
    """Dispatch a named stage, mapping typed failures to exit codes."""
    runners = {
        "rplg": lambda: run_rplg(config, scene),
        "baol-label": lambda: run_baol_label(config, scene),
        "infer": lambda: run_infer(config, scene),
        "eval": lambda: run_eval(config, scene),
        "synth": lambda: run_synth(config, scene),
        "experiment": lambda: run_experiment_stage(config, trials),
        "losses-check": lambda: run_losses_check(config),
    }
    if stage not in runners:
        raise ValueError(f"unknown stage {stage!r}; known: {STAGE_NAMES}")
    try:
        return runners[stage]()
    except MissingInputError as exc:
        return StageResult(EXIT_MISSING_INPUT, {"stage": stage, "error": str(exc)})
    except FileNotFoundError as exc:
        return StageResult(EXIT_MISSING_INPUT, {"stage": stage, "error": str(exc)})
    except SchemaViolationError as exc:
        return StageResult(EXIT_SCHEMA, {"stage": stage, "error": str(exc)})
    except (TransportError, SessionError) as exc:
        return StageResult(EXIT_TRANSPORT, {"stage": stage, "error": str(exc)})
    except EvalError as exc:
        return StageResult(EXIT_ERROR, {"stage": stage, "error": str(exc)})
