"""Interchange file validation.

Every artifact the stages read or write is single-document JSON (or JSON
lines for transcripts) with a schema_version field. Validators return a
list of violations with JSON-pointer-style locations instead of raising,
so callers can report all problems at once.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

SCHEMA_VERSION = 1

BOX_FIELDS = 7  # [x, y, z, l, w, h, theta]
STATUSES = ("initial", "confirmed", "reclassified")
STAGES = ("global", "local", "collaborative")


@dataclass(frozen=True)
class Violation:
    pointer: str
    message: str

    def __str__(self) -> str:
        return f"{self.pointer}: {self.message}"


class SchemaViolationError(ValueError):
    """A file failed schema validation; carries the individual violations."""

    def __init__(self, path, violations: list[Violation]):
        lines = "\n".join(f"  {v}" for v in violations[:20])
        extra = "" if len(violations) <= 20 else f"\n  ... {len(violations) - 20} more"
        super().__init__(f"{path} failed validation:\n{lines}{extra}")
        self.path = str(path)
        self.violations = violations


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_version(doc, out: list[Violation]) -> None:
    if not isinstance(doc, dict):
        out.append(Violation("", "document must be a JSON object"))
        return
    if doc.get("schema_version") != SCHEMA_VERSION:
        out.append(Violation("/schema_version", f"must be {SCHEMA_VERSION}"))


def _check_box(box, ptr: str, out: list[Violation]) -> None:
    if not isinstance(box, list) or len(box) != BOX_FIELDS:
        out.append(Violation(ptr, f"box must be a list of {BOX_FIELDS} numbers"))
        return
    if not all(_is_number(v) for v in box):
        out.append(Violation(ptr, "box entries must be finite numbers"))
        return
    for k, name in ((3, "l"), (4, "w"), (5, "h")):
        if box[k] <= 0:
            out.append(Violation(f"{ptr}/{k}", f"{name} must be positive, got {box[k]}"))


def _check_box2d(box, ptr: str, out: list[Violation]) -> None:
    if not isinstance(box, list) or len(box) != 4 or not all(_is_number(v) for v in box):
        out.append(Violation(ptr, "box2d must be [u_min, v_min, u_max, v_max]"))
        return
    if not box[0] < box[2]:
        out.append(Violation(ptr, f"u_min must be < u_max, got {box[0]} vs {box[2]}"))
    if not box[1] < box[3]:
        out.append(Violation(ptr, f"v_min must be < v_max, got {box[1]} vs {box[3]}"))


def _check_text(value, ptr: str, out: list[Violation], allow_empty: bool = False) -> bool:
    if not isinstance(value, str) or (not allow_empty and not value.strip()):
        out.append(Violation(ptr, "must be a nonempty string"))
        return False
    return True


def _check_probability(value, ptr: str, out: list[Violation]) -> None:
    if not _is_number(value) or not 0.0 <= value <= 1.0:
        out.append(Violation(ptr, f"must be a number in [0, 1], got {value!r}"))


def _check_vector(value, ptr: str, out: list[Violation]) -> None:
    if not isinstance(value, list) or not value or not all(_is_number(v) for v in value):
        out.append(Violation(ptr, "must be a nonempty list of finite numbers"))


def _items(doc, key: str, out: list[Violation]):
    value = doc.get(key)
    if not isinstance(value, list):
        out.append(Violation(f"/{key}", "must be a list"))
        return None
    return value


def validate_scenes(doc, base_dir: str | None = None) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    scenes = _items(doc, "scenes", out)
    if scenes is None:
        return out
    seen_ids = set()
    for i, scene in enumerate(scenes):
        ptr = f"/scenes/{i}"
        if not isinstance(scene, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        sid = scene.get("scene_id")
        if _check_text(sid, f"{ptr}/scene_id", out):
            if sid in seen_ids:
                out.append(Violation(f"{ptr}/scene_id", f"duplicate scene_id {sid!r}"))
            seen_ids.add(sid)
        proj = scene.get("projection")
        if (
            not isinstance(proj, list)
            or len(proj) != 3
            or any(not isinstance(r, list) or len(r) != 4 or not all(_is_number(v) for v in r) for r in proj)
        ):
            out.append(Violation(f"{ptr}/projection", "must be a 3x4 matrix of finite numbers"))
        _check_vector(scene.get("global_feature"), f"{ptr}/global_feature", out)
        for key in ("points_path", "proposals_path"):
            if _check_text(scene.get(key), f"{ptr}/{key}", out) and base_dir is not None:
                ref = os.path.join(base_dir, scene[key])
                if not os.path.exists(ref):
                    out.append(Violation(f"{ptr}/{key}", f"referenced file {ref} does not exist"))
        gt = scene.get("ground_truth")
        if gt is not None:
            if not isinstance(gt, list):
                out.append(Violation(f"{ptr}/ground_truth", "must be a list"))
                continue
            for j, obj in enumerate(gt):
                gptr = f"{ptr}/ground_truth/{j}"
                if not isinstance(obj, dict):
                    out.append(Violation(gptr, "must be an object"))
                    continue
                _check_box(obj.get("box"), f"{gptr}/box", out)
                _check_text(obj.get("class_name"), f"{gptr}/class_name", out)
    return out


def validate_points(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    points = _items(doc, "points", out)
    if points is None:
        return out
    if not points:
        out.append(Violation("/points", "must contain at least one point"))
    for i, p in enumerate(points):
        if not isinstance(p, list) or len(p) != 3 or not all(_is_number(v) for v in p):
            out.append(Violation(f"/points/{i}", "must be [x, y, z] finite numbers"))
    return out


def validate_proposals(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    _check_text(doc.get("scene_id"), "/scene_id", out)
    proposals = _items(doc, "proposals", out)
    if proposals is None:
        return out
    feature_len: int | None = None
    for i, prop in enumerate(proposals):
        ptr = f"/proposals/{i}"
        if not isinstance(prop, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        _check_box(prop.get("box"), f"{ptr}/box", out)
        _check_probability(prop.get("objectness"), f"{ptr}/objectness", out)
        feature = prop.get("feature")
        _check_vector(feature, f"{ptr}/feature", out)
        if isinstance(feature, list):
            if feature_len is None:
                feature_len = len(feature)
            elif len(feature) != feature_len:
                out.append(
                    Violation(
                        f"{ptr}/feature",
                        f"length {len(feature)} differs from the scene's first proposal ({feature_len})",
                    )
                )
    return out


def validate_pseudo_labels(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    _check_text(doc.get("scene_id"), "/scene_id", out)
    labels = _items(doc, "labels", out)
    if labels is None:
        return out
    for i, lab in enumerate(labels):
        ptr = f"/labels/{i}"
        if not isinstance(lab, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        _check_box(lab.get("box"), f"{ptr}/box", out)
        _check_text(lab.get("class_name"), f"{ptr}/class_name", out)
        _check_probability(lab.get("phi_pos"), f"{ptr}/phi_pos", out)
    return out


def validate_scores(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    scores = _items(doc, "scores", out)
    if scores is None:
        return out
    for i, rec in enumerate(scores):
        ptr = f"/scores/{i}"
        if not isinstance(rec, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        _check_text(rec.get("patch_id"), f"{ptr}/patch_id", out)
        _check_text(rec.get("class_name"), f"{ptr}/class_name", out)
        for key in ("pos_raw", "neg_raw"):
            if not _is_number(rec.get(key)):
                out.append(Violation(f"{ptr}/{key}", "must be a finite number"))
    return out


def validate_detections_2d(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    dets = _items(doc, "detections", out)
    if dets is None:
        return out
    seen = set()
    for i, rec in enumerate(dets):
        ptr = f"/detections/{i}"
        if not isinstance(rec, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        _check_text(rec.get("scene_id"), f"{ptr}/scene_id", out)
        _check_text(rec.get("image"), f"{ptr}/image", out)
        pid = rec.get("patch_id")
        if _check_text(pid, f"{ptr}/patch_id", out):
            if pid in seen:
                out.append(Violation(f"{ptr}/patch_id", f"duplicate patch_id {pid!r}"))
            seen.add(pid)
        _check_text(rec.get("class_name"), f"{ptr}/class_name", out)
        _check_box2d(rec.get("box2d"), f"{ptr}/box2d", out)
    return out


def validate_captions(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    captions = _items(doc, "captions", out)
    if captions is None:
        return out
    for i, rec in enumerate(captions):
        ptr = f"/captions/{i}"
        if not isinstance(rec, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        _check_text(rec.get("image"), f"{ptr}/image", out)
        _check_text(rec.get("scene_type"), f"{ptr}/scene_type", out)
        if not isinstance(rec.get("description"), str):
            out.append(Violation(f"{ptr}/description", "must be a string"))
    return out


def validate_kb(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    scene_types = _items(doc, "scene_types", out)
    classes = _items(doc, "classes", out)
    if scene_types is None or classes is None:
        return out
    for i, name in enumerate(scene_types):
        _check_text(name, f"/scene_types/{i}", out)
    for i, name in enumerate(classes):
        _check_text(name, f"/classes/{i}", out)
    if len(set(scene_types)) != len(scene_types):
        out.append(Violation("/scene_types", "must be unique"))
    if len(set(classes)) != len(classes):
        out.append(Violation("/classes", "must be unique"))
    if out:
        return out
    plausible = doc.get("plausible")
    prior = doc.get("class_prior")
    if not isinstance(plausible, dict):
        out.append(Violation("/plausible", "must be an object"))
        return out
    if not isinstance(prior, dict):
        out.append(Violation("/class_prior", "must be an object"))
        return out
    for scene in scene_types:
        table = plausible.get(scene)
        if not isinstance(table, dict) or set(table) != set(classes):
            out.append(Violation(f"/plausible/{scene}", "must map every class to a boolean"))
            continue
        bad = [c for c, v in table.items() if not isinstance(v, bool)]
        if bad:
            out.append(Violation(f"/plausible/{scene}/{bad[0]}", "must be a boolean"))
            continue
        expected = {c for c in classes if table[c]}
        ranking = prior.get(scene)
        if not isinstance(ranking, list) or set(ranking) != expected or len(ranking) != len(expected):
            out.append(
                Violation(f"/class_prior/{scene}", "must be a permutation of the scene's plausible classes")
            )
    return out


def validate_detections(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    _check_text(doc.get("scene_id"), "/scene_id", out)
    dets = _items(doc, "detections", out)
    if dets is None:
        return out
    for i, rec in enumerate(dets):
        ptr = f"/detections/{i}"
        if not isinstance(rec, dict):
            out.append(Violation(ptr, "must be an object"))
            continue
        _check_box(rec.get("box"), f"{ptr}/box", out)
        _check_text(rec.get("class_name"), f"{ptr}/class_name", out)
        _check_probability(rec.get("objectness"), f"{ptr}/objectness", out)
        status = rec.get("status")
        if status not in STATUSES:
            out.append(Violation(f"{ptr}/status", f"must be one of {STATUSES}, got {status!r}"))
        original = rec.get("original_class")
        if status == "reclassified":
            if not isinstance(original, str) or original == rec.get("class_name"):
                out.append(Violation(f"{ptr}/original_class", "must name a distinct prior class"))
        elif original is not None:
            out.append(Violation(f"{ptr}/original_class", "only valid on reclassified detections"))
    return out


def validate_assignment(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    _check_text(doc.get("scene_id"), "/scene_id", out)
    y = _items(doc, "y", out)
    if y is None:
        return out
    for i, v in enumerate(y):
        if v not in (0, 1) or isinstance(v, bool):
            out.append(Violation(f"/y/{i}", f"must be 0 or 1, got {v!r}"))
    return out


def validate_report(doc) -> list[Violation]:
    out: list[Violation] = []
    _check_version(doc, out)
    if out:
        return out
    if not _is_number(doc.get("iou_threshold")):
        out.append(Violation("/iou_threshold", "must be a finite number"))
    per_class = doc.get("per_class_ap")
    if not isinstance(per_class, dict):
        out.append(Violation("/per_class_ap", "must be an object"))
        return out
    for cls, ap in per_class.items():
        _check_probability(ap, f"/per_class_ap/{cls}", out)
    if not _is_number(doc.get("map")):
        out.append(Violation("/map", "must be a finite number"))
    counts = doc.get("counts")
    if not isinstance(counts, dict):
        out.append(Violation("/counts", "must be an object"))
        return out
    for cls, entry in counts.items():
        ptr = f"/counts/{cls}"
        if not isinstance(entry, dict) or set(entry) != {"tp", "fp", "gt"}:
            out.append(Violation(ptr, "must have integer tp/fp/gt fields"))
            continue
        for key, v in entry.items():
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                out.append(Violation(f"{ptr}/{key}", f"must be a nonnegative integer, got {v!r}"))
    return out


def validate_transcript_lines(lines: list[str]) -> list[Violation]:
    out: list[Violation] = []
    stage_rank = {name: i for i, name in enumerate(STAGES)}
    last_rank = 0
    for i, line in enumerate(lines):
        ptr = f"/{i}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            out.append(Violation(ptr, "not valid JSON"))
            continue
        if not isinstance(rec, dict) or set(rec) != {"stage", "prompt", "answer", "decision"}:
            out.append(Violation(ptr, "must have exactly stage/prompt/answer/decision"))
            continue
        stage = rec["stage"]
        if stage not in stage_rank:
            out.append(Violation(f"{ptr}/stage", f"must be one of {STAGES}, got {stage!r}"))
            continue
        for key in ("prompt", "answer", "decision"):
            if not isinstance(rec[key], str):
                out.append(Violation(f"{ptr}/{key}", "must be a string"))
        if stage_rank[stage] < last_rank:
            out.append(Violation(f"{ptr}/stage", f"{stage} appears after a later stage"))
        last_rank = max(last_rank, stage_rank[stage])
    return out


_DOC_VALIDATORS = {
    "scenes": validate_scenes,
    "points": validate_points,
    "proposals": validate_proposals,
    "pseudo_labels": validate_pseudo_labels,
    "scores": validate_scores,
    "detections_2d": validate_detections_2d,
    "captions": validate_captions,
    "kb": validate_kb,
    "detections": validate_detections,
    "assignment": validate_assignment,
    "report": validate_report,
}

SCHEMA_NAMES = (*_DOC_VALIDATORS, "transcript")


def validate_doc(doc, schema_name: str, base_dir: str | None = None) -> list[Violation]:
    if schema_name == "scenes":
        return validate_scenes(doc, base_dir)
    try:
        validator = _DOC_VALIDATORS[schema_name]
    except KeyError:
        raise ValueError(f"unknown schema {schema_name!r}; known: {SCHEMA_NAMES}")
    return validator(doc)


def validate_file(path, schema_name: str) -> list[Violation]:
    """Validate a file against a named schema; empty list means valid."""
    if schema_name == "transcript":
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
        return validate_transcript_lines(lines)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            return [Violation("", f"not valid JSON: {exc}")]
    return validate_doc(doc, schema_name, base_dir=os.path.dirname(os.path.abspath(path)))


def ensure_valid(path, schema_name: str) -> dict:
    """Load a JSON document, raising SchemaViolationError when invalid."""
    violations = validate_file(path, schema_name)
    if violations:
        raise SchemaViolationError(path, violations)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
