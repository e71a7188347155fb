"""Artifact serialization: atomic writes and JSON <-> domain conversions."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..baol import Proposal
from ..evaluator import EvalReport, GroundTruthObject
from ..geometry import Box3D, PointCloud, ProjectionMatrix
from ..glci import Detection
from ..rplg import PseudoLabel3D
from .schemas import SCHEMA_VERSION


def write_text_atomic(path, text: str) -> Path:
    """Write via a temp file plus rename so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_json_atomic(path, doc: dict) -> Path:
    return write_text_atomic(path, json.dumps(doc, ensure_ascii=False, indent=2) + "\n")


def load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def box_to_list(box: Box3D) -> list[float]:
    return [float(v) for v in box.as_list()]


def points_doc(xyz: np.ndarray) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "points": [[float(v) for v in p] for p in np.asarray(xyz)],
    }


def parse_point_cloud(doc: dict) -> PointCloud:
    return PointCloud(np.array(doc["points"], dtype=float))


def parse_projection(rows: list[list[float]]) -> ProjectionMatrix:
    return ProjectionMatrix(np.array(rows, dtype=float))


def proposals_doc(scene_id: str, proposals: list[Proposal]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene_id,
        "proposals": [
            {
                "box": box_to_list(p.box),
                "objectness": float(p.objectness),
                "feature": [float(v) for v in p.feature],
            }
            for p in proposals
        ],
    }


def parse_proposals(doc: dict) -> list[Proposal]:
    return [
        Proposal(Box3D.from_list(rec["box"]), rec["objectness"], tuple(rec["feature"]))
        for rec in doc["proposals"]
    ]


def pseudo_labels_doc(scene_id: str, labels: list[PseudoLabel3D]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene_id,
        "labels": [
            {
                "box": box_to_list(lab.box),
                "class_name": lab.class_name,
                "phi_pos": float(lab.phi_pos),
            }
            for lab in labels
        ],
    }


def parse_pseudo_labels(doc: dict) -> list[PseudoLabel3D]:
    return [
        PseudoLabel3D(Box3D.from_list(rec["box"]), rec["class_name"], rec["phi_pos"])
        for rec in doc["labels"]
    ]


def detections_doc(scene_id: str, scene_type: str, detections: list[Detection]) -> dict:
    """Serialized final detections; removed entries are excluded."""
    records = []
    for det in detections:
        if det.status == "removed":
            continue
        rec = {
            "box": box_to_list(det.box),
            "class_name": det.class_name,
            "objectness": float(det.objectness),
            "status": det.status,
        }
        if det.original_class is not None:
            rec["original_class"] = det.original_class
        if det.flag is not None:
            rec["flag"] = det.flag
        records.append(rec)
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene_id,
        "scene_type": scene_type,
        "detections": records,
    }


def parse_detections(doc: dict) -> list[Detection]:
    return [
        Detection(
            Box3D.from_list(rec["box"]),
            rec["class_name"],
            rec["objectness"],
            (),
            rec.get("status", "initial"),
            rec.get("original_class"),
            rec.get("flag"),
        )
        for rec in doc["detections"]
    ]


def parse_ground_truth(records: list[dict]) -> list[GroundTruthObject]:
    return [GroundTruthObject(Box3D.from_list(r["box"]), r["class_name"]) for r in records]


def ground_truth_records(objects) -> list[dict]:
    return [{"box": box_to_list(g.box), "class_name": g.class_name} for g in objects]


def assignment_doc(scene_id: str, y) -> dict:
    return {"schema_version": SCHEMA_VERSION, "scene_id": scene_id, "y": [int(v) for v in y]}


def report_doc(report: EvalReport) -> dict:
    return report.to_doc()
