"""Export raw positive/negative reflection scores for 2D detections.

For every detection record, the patch is cropped and scored against the
record's class. Raw scores only: the pipeline owns the softmax and the
keep threshold. The builtin scorer rates a patch by the fraction of its
pixels matching the class's color, mapped to an antisymmetric logit pair.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import cv2

from .colorlex import DEFAULT_CLASS_MAP, class_color, color_affinity
from .common import (
    SCHEMA_VERSION,
    AdapterError,
    AdapterManifest,
    load_image_bgr,
    resolve_images,
    write_output_with_manifest,
)

BUILTIN_SCORER = "builtin-color-affinity"
SCORER_VERSION = "1.0"
LOGIT_SCALE = 4.0


def score_patch(hsv_patch, class_name: str, class_map: dict[str, str]) -> tuple[float, float]:
    color = class_color(class_name, class_map)
    affinity = color_affinity(hsv_patch, color) if color is not None else 0.0
    pos_raw = LOGIT_SCALE * (affinity - 0.5)
    return pos_raw, -pos_raw


def export_reflection_scores(
    images: list[Path],
    detections_path,
    out_path,
    model: str = BUILTIN_SCORER,
    class_map: dict[str, str] | None = None,
) -> Path:
    if model != BUILTIN_SCORER:
        raise AdapterError(f"unknown scorer model {model!r}; available: {BUILTIN_SCORER}")
    class_map = class_map or DEFAULT_CLASS_MAP
    doc = json.loads(Path(detections_path).read_text(encoding="utf-8"))
    by_name = {p.name: p for p in images}

    hsv_cache: dict[str, object] = {}
    records = []
    for rec in doc["detections"]:
        image_name = rec["image"]
        if image_name not in by_name:
            raise AdapterError(f"patch {rec['patch_id']}: image {image_name!r} not in --images")
        if image_name not in hsv_cache:
            bgr = load_image_bgr(by_name[image_name])
            hsv_cache[image_name] = cv2.cvtColor(bgr, cv2.COLOR_BGR2HSV)
        hsv = hsv_cache[image_name]
        u0, v0, u1, v1 = (int(round(v)) for v in rec["box2d"])
        patch = hsv[max(v0, 0) : v1, max(u0, 0) : u1]
        if patch.size == 0:
            raise AdapterError(f"patch {rec['patch_id']}: box {rec['box2d']} is outside the image")
        pos_raw, neg_raw = score_patch(patch, rec["class_name"], class_map)
        records.append(
            {
                "patch_id": rec["patch_id"],
                "class_name": rec["class_name"],
                "pos_raw": pos_raw,
                "neg_raw": neg_raw,
            }
        )
    out_doc = {"schema_version": SCHEMA_VERSION, "scores": records}
    manifest = AdapterManifest(
        model_name=model,
        model_version=SCORER_VERSION,
        images=tuple(str(p) for p in images),
        output=str(out_path),
        parameters={"logit_scale": LOGIT_SCALE, "detections": str(detections_path)},
    )
    return write_output_with_manifest(out_path, out_doc, manifest)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", nargs="*", default=[], help="image files or directories")
    parser.add_argument("--detections", required=True, help="detections_2d JSON input")
    parser.add_argument("--out", required=True, help="output scores JSON path")
    parser.add_argument("--model", default=BUILTIN_SCORER)
    args = parser.parse_args(argv)
    try:
        images = resolve_images(args.images)
        path = export_reflection_scores(images, args.detections, args.out, args.model)
    except (AdapterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"adapter": "scores", "images": len(images), "output": str(path)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
