"""Export per-image scene captions ({scene_type, description}).

The builtin captioner ranks the detector's color classes by pixel coverage
and maps the dominant one to a scene guess; the description lists what it
saw. Deterministic by construction.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import cv2
import numpy as np

from .colorlex import DEFAULT_CLASS_MAP, FALLBACK_SCENE, SCENE_RULES, band_mask
from .common import (
    SCHEMA_VERSION,
    AdapterError,
    AdapterManifest,
    load_image_bgr,
    resolve_images,
    write_output_with_manifest,
)

BUILTIN_CAPTIONER = "builtin-dominant-color"
CAPTIONER_VERSION = "1.0"
MIN_COVERAGE = 0.002  # ignore classes below 0.2% of the frame


def caption_image(path: Path, class_map: dict[str, str]) -> dict:
    img = load_image_bgr(path)
    hsv = cv2.cvtColor(img, cv2.COLOR_BGR2HSV)
    coverage = {}
    for color, cls in sorted(class_map.items()):
        frac = float(np.count_nonzero(band_mask(hsv, color))) / hsv[:, :, 0].size
        if frac >= MIN_COVERAGE:
            coverage[cls] = coverage.get(cls, 0.0) + frac
    ranked = sorted(coverage.items(), key=lambda kv: (-kv[1], kv[0]))
    if not ranked:
        return {
            "image": path.name,
            "scene_type": FALLBACK_SCENE,
            "description": "An empty room with no recognizable objects.",
        }
    dominant = ranked[0][0]
    scene = SCENE_RULES.get(dominant, FALLBACK_SCENE)
    listed = ", ".join(cls for cls, _ in ranked[:3])
    return {
        "image": path.name,
        "scene_type": scene,
        "description": f"A {scene} containing {listed}.",
    }


def export_captions(
    images: list[Path],
    out_path,
    model: str = BUILTIN_CAPTIONER,
    class_map: dict[str, str] | None = None,
) -> Path:
    if model != BUILTIN_CAPTIONER:
        raise AdapterError(f"unknown captioner model {model!r}; available: {BUILTIN_CAPTIONER}")
    class_map = class_map or DEFAULT_CLASS_MAP
    doc = {
        "schema_version": SCHEMA_VERSION,
        "captions": [caption_image(p, class_map) for p in images],
    }
    manifest = AdapterManifest(
        model_name=model,
        model_version=CAPTIONER_VERSION,
        images=tuple(str(p) for p in images),
        output=str(out_path),
        parameters={"min_coverage": MIN_COVERAGE},
    )
    return write_output_with_manifest(out_path, doc, manifest)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", nargs="*", default=[], help="image files or directories")
    parser.add_argument("--out", required=True, help="output captions JSON path")
    parser.add_argument("--model", default=BUILTIN_CAPTIONER)
    args = parser.parse_args(argv)
    try:
        images = resolve_images(args.images)
        path = export_captions(images, args.out, args.model)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"adapter": "captions", "images": len(images), "output": str(path)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
