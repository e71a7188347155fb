"""Export 2D detections in the pipeline's detections_2d schema.

The builtin detector thresholds each hue band and reports connected
high-contrast regions as boxes; the scene id is the image stem. Raw
detections only: no confidence filtering, no lifting, no scoring.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import cv2

from .colorlex import DEFAULT_CLASS_MAP, band_mask
from .common import (
    SCHEMA_VERSION,
    AdapterError,
    AdapterManifest,
    load_image_bgr,
    resolve_images,
    write_output_with_manifest,
)

BUILTIN_DETECTOR = "builtin-hsv-contour"
DETECTOR_VERSION = "1.0"
MIN_AREA_PX = 120


def detect_image(path: Path, class_map: dict[str, str]) -> list[dict]:
    """Color-band contour boxes for one image, in a stable order."""
    img = load_image_bgr(path)
    hsv = cv2.cvtColor(img, cv2.COLOR_BGR2HSV)
    found = []
    for color in sorted(class_map):
        mask = band_mask(hsv, color).astype("uint8") * 255
        contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
        for contour in contours:
            x, y, w, h = cv2.boundingRect(contour)
            if w * h < MIN_AREA_PX:
                continue
            found.append(
                {
                    "class_name": class_map[color],
                    "box2d": [float(x), float(y), float(x + w), float(y + h)],
                }
            )
    found.sort(key=lambda d: (d["box2d"][1], d["box2d"][0], d["class_name"]))
    return found


def export_2d_detections(
    images: list[Path],
    out_path,
    model: str = BUILTIN_DETECTOR,
    class_map: dict[str, str] | None = None,
) -> Path:
    if model != BUILTIN_DETECTOR:
        raise AdapterError(f"unknown detector model {model!r}; available: {BUILTIN_DETECTOR}")
    class_map = class_map or DEFAULT_CLASS_MAP
    records = []
    for image in images:
        stem = image.stem
        for i, det in enumerate(detect_image(image, class_map)):
            records.append(
                {
                    "scene_id": stem,
                    "image": image.name,
                    "patch_id": f"{stem}:{i:04d}",
                    "class_name": det["class_name"],
                    "box2d": det["box2d"],
                }
            )
    doc = {"schema_version": SCHEMA_VERSION, "detections": records}
    manifest = AdapterManifest(
        model_name=model,
        model_version=DETECTOR_VERSION,
        images=tuple(str(p) for p in images),
        output=str(out_path),
        parameters={"min_area_px": MIN_AREA_PX, "class_map": dict(sorted(class_map.items()))},
    )
    return write_output_with_manifest(out_path, doc, manifest)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", nargs="*", default=[], help="image files or directories")
    parser.add_argument("--out", required=True, help="output detections_2d JSON path")
    parser.add_argument("--model", default=BUILTIN_DETECTOR)
    parser.add_argument("--class-map", default=None,
                        help="JSON file mapping color names to class names")
    args = parser.parse_args(argv)
    class_map = None
    if args.class_map:
        class_map = json.loads(Path(args.class_map).read_text())
    try:
        images = resolve_images(args.images)
        path = export_2d_detections(images, args.out, args.model, class_map)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"adapter": "detections_2d", "images": len(images), "output": str(path)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
