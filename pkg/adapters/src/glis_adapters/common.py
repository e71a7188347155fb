"""Shared adapter plumbing: manifests, atomic output, image loading."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

SCHEMA_VERSION = 1  # must match the pipeline's interchange version


class AdapterError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdapterManifest:
    """What ran, over which inputs, into which file, with which knobs."""

    model_name: str
    model_version: str
    images: tuple[str, ...]
    output: str
    parameters: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_name": self.model_name,
            "model_version": self.model_version,
            "images": list(self.images),
            "output": self.output,
            "parameters": dict(self.parameters),
        }


def write_json_atomic(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_output_with_manifest(out_path, doc: dict, manifest: AdapterManifest) -> Path:
    out_path = Path(out_path)
    write_json_atomic(out_path, doc)
    write_json_atomic(out_path.with_suffix(out_path.suffix + ".manifest.json"), manifest.to_doc())
    return out_path


def resolve_images(image_args: list[str]) -> list[Path]:
    """Expand files/directories into a sorted, de-duplicated image list."""
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    found: list[Path] = []
    for arg in image_args:
        path = Path(arg)
        if path.is_dir():
            found.extend(p for p in sorted(path.iterdir()) if p.suffix.lower() in exts)
        elif path.exists():
            found.append(path)
        else:
            raise AdapterError(f"image path does not exist: {path}")
    unique = sorted(set(found))
    return unique


def load_image_bgr(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise AdapterError(f"unreadable image: {path}")
    return img
