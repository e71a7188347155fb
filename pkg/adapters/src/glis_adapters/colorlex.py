"""The builtin model family: a hue-band lexicon shared by all three adapters.

Weight downloads are not assumed anywhere; the builtin backends are pure
pixel arithmetic, so reruns are bit-stable. Hue is OpenCV's H in [0, 180).
"""

from __future__ import annotations

import numpy as np

# (hue_low, hue_high) bands; red wraps around 0
HUE_BANDS: dict[str, tuple[int, int]] = {
    "red": (-10, 10),
    "yellow": (20, 35),
    "green": (40, 85),
    "cyan": (86, 99),
    "blue": (100, 130),
    "magenta": (140, 170),
}

# default detector vocabulary: color -> object class
DEFAULT_CLASS_MAP: dict[str, str] = {
    "red": "chair",
    "green": "sofa",
    "blue": "table",
    "yellow": "bed",
    "cyan": "cabinet",
    "magenta": "bookshelf",
}

# dominant detected class -> scene guess, for the captioner
SCENE_RULES: dict[str, str] = {
    "chair": "conference room",
    "sofa": "conference room",
    "table": "conference room",
    "bed": "bedroom",
    "cabinet": "bathroom",
    "bookshelf": "library",
}
FALLBACK_SCENE = "room"

MIN_SATURATION = 80
MIN_VALUE = 60


def band_mask(hsv: np.ndarray, color: str) -> np.ndarray:
    """Boolean mask of pixels falling in a named hue band."""
    lo, hi = HUE_BANDS[color]
    h = hsv[:, :, 0].astype(int)
    if lo < 0:  # wrap-around band
        in_band = (h >= 180 + lo) | (h <= hi)
    else:
        in_band = (h >= lo) & (h <= hi)
    return in_band & (hsv[:, :, 1] >= MIN_SATURATION) & (hsv[:, :, 2] >= MIN_VALUE)


def color_affinity(hsv_patch: np.ndarray, color: str) -> float:
    """Fraction of patch pixels matching the color band, in [0, 1]."""
    mask = band_mask(hsv_patch, color)
    if mask.size == 0:
        return 0.0
    return float(np.count_nonzero(mask)) / mask.size


def class_color(class_name: str, class_map: dict[str, str]) -> str | None:
    for color, cls in class_map.items():
        if cls == class_name:
            return color
    return None
