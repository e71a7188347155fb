"""Deterministic sub-seed derivation for scene- and stage-scoped RNGs."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *scope: str) -> int:
    """Stable 64-bit sub-seed for (root seed, scope labels)."""
    text = ":".join([str(int(root_seed)), *scope])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def scoped_rng(root_seed: int, *scope: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *scope))
