"""LLM backends: a deterministic knowledge-base mock and an HTTP client.

The mock decodes feature vectors by nearest prototype. Prototypes are unit
basis vectors in a fixed layout: class i occupies dimension i, scene type j
occupies dimension len(classes) + j. Anything that produces features for the
mock (the synthetic benchmark, test fixtures) uses the same layout.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from ..transport import post_json
from .prompts import (
    GLOBAL_PROMPT,
    LOCAL_PROMPT,
    PLAUSIBILITY_TEMPLATE,
    RECLASS_TEMPLATE,
)

REFUSAL_ANSWER = "I cannot answer that."


def _template_to_regex(template: str) -> re.Pattern:
    parts = [re.escape(p) for p in template.split("{}")]
    return re.compile("^" + "(.+?)".join(parts) + "$")


PLAUSIBILITY_RE = _template_to_regex(PLAUSIBILITY_TEMPLATE)
RECLASS_RE = _template_to_regex(RECLASS_TEMPLATE)


@dataclass(frozen=True)
class KnowledgeBase:
    """Scene/class plausibility table plus per-scene class rankings."""

    scene_types: tuple[str, ...]
    classes: tuple[str, ...]
    plausible: Mapping[str, Mapping[str, bool]]
    class_prior: Mapping[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        if not self.scene_types or not self.classes:
            raise ValueError("knowledge base needs at least one scene type and one class")
        for scene in self.scene_types:
            table = self.plausible.get(scene)
            if table is None or set(table) != set(self.classes):
                raise ValueError(f"plausibility table incomplete for scene {scene!r}")
            expected = {c for c in self.classes if table[c]}
            ranking = self.class_prior.get(scene)
            if ranking is None or set(ranking) != expected or len(ranking) != len(expected):
                raise ValueError(f"class_prior for {scene!r} is not a permutation of its plausible classes")

    @property
    def feature_dim(self) -> int:
        return len(self.classes) + len(self.scene_types)

    def plausible_classes(self, scene_type: str) -> tuple[str, ...]:
        return tuple(self.class_prior[scene_type])

    @classmethod
    def from_doc(cls, doc: dict) -> "KnowledgeBase":
        return cls(
            scene_types=tuple(doc["scene_types"]),
            classes=tuple(doc["classes"]),
            plausible={s: dict(t) for s, t in doc["plausible"].items()},
            class_prior={s: tuple(r) for s, r in doc["class_prior"].items()},
        )

    @classmethod
    def from_file(cls, path) -> "KnowledgeBase":
        with open(path, encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))

    def to_doc(self) -> dict:
        return {
            "schema_version": 1,
            "scene_types": list(self.scene_types),
            "classes": list(self.classes),
            "plausible": {s: {c: bool(v) for c, v in t.items()} for s, t in self.plausible.items()},
            "class_prior": {s: list(r) for s, r in self.class_prior.items()},
        }


def class_prototype(kb: KnowledgeBase, class_name: str, dim: int | None = None) -> np.ndarray:
    vec = np.zeros(dim or kb.feature_dim)
    vec[kb.classes.index(class_name)] = 1.0
    return vec


def scene_prototype(kb: KnowledgeBase, scene_type: str, dim: int | None = None) -> np.ndarray:
    vec = np.zeros(dim or kb.feature_dim)
    vec[len(kb.classes) + kb.scene_types.index(scene_type)] = 1.0
    return vec


def decode_class(kb: KnowledgeBase, feature: Sequence[float]) -> str | None:
    """Nearest class prototype by dot product; None if the vector is too short."""
    arr = np.asarray(feature, dtype=float)
    if arr.ndim != 1 or arr.shape[0] < kb.feature_dim:
        return None
    return kb.classes[int(np.argmax(arr[: len(kb.classes)]))]


def decode_scene(kb: KnowledgeBase, feature: Sequence[float]) -> str | None:
    arr = np.asarray(feature, dtype=float)
    if arr.ndim != 1 or arr.shape[0] < kb.feature_dim:
        return None
    span = arr[len(kb.classes) : kb.feature_dim]
    return kb.scene_types[int(np.argmax(span))]


def mock_complete(
    kb: KnowledgeBase,
    prompt: str,
    context: Sequence[float] | None = None,
    scene_type: str | None = None,
) -> str:
    """Deterministic stand-in for the LLM.

    Scene and class questions decode the context vector by nearest prototype;
    plausibility questions read the knowledge-base table; reclassification
    answers the top-ranked plausible class for `scene_type`, excluding the
    rejected one. Unparseable prompts get a fixed refusal.
    """
    if prompt == GLOBAL_PROMPT:
        scene = decode_scene(kb, context) if context is not None else None
        if scene is None:
            return REFUSAL_ANSWER
        ranking = kb.class_prior.get(scene, ())
        if ranking:
            return f"It is mostly like a {scene}. There is a {ranking[0]} in the scene."
        return f"It is mostly like a {scene}."

    if prompt == LOCAL_PROMPT:
        cls = decode_class(kb, context) if context is not None else None
        if cls is None:
            return REFUSAL_ANSWER
        return f"It is a {cls}."

    m = PLAUSIBILITY_RE.match(prompt)
    if m:
        cls, scene = m.group(1), m.group(2)
        table = kb.plausible.get(scene)
        if table is None or cls not in table:
            return REFUSAL_ANSWER
        if table[cls]:
            return f"It is normal to see a {cls} in a {scene}."
        return f"It is not normal to see a {cls} in a {scene}."

    m = RECLASS_RE.match(prompt)
    if m:
        forbidden = m.group(1)
        scene = scene_type if scene_type in kb.class_prior else kb.scene_types[0]
        candidates = [c for c in kb.class_prior[scene] if c != forbidden]
        if not candidates:
            return REFUSAL_ANSWER
        return f"It is probably a {candidates[0]}."

    return REFUSAL_ANSWER


class LLMClient(Protocol):
    """Answer prompts, optionally grounded in a feature-vector context."""

    accepts_feature_context: bool
    concurrent_safe: bool

    def complete(self, prompt: str, context: Sequence[float] | None = None) -> str: ...


class MockLLMClient:
    """Knowledge-base mock; remembers the scene it identified in a session."""

    accepts_feature_context = True
    concurrent_safe = False  # session state; use one client per scene session

    def __init__(self, kb: KnowledgeBase, scene_type: str | None = None):
        self.kb = kb
        self._scene = scene_type

    def complete(self, prompt: str, context: Sequence[float] | None = None) -> str:
        answer = mock_complete(self.kb, prompt, context, self._scene)
        if prompt == GLOBAL_PROMPT and answer != REFUSAL_ANSWER:
            scene = decode_scene(self.kb, context) if context is not None else None
            if scene is not None:
                self._scene = scene
        else:
            m = PLAUSIBILITY_RE.match(prompt)
            if m and m.group(2) in self.kb.scene_types:
                self._scene = m.group(2)
        return answer


def build_context_digest(kb: KnowledgeBase, feature: Sequence[float], top_k: int = 3) -> str:
    """Textual stand-in for a feature vector: top class/scene candidate scores."""
    arr = np.asarray(feature, dtype=float)

    def ranked(names: tuple[str, ...], scores: np.ndarray) -> str:
        order = np.argsort(-scores, kind="stable")[:top_k]
        return ", ".join(f"{names[i]}={scores[i]:.3f}" for i in order)

    n_cls = len(kb.classes)
    cls_scores = arr[:n_cls] if arr.shape[0] >= n_cls else np.zeros(n_cls)
    scene_scores = (
        arr[n_cls : kb.feature_dim] if arr.shape[0] >= kb.feature_dim else np.zeros(len(kb.scene_types))
    )
    return f"classes: {ranked(kb.classes, cls_scores)}; scenes: {ranked(kb.scene_types, scene_scores)}"


class HttpLLMClient:
    """Remote LLM endpoint speaking {prompt, context_digest} -> {answer}.

    The wire format has no room for raw vectors, so when a knowledge base is
    available the context is summarized into a candidate-score digest.
    """

    accepts_feature_context = False
    concurrent_safe = True

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2,
                 kb: KnowledgeBase | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.kb = kb

    def complete(self, prompt: str, context: Sequence[float] | None = None) -> str:
        digest = ""
        if context is not None and self.kb is not None:
            digest = build_context_digest(self.kb, context)
        reply = post_json(self.endpoint, {"prompt": prompt, "context_digest": digest},
                          self.timeout, self.retries)
        answer = reply.get("answer")
        if not isinstance(answer, str):
            from ..transport import TransportError

            raise TransportError(f"{self.endpoint} reply lacks string 'answer'")
        return answer
