"""Prompt templates and answer parsing for the collaborative inference loop."""

from __future__ import annotations

import re
from dataclasses import dataclass

GLOBAL_PROMPT = "What kind of scene is it mostly like? Describe the scene."
LOCAL_PROMPT = "What is it?"
PLAUSIBILITY_TEMPLATE = "Is it normal to see a {} in a {}?"
RECLASS_TEMPLATE = (
    "If the object is not a {}, what is it probably based on the scene "
    "description and the object feature?"
)

PLAUSIBLE = "plausible"
IMPLAUSIBLE = "implausible"
UNKNOWN = "unknown"

# implausible wins only on an explicit negated-normality pattern
_NEGATION_PATTERNS = ("not normal", "unusual", "not common", "unlikely")
_AFFIRMATIVE_PATTERNS = ("normal", "common", "likely", "yes")


@dataclass(frozen=True)
class Verdict:
    value: str  # plausible | implausible | unknown
    raw_answer: str


def render_plausibility_prompt(class_name: str, scene_type: str) -> str:
    if not class_name.strip() or not scene_type.strip():
        raise ValueError("class_name and scene_type must be nonempty")
    return PLAUSIBILITY_TEMPLATE.format(class_name, scene_type)


def render_reclass_prompt(class_name: str) -> str:
    if not class_name.strip():
        raise ValueError("class_name must be nonempty")
    return RECLASS_TEMPLATE.format(class_name)


def _classify_segment(segment: str) -> str:
    if any(p in segment for p in _NEGATION_PATTERNS):
        return IMPLAUSIBLE
    if any(p in segment for p in _AFFIRMATIVE_PATTERNS):
        return PLAUSIBLE
    return UNKNOWN


def parse_verdict(answer: str) -> Verdict:
    """Classify an answer as plausible/implausible/unknown.

    Case-insensitive; the first sentence decides when it is decisive,
    otherwise the full answer is scanned.
    """
    lowered = answer.lower()
    first_sentence = re.split(r"(?<=[.!?])\s+", lowered.strip(), maxsplit=1)[0]
    verdict = _classify_segment(first_sentence)
    if verdict == UNKNOWN:
        verdict = _classify_segment(lowered)
    return Verdict(verdict, answer)


def match_vocabulary(answer: str, vocabulary: list[str], exclude: str | None = None) -> str | None:
    """Longest vocabulary term mentioned in the answer.

    Whole-word, case-insensitive matching; ties broken by earliest mention,
    then vocabulary order. `exclude` removes one term from consideration.
    """
    lowered = answer.lower()
    best: tuple[int, int, int] | None = None  # (-len, position, vocab index)
    best_term: str | None = None
    for idx, term in enumerate(vocabulary):
        if exclude is not None and term.lower() == exclude.lower():
            continue
        m = re.search(rf"\b{re.escape(term.lower())}\b", lowered)
        if m is None:
            continue
        key = (-len(term), m.start(), idx)
        if best is None or key < best:
            best = key
            best_term = term
    return best_term


def parse_reclass(answer: str, vocabulary: list[str], forbidden: str) -> str | None:
    """Corrected class named in a reclassification answer, if any."""
    return match_vocabulary(answer, vocabulary, exclude=forbidden)
