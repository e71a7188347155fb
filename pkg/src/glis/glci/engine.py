"""Chain-of-thought refinement over one scene.

Stage order is fixed: a scene-level question, one class question per kept
proposal, then per-class plausibility checks whose verdicts gate removal
(low confidence) or reclassification (high confidence) of detections.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..baol import Proposal
from ..geometry import Box3D
from ..transport import TransportError
from .llm import LLMClient
from .prompts import (
    GLOBAL_PROMPT,
    IMPLAUSIBLE,
    LOCAL_PROMPT,
    match_vocabulary,
    parse_reclass,
    parse_verdict,
    render_plausibility_prompt,
    render_reclass_prompt,
)

STATUS_INITIAL = "initial"
STATUS_CONFIRMED = "confirmed"
STATUS_REMOVED = "removed"
STATUS_RECLASSIFIED = "reclassified"

STAGE_GLOBAL = "global"
STAGE_LOCAL = "local"
STAGE_COLLABORATIVE = "collaborative"


@dataclass(frozen=True)
class SceneContext:
    scene_type: str
    description: str
    global_feature: tuple[float, ...]


@dataclass(frozen=True)
class Detection:
    """A classified proposal moving through the refinement pipeline."""

    box: Box3D
    class_name: str
    objectness: float
    feature: tuple[float, ...]
    status: str = STATUS_INITIAL
    original_class: str | None = None
    flag: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objectness", float(self.objectness))
        object.__setattr__(self, "feature", tuple(float(v) for v in self.feature))
        if self.status == STATUS_RECLASSIFIED:
            if self.original_class is None or self.original_class == self.class_name:
                raise ValueError("reclassified detections need a distinct original_class")


@dataclass(frozen=True)
class TranscriptRecord:
    stage: str
    prompt: str
    answer: str
    decision: str

    def to_json(self) -> str:
        return json.dumps(
            {"stage": self.stage, "prompt": self.prompt, "answer": self.answer,
             "decision": self.decision},
            ensure_ascii=False,
        )


@dataclass
class Transcript:
    """Ordered record of one scene session's prompts, answers, decisions."""

    records: list[TranscriptRecord] = field(default_factory=list)

    def add(self, stage: str, prompt: str, answer: str, decision: str) -> None:
        self.records.append(TranscriptRecord(stage, prompt, answer, decision))

    def to_jsonl(self) -> str:
        return "".join(rec.to_json() + "\n" for rec in self.records)

    def decisions(self, prefix: str) -> list[str]:
        return [r.decision for r in self.records if r.decision.startswith(prefix)]


class SessionError(RuntimeError):
    """LLM transport failed mid-session; carries the partial transcript."""

    def __init__(self, message: str, transcript: Transcript):
        super().__init__(message)
        self.transcript = transcript


def _ask(client: LLMClient, prompt: str, context, transcript: Transcript) -> str:
    try:
        return client.complete(prompt, context)
    except TransportError as exc:
        raise SessionError(str(exc), transcript) from exc


def global_qa(
    client: LLMClient,
    global_feature: Sequence[float],
    scene_types: Sequence[str],
    transcript: Transcript | None = None,
) -> SceneContext:
    """Ask the scene-level question; parse the scene type out of the answer.

    The first recognized scene-type mention wins; with none, the scene is
    "unknown" and downstream checks treat every class as plausible.
    """
    feature = tuple(float(v) for v in global_feature)
    if not feature:
        raise ValueError("global feature must be nonempty")
    transcript = transcript if transcript is not None else Transcript()
    answer = _ask(client, GLOBAL_PROMPT, feature, transcript)
    scene = _first_mention(answer, scene_types) or "unknown"
    transcript.add(STAGE_GLOBAL, GLOBAL_PROMPT, answer, f"scene_type={scene}")
    return SceneContext(scene, answer, feature)


def _first_mention(answer: str, names: Sequence[str]) -> str | None:
    """Earliest mention in the answer; longest name wins on equal starts."""
    best: tuple[int, int] | None = None
    found = None
    for name in names:
        m = re.search(rf"\b{re.escape(name.lower())}\b", answer.lower())
        if m is None:
            continue
        key = (m.start(), -len(name))
        if best is None or key < best:
            best = key
            found = name
    return found


def local_qa(
    client: LLMClient,
    proposals: Sequence[Proposal],
    vocabulary: Sequence[str],
    transcript: Transcript | None = None,
) -> list[Detection]:
    """Ask "what is it?" per proposal and parse the class from the answer."""
    transcript = transcript if transcript is not None else Transcript()
    detections = []
    for prop in proposals:
        answer = _ask(client, LOCAL_PROMPT, prop.feature, transcript)
        cls = match_vocabulary(answer, list(vocabulary))
        flag = None
        if cls is None:
            cls = "unknown"
            flag = "local-answer-unparsed"
        transcript.add(STAGE_LOCAL, LOCAL_PROMPT, answer, f"class={cls}")
        detections.append(
            Detection(prop.box, cls, prop.objectness, prop.feature, STATUS_INITIAL, flag=flag)
        )
    return detections


def refine(
    client: LLMClient,
    detections: Sequence[Detection],
    scene: SceneContext,
    vocabulary: Sequence[str],
    phi_keep: float = 0.75,
    transcript: Transcript | None = None,
) -> tuple[list[Detection], Transcript]:
    """Plausibility-gate every detected class and act on the implausible ones.

    One check per distinct class (first-appearance order). Classes judged
    plausible or unknown are confirmed untouched. For an implausible class,
    detections below phi_keep are removed; those at or above it get one
    reclassification attempt and are confirmed with a flag if no corrected
    class can be parsed. Removed detections stay in the returned list (status
    "removed") so callers can audit them; serialized outputs exclude them.
    """
    transcript = transcript if transcript is not None else Transcript()
    result = list(detections)

    seen: list[str] = []
    for det in detections:
        if det.class_name not in seen:
            seen.append(det.class_name)

    for cls in seen:
        prompt = render_plausibility_prompt(cls, scene.scene_type)
        answer = _ask(client, prompt, None, transcript)
        verdict = parse_verdict(answer)
        transcript.add(STAGE_COLLABORATIVE, prompt, answer, f"verdict={verdict.value}")

        if verdict.value != IMPLAUSIBLE:
            for i, det in enumerate(result):
                if det.class_name == cls and det.status == STATUS_INITIAL:
                    result[i] = replace(det, status=STATUS_CONFIRMED)
            continue

        for i, det in enumerate(result):
            if det.class_name != cls or det.status != STATUS_INITIAL:
                continue
            if det.objectness < phi_keep:
                result[i] = replace(det, status=STATUS_REMOVED)
                transcript.add(
                    STAGE_COLLABORATIVE, "", "",
                    f"remove det={i} class={cls} objectness={det.objectness!r}",
                )
                continue
            reclass_prompt = render_reclass_prompt(cls)
            reclass_answer = _ask(client, reclass_prompt, det.feature, transcript)
            corrected = parse_reclass(reclass_answer, list(vocabulary), forbidden=cls)
            if corrected is None:
                result[i] = replace(det, status=STATUS_CONFIRMED, flag="reclass-unparsed")
                decision = f"keep det={i} class={cls} (no reclass parsed)"
            else:
                result[i] = replace(
                    det, status=STATUS_RECLASSIFIED, class_name=corrected, original_class=cls
                )
                decision = f"reclass det={i} {cls}->{corrected}"
            transcript.add(STAGE_COLLABORATIVE, reclass_prompt, reclass_answer, decision)

    return result, transcript


def run_session(
    client: LLMClient,
    proposals: Sequence[Proposal],
    global_feature: Sequence[float],
    scene_types: Sequence[str],
    vocabulary: Sequence[str],
    phi_keep: float = 0.75,
) -> tuple[SceneContext, list[Detection], Transcript]:
    """Full per-scene session over already-selected proposals."""
    transcript = Transcript()
    scene = global_qa(client, global_feature, scene_types, transcript)
    detections = local_qa(client, proposals, vocabulary, transcript)
    final, transcript = refine(client, detections, scene, vocabulary, phi_keep, transcript)
    return scene, final, transcript
