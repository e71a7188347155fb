"""Global-local collaborative inference: prompts, LLM backends, session engine."""

from .engine import (
    STAGE_COLLABORATIVE,
    STAGE_GLOBAL,
    STAGE_LOCAL,
    STATUS_CONFIRMED,
    STATUS_INITIAL,
    STATUS_RECLASSIFIED,
    STATUS_REMOVED,
    Detection,
    SceneContext,
    SessionError,
    Transcript,
    TranscriptRecord,
    global_qa,
    local_qa,
    refine,
    run_session,
)
from .llm import (
    REFUSAL_ANSWER,
    HttpLLMClient,
    KnowledgeBase,
    LLMClient,
    MockLLMClient,
    build_context_digest,
    class_prototype,
    decode_class,
    decode_scene,
    mock_complete,
    scene_prototype,
)
from .prompts import (
    GLOBAL_PROMPT,
    IMPLAUSIBLE,
    LOCAL_PROMPT,
    PLAUSIBLE,
    UNKNOWN,
    Verdict,
    match_vocabulary,
    parse_reclass,
    parse_verdict,
    render_plausibility_prompt,
    render_reclass_prompt,
)

__all__ = [
    "Detection",
    "GLOBAL_PROMPT",
    "HttpLLMClient",
    "IMPLAUSIBLE",
    "KnowledgeBase",
    "LLMClient",
    "LOCAL_PROMPT",
    "MockLLMClient",
    "PLAUSIBLE",
    "REFUSAL_ANSWER",
    "STAGE_COLLABORATIVE",
    "STAGE_GLOBAL",
    "STAGE_LOCAL",
    "STATUS_CONFIRMED",
    "STATUS_INITIAL",
    "STATUS_RECLASSIFIED",
    "STATUS_REMOVED",
    "SceneContext",
    "SessionError",
    "Transcript",
    "TranscriptRecord",
    "UNKNOWN",
    "Verdict",
    "build_context_digest",
    "class_prototype",
    "decode_class",
    "decode_scene",
    "global_qa",
    "local_qa",
    "match_vocabulary",
    "mock_complete",
    "parse_reclass",
    "parse_verdict",
    "refine",
    "render_plausibility_prompt",
    "render_reclass_prompt",
    "run_session",
    "scene_prototype",
]
