"""Desk-scale lidar open-vocabulary detection pipeline.

Geometry, pseudo-label generation, proposal supervision, LLM-guided
detection refinement, mAP evaluation, and a synthetic benchmark, glued
together by JSON artifacts and the `glis` command-line tool.
"""

from .baol import AssignmentLabels, MatchResult, Proposal, assign_labels, match_proposals, select_proposals
from .evaluator import EvalError, EvalReport, GroundTruthObject, average_precision, evaluate, match_detections
from .geometry import (
    BehindCameraError,
    Box2D,
    Box3D,
    EmptyFrustumError,
    GeometryError,
    InsufficientSupportError,
    Point3,
    PointCloud,
    ProjectionMatrix,
    corners,
    iou_2d,
    iou_3d,
    lift_box_2d_to_3d,
    project_point,
)
from .glci import (
    Detection,
    HttpLLMClient,
    KnowledgeBase,
    LLMClient,
    MockLLMClient,
    SceneContext,
    SessionError,
    Transcript,
    Verdict,
    global_qa,
    local_qa,
    mock_complete,
    parse_reclass,
    parse_verdict,
    refine,
    render_plausibility_prompt,
    render_reclass_prompt,
    run_session,
)
from .losses import LossWeights, TokenDistribution, cls_loss, conf_loss, scene_loss, text_loss, total_loss
from .rplg import (
    Label2D,
    PseudoLabel3D,
    ReflectionScore,
    filter_labels,
    generate_pseudo_labels,
    reflection_score,
    render_templates,
)
from .synthbench import NoiseModel, SynthConfig, TrialResult, run_experiment
from .transport import TransportError

__version__ = "0.1.0"
