"""slidetrace: whole-slide viewer logs -> behavioral commands -> reviewed
chain-of-thought rounds, with the evaluation and review machinery around them.
"""

from .geometry import Box, ciou_loss, containment_fraction, iou, union_box
from .logs import (
    EmptySession,
    MalformedLine,
    SchemaError,
    SessionLog,
    SlideMeta,
    ViewportEvent,
    Violation,
    parse_session_log,
    serialize_session_log,
    validate_session,
)
from .segmenter import (
    PAN_INSPECT,
    PEEK,
    STAY_INSPECT,
    SegmenterConfig,
    VlmAction,
    filter_big_bboxes,
    filter_mostly_contained,
    merge_similar,
    run_pipeline,
    segment_actions,
    standardize_action_bboxes,
)
from .gateway import (
    BOX_CLASSES,
    CELL_CLASSES_40X,
    DEFAULT_TASK,
    ChatTurn,
    CostModel,
    DiagnosticInfo,
    ModelEndpoint,
    PromptContext,
    PromptStage,
    ScriptedEndpoint,
    build_prompt,
    parse_diagnostic_info,
    parse_multilabel,
    parse_tagged,
    send_with_retry,
)
from .dataset import (
    CotRound,
    DatasetStats,
    Rationale,
    ReviewDecision,
    RoundSplit,
    assemble_rounds,
    command_token,
    dataset_stats,
    emit_conversation,
    parse_command_token,
)
from .orchestrator import (
    CaseResult,
    OrderPolicy,
    RegionProposer,
    StaticProposer,
    case_result_to_json,
    permute_rois,
    run_case,
)
from .metrics import (
    ConfusionCounts,
    HitMatching,
    TimingRecord,
    bce_loss,
    bootstrap_ci,
    classification_metrics,
    efficiency_completeness,
    match_hits,
    paired_bootstrap_test,
    timing_summary,
)
from .images import CropRequest, FileCropProvider, ImageRef, StubCropProvider
from .review import ReviewStore, ReviewTask, sentence_segment

__version__ = "0.1.0"
