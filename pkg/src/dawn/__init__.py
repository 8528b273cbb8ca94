"""Dependency-aware parallel decoding for masked-diffusion models.

The engine reads the model's own attention to build a per-step token
dependency graph (after filtering attention sinks), widens the set of
safely parallel commits around high-confidence anchors, and serializes
only genuinely conflicting positions.  A fully enumerable synthetic
oracle makes every behavioral claim checkable at desk scale; a wire
protocol client connects the same loops to a served real model.
"""

from .core import (
    DecodeState,
    DimensionMismatch,
    Oracle,
    OracleError,
    OracleUnavailable,
    ProtocolViolation,
    RowSumViolation,
    SamplerConfig,
    StepPrediction,
    preset_config,
    validate_config,
    validate_prediction,
)
from .depgraph import (
    DependencyGraph,
    build_graph,
    conflict_neighbors,
    detect_sinks,
    graph_from_attention,
    sink_report,
)
from .samplers import (
    RunMetrics,
    RunRow,
    decode_confidence,
    decode_dawn,
    decode_top1,
    run_comparison,
)
from .scheduler import (
    AnchorSet,
    UpdateSet,
    anchor_guided_select,
    collect_anchors,
    conflict_schedule,
    induced_positions,
    select_update_set,
)
from .toy import (
    ToyGrammar,
    ToyOracle,
    toy_exact_oracle,
    toy_predict,
    toy_validate,
)

__all__ = [
    "AnchorSet",
    "DecodeState",
    "DependencyGraph",
    "DimensionMismatch",
    "Oracle",
    "OracleError",
    "OracleUnavailable",
    "ProtocolViolation",
    "RowSumViolation",
    "RunMetrics",
    "RunRow",
    "SamplerConfig",
    "StepPrediction",
    "ToyGrammar",
    "ToyOracle",
    "UpdateSet",
    "anchor_guided_select",
    "build_graph",
    "collect_anchors",
    "conflict_neighbors",
    "conflict_schedule",
    "decode_confidence",
    "decode_dawn",
    "decode_top1",
    "detect_sinks",
    "graph_from_attention",
    "induced_positions",
    "preset_config",
    "run_comparison",
    "select_update_set",
    "sink_report",
    "toy_exact_oracle",
    "toy_predict",
    "toy_validate",
    "validate_config",
    "validate_prediction",
]

__version__ = "0.1.0"
