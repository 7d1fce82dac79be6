"""Merge-aware admission control for a deadline-driven batch queue, with a
discrete-event simulator and a video-transcoding workload generator."""

from .assessor import adaptive_alpha, osl, osl_observed
from .engine import (
    Engine,
    EngineConfig,
    MergePolicyMode,
    MetricsReport,
    Outcome,
    paired_comparison,
    run,
)
from .impact import Decision, ImpactReport, MachineView, SystemSnapshot, decide, evaluate_merge
from .model import (
    MergedTask,
    OperationSpec,
    OpType,
    SharingFactors,
    SimilarityLevel,
    Task,
    estimated_execution_time,
    urgency,
    waitable_time,
)
from .policy import QueuingPolicy
from .position import Heuristic, PositionDecision, PositionMode, find_position, position_maintained
from .similarity import SimilarityIndex, similarity
from .tracegen import DeadlineModel, ExecProfile, WorkloadSpec, generate, load_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "DeadlineModel", "Decision", "Engine", "EngineConfig", "ExecProfile", "Heuristic",
    "ImpactReport", "MachineView", "MergePolicyMode", "MergedTask", "MetricsReport",
    "OpType", "OperationSpec", "Outcome", "PositionDecision", "PositionMode", "QueuingPolicy",
    "SharingFactors", "SimilarityIndex", "SimilarityLevel", "SystemSnapshot", "Task",
    "WorkloadSpec", "adaptive_alpha", "decide", "estimated_execution_time", "evaluate_merge",
    "find_position", "generate", "load_trace", "osl", "osl_observed", "paired_comparison",
    "position_maintained", "run", "save_trace", "similarity", "urgency", "waitable_time",
]
